//! Sampling and log-density kernels for the four distributions the game is
//! built from: multivariate normal (precision parameterization), Wishart,
//! normal-Wishart, and categorical over log-weights.
//!
//! Everything downstream works in log space; this module never returns a raw
//! density. The Wishart uses the scale convention `E[Λ] = ν·β`.

use std::sync::OnceLock;

use crate::linalg::{self, Matrix};
use crate::rng::RngStream;
use crate::Scalar;

/// Relative tolerance for the symmetry check on SPD matrix construction.
const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Diagonal jitter escalation tried when a factorization hits a non-positive
/// pivot. Collapsed mixture components can produce near-singular empirical
/// precisions early in training.
const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error("matrix of dim {dim} is not positive definite after jitter escalation")]
    NotPositiveDefinite { dim: usize },
    #[error("matrix is not symmetric within relative tolerance {SYMMETRY_REL_TOL}")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("wishart dof {nu} must exceed dim - 1 = {}", dim - 1)]
    InvalidDof { nu: f64, dim: usize },
    #[error("hyperparameter {name} = {value} out of range")]
    InvalidHyper { name: &'static str, value: f64 },
    #[error("categorical log-weights contain no finite entry")]
    AllNegInfinity,
}

/// Symmetric positive definite matrix with a lazily computed, cached
/// lower-triangular Cholesky factor.
#[derive(Debug)]
pub struct SpdMatrix<S> {
    data: Matrix<S>,
    chol: OnceLock<Result<Matrix<S>, ProbError>>,
}

impl<S: Clone> Clone for SpdMatrix<S> {
    fn clone(&self) -> Self {
        let chol = OnceLock::new();
        if let Some(c) = self.chol.get() {
            let _ = chol.set(c.clone());
        }
        Self { data: self.data.clone(), chol }
    }
}

impl<S: PartialEq> PartialEq for SpdMatrix<S> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl<S: Scalar> SpdMatrix<S> {
    pub fn new(data: Matrix<S>) -> Result<Self, ProbError> {
        if data.rows() != data.cols() {
            return Err(ProbError::DimensionMismatch {
                expected: data.rows(),
                got: data.cols(),
            });
        }
        if !data.is_symmetric(SYMMETRY_REL_TOL) {
            return Err(ProbError::NotSymmetric);
        }
        Ok(Self { data, chol: OnceLock::new() })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_symmetric_unchecked(Matrix::identity(dim))
    }

    pub fn scaled_identity(dim: usize, v: S) -> Self {
        Self::from_symmetric_unchecked(Matrix::scaled_identity(dim, v))
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(data: Matrix<S>) -> Self {
        Self { data, chol: OnceLock::new() }
    }

    /// `m · mᵀ` for lower-triangular-ish `m`, symmetrized exactly.
    pub(crate) fn from_product(m: &Matrix<S>) -> Self {
        let n = m.rows();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = linalg::dot(m.row(i), m.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Self::from_symmetric_unchecked(out)
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.data
    }

    /// Scales the matrix by a positive factor (SPD is preserved).
    pub fn scaled(&self, factor: S) -> Self {
        let mut m = self.data.clone();
        for v in m.data_mut() {
            *v = *v * factor;
        }
        Self::from_symmetric_unchecked(m)
    }

    /// Cached lower Cholesky factor, with jitter escalation on pivot failure.
    pub fn chol(&self) -> Result<&Matrix<S>, ProbError> {
        let dim = self.dim();
        self.chol
            .get_or_init(|| {
                for delta in JITTER_SCHEDULE {
                    let candidate = if delta == 0.0 {
                        self.data.clone()
                    } else {
                        let mut m = self.data.clone();
                        let d = S::cast_from(delta);
                        for i in 0..dim {
                            m[(i, i)] = m[(i, i)] + d;
                        }
                        m
                    };
                    if let Some(l) = linalg::cholesky_lower(&candidate) {
                        return Ok(l);
                    }
                }
                Err(ProbError::NotPositiveDefinite { dim })
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// `log det` via the Cholesky factor: `2 Σ log diag(L)`.
    pub fn log_det(&self) -> Result<S, ProbError> {
        let l = self.chol()?;
        let mut acc = S::zero();
        for i in 0..self.dim() {
            acc = acc + l[(i, i)].ln();
        }
        Ok(acc + acc)
    }

    /// Quadratic form `vᵀ M v = |Lᵀ v|²`.
    pub fn quad_form(&self, v: &[S]) -> Result<S, ProbError> {
        if v.len() != self.dim() {
            return Err(ProbError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let l = self.chol()?;
        let n = self.dim();
        let mut acc = S::zero();
        for i in 0..n {
            let mut y = S::zero();
            for j in i..n {
                y = y + l[(j, i)] * v[j];
            }
            acc = acc + y * y;
        }
        Ok(acc)
    }

    pub fn inverse(&self) -> Result<Matrix<S>, ProbError> {
        Ok(linalg::spd_inverse_from_chol(self.chol()?))
    }
}

/// Normal-Wishart hyperparameters `(m, α, ν, β)` governing component
/// generation: `Λ ~ W(ν, β)`, `μ | Λ ~ N(m, (αΛ)⁻¹)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NwHyper<S> {
    pub m: Vec<S>,
    pub alpha: S,
    pub nu: S,
    pub beta: SpdMatrix<S>,
}

impl<S: Scalar> NwHyper<S> {
    pub fn new(m: Vec<S>, alpha: S, nu: S, beta: SpdMatrix<S>) -> Result<Self, ProbError> {
        let dim = beta.dim();
        if m.len() != dim {
            return Err(ProbError::DimensionMismatch { expected: dim, got: m.len() });
        }
        if !(alpha > S::zero()) {
            return Err(ProbError::InvalidHyper { name: "alpha", value: alpha.cast_f64() });
        }
        if !(nu.cast_f64() > dim as f64 - 1.0) {
            return Err(ProbError::InvalidDof { nu: nu.cast_f64(), dim });
        }
        Ok(Self { m, alpha, nu, beta })
    }

    /// `α = 1, m = 0, β = 0.05·I, ν = max(12, L)`.
    pub fn defaults(latent_dim: usize) -> Self {
        let nu = 12.0_f64.max(latent_dim as f64);
        Self {
            m: vec![S::zero(); latent_dim],
            alpha: S::one(),
            nu: S::cast_from(nu),
            beta: SpdMatrix::scaled_identity(latent_dim, S::cast_from(0.05)),
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }
}

/// `log N(x; mean, Λ⁻¹)` with `Λ` given as the precision matrix.
pub fn mvn_logpdf<S: Scalar>(
    x: &[S],
    mean: &[S],
    precision: &SpdMatrix<S>,
) -> Result<S, ProbError> {
    let dim = precision.dim();
    if x.len() != dim {
        return Err(ProbError::DimensionMismatch { expected: dim, got: x.len() });
    }
    if mean.len() != dim {
        return Err(ProbError::DimensionMismatch { expected: dim, got: mean.len() });
    }
    let delta = linalg::sub(x, mean);
    let quad = precision.quad_form(&delta)?;
    let half = S::cast_from(0.5);
    Ok(half * precision.log_det()? - half * S::cast_from(dim as f64) * S::ln_2pi() - half * quad)
}

/// Draws from `N(mean, Λ⁻¹)` as `mean + L⁻ᵀ ε`, `Λ = L Lᵀ`, `ε ~ N(0, I)`.
pub fn sample_mvn<S: Scalar>(
    mean: &[S],
    precision: &SpdMatrix<S>,
    rng: &mut RngStream,
) -> Result<Vec<S>, ProbError> {
    let dim = precision.dim();
    if mean.len() != dim {
        return Err(ProbError::DimensionMismatch { expected: dim, got: mean.len() });
    }
    let l = precision.chol()?;
    let eps: Vec<S> = (0..dim).map(|_| rng.standard_normal()).collect();
    let y = linalg::solve_lower_transpose(l, &eps);
    Ok(mean.iter().zip(&y).map(|(m, v)| *m + *v).collect())
}

/// Bartlett-decomposition Wishart draw with `E[Λ] = ν·scale`.
pub fn sample_wishart<S: Scalar>(
    nu: S,
    scale: &SpdMatrix<S>,
    rng: &mut RngStream,
) -> Result<SpdMatrix<S>, ProbError> {
    let dim = scale.dim();
    let nu_f = nu.cast_f64();
    if !(nu_f > dim as f64 - 1.0) {
        return Err(ProbError::InvalidDof { nu: nu_f, dim });
    }
    let c = scale.chol()?;
    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        a[(i, i)] = rng.chi_squared::<S>(nu_f - i as f64).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    let ca = c.matmul(&a);
    Ok(SpdMatrix::from_product(&ca))
}

/// Joint draw `(μ, Λ)` from the normal-Wishart distribution.
pub fn sample_normal_wishart<S: Scalar>(
    hyper: &NwHyper<S>,
    rng: &mut RngStream,
) -> Result<(Vec<S>, SpdMatrix<S>), ProbError> {
    let lambda = sample_wishart(hyper.nu, &hyper.beta, rng)?;
    let mean_precision = lambda.scaled(hyper.alpha);
    let mu = sample_mvn(&hyper.m, &mean_precision, rng)?;
    Ok((mu, lambda))
}

pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs
        .iter()
        .filter(|v| v.is_finite())
        .fold(S::neg_infinity(), |m, v| m.max(*v));
    if !max.is_finite() {
        return S::neg_infinity();
    }
    let sum = xs.iter().fold(S::zero(), |acc, v| {
        if v.is_finite() {
            acc + (*v - max).exp()
        } else {
            acc
        }
    });
    max + sum.ln()
}

/// Samples an index with probability `exp(lw_k − logsumexp(lw))`.
/// Non-finite entries are treated as zero-probability outcomes.
pub fn sample_categorical_log<S: Scalar>(
    log_weights: &[S],
    rng: &mut RngStream,
) -> Result<usize, ProbError> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(ProbError::AllNegInfinity);
    }
    let u: S = rng.uniform();
    let mut acc = S::zero();
    let mut last_valid = 0;
    for (k, lw) in log_weights.iter().enumerate() {
        if !lw.is_finite() {
            continue;
        }
        last_valid = k;
        acc = acc + (*lw - lse).exp();
        if u < acc {
            return Ok(k);
        }
    }
    // Round-off pushed the cumulative sum fractionally below 1.
    Ok(last_valid)
}
