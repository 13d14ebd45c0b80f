//! Conjugate normal-Wishart Gibbs machinery for the K-component Gaussian
//! mixture over agent latents: component resampling, sign proposals, the MH
//! acceptance probability, and the centralized topline sign sampler.

use crate::linalg::Matrix;
use crate::probability::{
    self, mvn_logpdf, sample_categorical_log, sample_normal_wishart, NwHyper, ProbError,
    SpdMatrix,
};
use crate::rng::RngStream;
use crate::Scalar;

/// A sign is the categorical index exchanged between agents — the only datum
/// that ever crosses the agent boundary.
pub type Sign = usize;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GmmError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("component sets disagree on K: {a} vs {b}")]
    KMismatch { a: usize, b: usize },
    #[error("sign {sign} out of range for K = {k}")]
    SignOutOfRange { sign: Sign, k: usize },
    #[error("length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Per-object sign assignments of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct SignVector(Vec<Sign>);

impl SignVector {
    pub fn new(w: Vec<Sign>) -> Self {
        Self(w)
    }

    /// i.i.d. uniform initialization over `0..k`.
    pub fn uniform_init(d: usize, k: usize, rng: &mut RngStream) -> Self {
        Self((0..d).map(|_| rng.index(k)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, d: usize) -> Sign {
        self.0[d]
    }

    pub fn set(&mut self, d: usize, w: Sign) {
        self.0[d] = w;
    }

    pub fn as_slice(&self) -> &[Sign] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sign> {
        self.0.iter()
    }
}

impl From<Vec<Sign>> for SignVector {
    fn from(w: Vec<Sign>) -> Self {
        Self(w)
    }
}

/// One mixture component: mean and precision of the sign's Gaussian region.
#[derive(Clone, Debug, PartialEq)]
pub struct Component<S> {
    pub mu: Vec<S>,
    pub lambda: SpdMatrix<S>,
}

/// The K components of one agent's mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet<S> {
    components: Vec<Component<S>>,
}

impl<S: Scalar> ComponentSet<S> {
    pub fn new(components: Vec<Component<S>>) -> Result<Self, GmmError> {
        if let Some(first) = components.first() {
            let dim = first.mu.len();
            for c in &components {
                if c.mu.len() != dim || c.lambda.dim() != dim {
                    return Err(ProbError::DimensionMismatch {
                        expected: dim,
                        got: c.mu.len(),
                    }
                    .into());
                }
            }
        }
        Ok(Self { components })
    }

    /// K independent draws from the normal-Wishart prior.
    pub fn from_prior(k: usize, hyper: &NwHyper<S>, rng: &mut RngStream) -> Result<Self, GmmError> {
        let mut components = Vec::with_capacity(k);
        for _ in 0..k {
            let (mu, lambda) = sample_normal_wishart(hyper, rng)?;
            components.push(Component { mu, lambda });
        }
        Ok(Self { components })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mu.len())
    }

    pub fn component(&self, k: Sign) -> Result<&Component<S>, GmmError> {
        self.components
            .get(k)
            .ok_or(GmmError::SignOutOfRange { sign: k, k: self.k() })
    }

    pub fn components(&self) -> &[Component<S>] {
        &self.components
    }
}

/// Mixture log-weights, normalized so `logsumexp(log_pi) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureWeights<S> {
    log_pi: Vec<S>,
}

impl<S: Scalar> MixtureWeights<S> {
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self { log_pi: vec![-S::cast_from((k as f64).ln()); k] }
    }

    pub fn from_weights(weights: &[S]) -> Self {
        let log: Vec<S> = weights.iter().map(|w| w.ln()).collect();
        let lse = probability::log_sum_exp(&log);
        Self { log_pi: log.iter().map(|l| *l - lse).collect() }
    }

    pub fn k(&self) -> usize {
        self.log_pi.len()
    }

    pub fn log_pi(&self) -> &[S] {
        &self.log_pi
    }
}

/// Sufficient statistics of a point set: count, mean, and scatter about the
/// mean.
fn moments<S: Scalar>(points: &[&[S]], dim: usize) -> (usize, Vec<S>, Matrix<S>) {
    let n = points.len();
    let mut mean = vec![S::zero(); dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(*p) {
            *m += *v;
        }
    }
    if n > 0 {
        let inv = S::one() / S::cast_from(n as f64);
        for m in &mut mean {
            *m *= inv;
        }
    }
    let mut scatter = Matrix::zeros(dim, dim);
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in 0..=i {
                let v = di * (p[j] - mean[j]);
                scatter[(i, j)] += v;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            scatter[(j, i)] = scatter[(i, j)];
        }
    }
    (n, mean, scatter)
}

/// Conjugate normal-Wishart posterior update from a set of observed latents:
/// `α' = α + n`, `ν' = ν + n`, `m' = (αm + nx̄)/(α + n)`,
/// `β'⁻¹ = β⁻¹ + S + (αn/(α+n)) (x̄−m)(x̄−m)ᵀ`.
pub fn nw_posterior<S: Scalar>(
    hyper: &NwHyper<S>,
    points: &[&[S]],
) -> Result<NwHyper<S>, GmmError> {
    let dim = hyper.dim();
    for p in points {
        if p.len() != dim {
            return Err(ProbError::DimensionMismatch { expected: dim, got: p.len() }.into());
        }
    }
    if points.is_empty() {
        return Ok(hyper.clone());
    }
    let (n, xbar, scatter) = moments(points, dim);
    let nf = S::cast_from(n as f64);
    let alpha_n = hyper.alpha + nf;
    let nu_n = hyper.nu + nf;
    let m_n: Vec<S> = hyper
        .m
        .iter()
        .zip(&xbar)
        .map(|(m, x)| (hyper.alpha * *m + nf * *x) / alpha_n)
        .collect();

    let mut beta_inv = hyper.beta.inverse()?;
    let coef = hyper.alpha * nf / alpha_n;
    for i in 0..dim {
        let di = xbar[i] - hyper.m[i];
        for j in 0..dim {
            let dj = xbar[j] - hyper.m[j];
            beta_inv[(i, j)] += scatter[(i, j)] + coef * di * dj;
        }
    }
    let beta_inv_spd = SpdMatrix::from_symmetric_unchecked(beta_inv);
    let beta_n = SpdMatrix::from_symmetric_unchecked(beta_inv_spd.inverse()?);
    NwHyper::new(m_n, alpha_n, nu_n, beta_n).map_err(Into::into)
}

/// One Gibbs sweep over component parameters: partition the latents by sign,
/// draw each component from its conjugate posterior. Components with no
/// assigned points draw from the prior, keeping K fixed.
pub fn gibbs_sample_components<S: Scalar>(
    z: &[Vec<S>],
    w: &SignVector,
    hyper: &NwHyper<S>,
    k: usize,
    rng: &mut RngStream,
) -> Result<ComponentSet<S>, GmmError> {
    if z.len() != w.len() {
        return Err(GmmError::LengthMismatch { expected: z.len(), got: w.len() });
    }
    for &wd in w.iter() {
        if wd >= k {
            return Err(GmmError::SignOutOfRange { sign: wd, k });
        }
    }
    let mut components = Vec::with_capacity(k);
    for comp in 0..k {
        let members: Vec<&[S]> = z
            .iter()
            .zip(w.iter())
            .filter(|(_, &wd)| wd == comp)
            .map(|(zd, _)| zd.as_slice())
            .collect();
        let posterior = nw_posterior(hyper, &members)?;
        let (mu, lambda) = sample_normal_wishart(&posterior, rng)?;
        components.push(Component { mu, lambda });
    }
    ComponentSet::new(components)
}

/// Unnormalized log posterior over signs for one latent:
/// `log π_k + log N(z_d; μ_k, Λ_k⁻¹)`.
pub fn sign_logits<S: Scalar>(
    z_d: &[S],
    phi: &ComponentSet<S>,
    pi: &MixtureWeights<S>,
) -> Result<Vec<S>, GmmError> {
    if pi.k() != phi.k() {
        return Err(GmmError::KMismatch { a: phi.k(), b: pi.k() });
    }
    phi.components()
        .iter()
        .zip(pi.log_pi())
        .map(|(c, lp)| Ok(*lp + mvn_logpdf(z_d, &c.mu, &c.lambda)?))
        .collect()
}

/// Draws a sign from the posterior over components — the utterance kernel.
pub fn sample_sign<S: Scalar>(
    z_d: &[S],
    phi: &ComponentSet<S>,
    pi: &MixtureWeights<S>,
    rng: &mut RngStream,
) -> Result<Sign, GmmError> {
    let logits = sign_logits(z_d, phi, pi)?;
    Ok(sample_categorical_log(&logits, rng)?)
}

/// MH acceptance probability for a proposed sign, from the listener's view:
/// `r = min(1, P(z_li | φ_li, w_sp) / P(z_li | φ_li, w_li))`, in log space.
/// The mixture weights cancel and never enter.
pub fn acceptance_probability<S: Scalar>(
    z_li: &[S],
    phi_li: &ComponentSet<S>,
    w_sp: Sign,
    w_li: Sign,
) -> Result<S, GmmError> {
    if w_sp == w_li {
        return Ok(S::one());
    }
    let sp = phi_li.component(w_sp)?;
    let li = phi_li.component(w_li)?;
    let log_ratio =
        mvn_logpdf(z_li, &sp.mu, &sp.lambda)? - mvn_logpdf(z_li, &li.mu, &li.lambda)?;
    if log_ratio >= S::zero() {
        Ok(S::one())
    } else {
        Ok(log_ratio.exp())
    }
}

/// Centralized topline: sign logits using both agents' latents at once.
pub fn centralized_sign_logits<S: Scalar>(
    z_a: &[S],
    z_b: &[S],
    phi_a: &ComponentSet<S>,
    phi_b: &ComponentSet<S>,
    pi: &MixtureWeights<S>,
) -> Result<Vec<S>, GmmError> {
    if phi_a.k() != phi_b.k() {
        return Err(GmmError::KMismatch { a: phi_a.k(), b: phi_b.k() });
    }
    let a = sign_logits(z_a, phi_a, pi)?;
    let mut logits = Vec::with_capacity(a.len());
    for (k, (la, cb)) in a.iter().zip(phi_b.components()).enumerate() {
        let _ = k;
        logits.push(*la + mvn_logpdf(z_b, &cb.mu, &cb.lambda)?);
    }
    Ok(logits)
}

pub mod evidence {
    //! Closed-form normal-Wishart marginal likelihood (multivariate
    //! Student-t evidence). Used only by the exact small-instance oracles —
    //! the game itself never needs it.

    use super::*;

    /// `log Γ_L(a)` — the multivariate log-gamma function.
    pub fn ln_multivariate_gamma(dim: usize, a: f64) -> f64 {
        let mut sum = (dim * (dim - 1)) as f64 / 4.0 * core::f64::consts::PI.ln();
        for j in 1..=dim {
            sum += libm::lgamma(a + (1.0 - j as f64) / 2.0);
        }
        sum
    }

    /// `log p(X)` of a point set under the normal-Wishart prior, with the
    /// Gaussian likelihood marginalized over `(μ, Λ)`:
    ///
    /// `log p(X) = −(nL/2)·log π + logΓ_L(ν_n/2) − logΓ_L(ν/2)
    ///             + (ν/2)·log det β⁻¹ − (ν_n/2)·log det β_n⁻¹
    ///             + (L/2)(log α − log α_n)`
    pub fn nw_log_marginal<S: Scalar>(
        hyper: &NwHyper<S>,
        points: &[&[S]],
    ) -> Result<f64, GmmError> {
        let dim = hyper.dim();
        let n = points.len();
        if n == 0 {
            return Ok(0.0);
        }
        let post = nw_posterior(hyper, points)?;
        let l = dim as f64;
        let nu0 = hyper.nu.cast_f64();
        let nun = post.nu.cast_f64();
        // log det β⁻¹ = −log det β
        let log_det_beta0 = hyper.beta.log_det()?.cast_f64();
        let log_det_betan = post.beta.log_det()?.cast_f64();
        Ok(
            -(n as f64 * l / 2.0) * core::f64::consts::PI.ln()
                + ln_multivariate_gamma(dim, nun / 2.0)
                - ln_multivariate_gamma(dim, nu0 / 2.0)
                + (nu0 / 2.0) * (-log_det_beta0)
                - (nun / 2.0) * (-log_det_betan)
                + (l / 2.0) * (hyper.alpha.cast_f64().ln() - post.alpha.cast_f64().ln()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> RngStream {
        RngStream::new(seed)
    }

    fn well_separated_pair() -> ComponentSet<f64> {
        ComponentSet::new(vec![
            Component { mu: vec![-3.0, 0.0], lambda: SpdMatrix::identity(2) },
            Component { mu: vec![3.0, 0.0], lambda: SpdMatrix::identity(2) },
        ])
        .unwrap()
    }

    #[test]
    fn nw_posterior_empty_is_identity() {
        let h = NwHyper::<f64>::defaults(3);
        let p = nw_posterior(&h, &[]).unwrap();
        assert_eq!(p, h);
    }

    #[test]
    fn nw_posterior_single_point_closed_form() {
        let h = NwHyper::<f64>::defaults(2);
        let x = [2.0, -4.0];
        let p = nw_posterior(&h, &[&x]).unwrap();
        assert_eq!(p.alpha, 2.0);
        assert_eq!(p.nu, h.nu + 1.0);
        assert!((p.m[0] - 1.0).abs() < 1e-12);
        assert!((p.m[1] - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn nw_posterior_concentrates_on_cloud_mean() {
        let mut r = rng(71);
        let mu0 = [1.5, -0.5, 2.0];
        let n = 50;
        let cloud: Vec<Vec<f64>> = (0..n)
            .map(|_| mu0.iter().map(|m| m + r.standard_normal::<f64>()).collect())
            .collect();
        let refs: Vec<&[f64]> = cloud.iter().map(|v| v.as_slice()).collect();
        let h = NwHyper::<f64>::defaults(3);
        let p = nw_posterior(&h, &refs).unwrap();
        for (mi, m0) in p.m.iter().zip(&mu0) {
            assert!((mi - m0).abs() < 3.0 / (n as f64).sqrt(), "{mi} vs {m0}");
        }
    }

    #[test]
    fn gibbs_empty_component_draws_from_prior() {
        // All points in component 0; component 1 must still be produced.
        let z: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        let w = SignVector::new(vec![0; 6]);
        let h = NwHyper::defaults(2);
        let phi = gibbs_sample_components(&z, &w, &h, 2, &mut rng(2)).unwrap();
        assert_eq!(phi.k(), 2);
        assert!(phi.component(1).unwrap().lambda.chol().is_ok());
    }

    #[test]
    fn gibbs_recovers_separated_clusters() {
        let mut r = rng(5);
        let mut z = Vec::new();
        let mut w = Vec::new();
        for d in 0..60 {
            let c = d % 2;
            let center = if c == 0 { -5.0 } else { 5.0 };
            z.push(vec![
                center + 0.3 * r.standard_normal::<f64>(),
                0.3 * r.standard_normal::<f64>(),
            ]);
            w.push(c);
        }
        let h = NwHyper::defaults(2);
        let phi =
            gibbs_sample_components(&z, &SignVector::new(w), &h, 2, &mut rng(9)).unwrap();
        assert!((phi.component(0).unwrap().mu[0] - (-5.0)).abs() < 0.5);
        assert!((phi.component(1).unwrap().mu[0] - 5.0).abs() < 0.5);
    }

    #[test]
    fn gibbs_deterministic_under_seed() {
        let z: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let w = SignVector::new((0..10).map(|i| i % 3).collect());
        let h = NwHyper::defaults(2);
        let a = gibbs_sample_components(&z, &w, &h, 3, &mut rng(7)).unwrap();
        let b = gibbs_sample_components(&z, &w, &h, 3, &mut rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gibbs_all_empty_matches_prior_predictive() {
        // With no data at all, component draws must be prior draws: compare
        // the mean of sampled component means against direct prior sampling.
        let h = NwHyper::<f64>::defaults(2);
        let z: Vec<Vec<f64>> = vec![];
        let w = SignVector::new(vec![]);
        let n = 4000;
        let mut from_gibbs = [0.0f64; 2];
        let mut from_prior = [0.0f64; 2];
        let mut sq_gibbs = 0.0f64;
        let mut sq_prior = 0.0f64;
        let mut ra = rng(13);
        let mut rb = rng(14);
        for _ in 0..n {
            let phi = gibbs_sample_components(&z, &w, &h, 1, &mut ra).unwrap();
            let c = phi.component(0).unwrap();
            from_gibbs[0] += c.mu[0];
            from_gibbs[1] += c.mu[1];
            sq_gibbs += c.mu[0] * c.mu[0];
            let (mu, _) = sample_normal_wishart(&h, &mut rb).unwrap();
            from_prior[0] += mu[0];
            from_prior[1] += mu[1];
            sq_prior += mu[0] * mu[0];
        }
        for i in 0..2 {
            let a = from_gibbs[i] / n as f64;
            let b = from_prior[i] / n as f64;
            assert!((a - b).abs() < 0.1, "mean[{i}]: {a} vs {b}");
        }
        let va = sq_gibbs / n as f64;
        let vb = sq_prior / n as f64;
        assert!((va - vb).abs() < 0.3, "second moment {va} vs {vb}");
    }

    #[test]
    fn sign_logits_single_component() {
        let phi = ComponentSet::new(vec![Component {
            mu: vec![0.0],
            lambda: SpdMatrix::identity(1),
        }])
        .unwrap();
        let pi = MixtureWeights::uniform(1);
        let logits = sign_logits(&[0.5], &phi, &pi).unwrap();
        assert_eq!(logits.len(), 1);
        let expect = mvn_logpdf(&[0.5f64], &[0.0], &SpdMatrix::identity(1)).unwrap();
        assert!((logits[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn sign_logits_nearest_mean_dominates() {
        let phi = well_separated_pair();
        let pi = MixtureWeights::uniform(2);
        let logits = sign_logits(&[3.0, 0.0], &phi, &pi).unwrap();
        assert!(logits[1] > logits[0]);
    }

    #[test]
    fn sign_logits_match_bruteforce_bayes() {
        // Exp-normalized logits must equal the Bayes posterior over
        // components computed with dense arithmetic.
        let mut r = rng(55);
        let dim = 3;
        let k = 4;
        let mut comps = Vec::new();
        for _ in 0..k {
            let mut a = Matrix::<f64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    a[(i, j)] = r.standard_normal();
                }
            }
            let mut prec = a.matmul(&a.transpose());
            for i in 0..dim {
                prec[(i, i)] += 1.0;
            }
            comps.push(Component {
                mu: (0..dim).map(|_| r.standard_normal::<f64>()).collect(),
                lambda: SpdMatrix::new(prec).unwrap(),
            });
        }
        let weights = [0.4, 0.3, 0.2, 0.1];
        let pi = MixtureWeights::from_weights(&weights);
        let phi = ComponentSet::new(comps.clone()).unwrap();
        let z: Vec<f64> = (0..dim).map(|_| r.standard_normal()).collect();

        let logits = sign_logits(&z, &phi, &pi).unwrap();
        let lse = probability::log_sum_exp(&logits);
        let ours: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();

        // Dense route: densities via explicit inverse + determinant.
        let mut dens = Vec::new();
        for (c, w) in comps.iter().zip(&weights) {
            let inv = c.lambda.inverse().unwrap();
            let _ = inv; // density computed from precision directly below
            let mut quad = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    quad += (z[i] - c.mu[i]) * c.lambda.matrix()[(i, j)] * (z[j] - c.mu[j]);
                }
            }
            let det = {
                let m = c.lambda.matrix();
                m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                    - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                    + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
            };
            let norm = det.sqrt() / (core::f64::consts::TAU).powf(dim as f64 / 2.0);
            dens.push(w * norm * (-0.5 * quad).exp());
        }
        let total: f64 = dens.iter().sum();
        for (a, b) in ours.iter().zip(&dens) {
            assert!((a - b / total).abs() < 1e-10, "{a} vs {}", b / total);
        }
    }

    #[test]
    fn sample_sign_degenerate() {
        let phi = ComponentSet::new(vec![Component {
            mu: vec![0.0],
            lambda: SpdMatrix::identity(1),
        }])
        .unwrap();
        let pi = MixtureWeights::uniform(1);
        for seed in 0..10 {
            assert_eq!(sample_sign(&[1.0], &phi, &pi, &mut rng(seed)).unwrap(), 0);
        }
    }

    #[test]
    fn sample_sign_symmetric_split() {
        let phi = well_separated_pair();
        let pi = MixtureWeights::uniform(2);
        let z = [0.0, 0.7];
        let mut r = rng(33);
        let n = 100_000;
        let ones: usize = (0..n)
            .filter(|_| sample_sign(&z, &phi, &pi, &mut r).unwrap() == 1)
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.01, "freq {f}");
    }

    #[test]
    fn sample_sign_matches_analytic_frequencies() {
        let phi = ComponentSet::new(vec![
            Component { mu: vec![-1.0, 0.0], lambda: SpdMatrix::identity(2) },
            Component { mu: vec![1.0, 0.5], lambda: SpdMatrix::scaled_identity(2, 2.0) },
        ])
        .unwrap();
        let pi = MixtureWeights::from_weights(&[0.25f64, 0.75]);
        let z = [0.2, 0.1];
        let logits = sign_logits(&z, &phi, &pi).unwrap();
        let lse = probability::log_sum_exp(&logits);
        let p1 = (logits[1] - lse).exp();
        let mut r = rng(44);
        let n = 100_000;
        let ones: usize = (0..n)
            .filter(|_| sample_sign(&z, &phi, &pi, &mut r).unwrap() == 1)
            .count();
        let f = ones as f64 / n as f64;
        assert!((f - p1).abs() < 0.01, "freq {f} vs analytic {p1}");
    }

    #[test]
    fn acceptance_identical_signs_is_one() {
        let phi = well_separated_pair();
        let r = acceptance_probability(&[0.3, -0.2], &phi, 1, 1).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn acceptance_clamps_at_one() {
        // Listener's latent sits exactly on the speaker-sign component mean,
        // two unit-precision components 2 apart.
        let phi = ComponentSet::new(vec![
            Component { mu: vec![0.0], lambda: SpdMatrix::identity(1) },
            Component { mu: vec![2.0], lambda: SpdMatrix::identity(1) },
        ])
        .unwrap();
        let r = acceptance_probability(&[0.0], &phi, 0, 1).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn acceptance_gaussian_ratio_by_hand() {
        // z on the listener's own component mean, |μ_sp − μ_li| = 2, Λ = I:
        // r = exp(−½·2²) = e⁻².
        let phi = ComponentSet::new(vec![
            Component { mu: vec![0.0], lambda: SpdMatrix::identity(1) },
            Component { mu: vec![2.0], lambda: SpdMatrix::identity(1) },
        ])
        .unwrap();
        let r = acceptance_probability(&[0.0], &phi, 1, 0).unwrap();
        assert!((r - (-2.0f64).exp()).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn acceptance_out_of_range_sign() {
        let phi = well_separated_pair();
        assert!(matches!(
            acceptance_probability(&[0.0, 0.0], &phi, 5, 0),
            Err(GmmError::SignOutOfRange { .. })
        ));
    }

    #[test]
    fn centralized_reduces_to_single_agent_when_other_uninformative() {
        // All of B's components identical: B adds the same constant to every
        // logit, so the exp-normalized posterior equals A's alone.
        let phi_a = well_separated_pair();
        let shared = Component { mu: vec![0.0, 0.0], lambda: SpdMatrix::identity(2) };
        let phi_b = ComponentSet::new(vec![shared.clone(), shared]).unwrap();
        let pi = MixtureWeights::uniform(2);
        let z_a = [1.0, 0.3];
        let z_b = [-0.4, 0.2];
        let joint = centralized_sign_logits(&z_a, &z_b, &phi_a, &phi_b, &pi).unwrap();
        let solo = sign_logits(&z_a, &phi_a, &pi).unwrap();
        let diff0 = joint[0] - solo[0];
        let diff1 = joint[1] - solo[1];
        assert!((diff0 - diff1).abs() < 1e-12);
    }

    #[test]
    fn centralized_matches_bruteforce_product() {
        let mut r = rng(66);
        let dim = 2;
        let k = 3;
        let mk_phi = |r: &mut RngStream| {
            let comps = (0..k)
                .map(|_| {
                    let d0 = 1.0 + r.uniform::<f64>();
                    let d1 = 1.0 + r.uniform::<f64>();
                    Component {
                        mu: (0..dim).map(|_| r.standard_normal::<f64>()).collect(),
                        lambda: SpdMatrix::new(Matrix::from_rows(&[
                            vec![d0, 0.2],
                            vec![0.2, d1],
                        ]))
                        .unwrap(),
                    }
                })
                .collect();
            ComponentSet::new(comps).unwrap()
        };
        let phi_a = mk_phi(&mut r);
        let phi_b = mk_phi(&mut r);
        let pi = MixtureWeights::uniform(k);
        let z_a: Vec<f64> = (0..dim).map(|_| r.standard_normal()).collect();
        let z_b: Vec<f64> = (0..dim).map(|_| r.standard_normal()).collect();

        let joint = centralized_sign_logits(&z_a, &z_b, &phi_a, &phi_b, &pi).unwrap();
        let lse = probability::log_sum_exp(&joint);
        let ours: Vec<f64> = joint.iter().map(|l| (l - lse).exp()).collect();

        // Brute force: product of per-agent component likelihoods and prior.
        let mut probs = Vec::new();
        for kk in 0..k {
            let ca = phi_a.component(kk).unwrap();
            let cb = phi_b.component(kk).unwrap();
            let la = mvn_logpdf(&z_a, &ca.mu, &ca.lambda).unwrap();
            let lb = mvn_logpdf(&z_b, &cb.mu, &cb.lambda).unwrap();
            probs.push((pi.log_pi()[kk] + la + lb).exp());
        }
        let total: f64 = probs.iter().sum();
        for (a, p) in ours.iter().zip(&probs) {
            assert!((a - p / total).abs() < 1e-12);
        }
    }

    #[test]
    fn centralized_symmetric_agents_give_symmetric_logits() {
        let phi = well_separated_pair();
        let pi = MixtureWeights::uniform(2);
        // Mirrored data: z_a at component 0's mean, z_b at component 1's.
        let joint =
            centralized_sign_logits(&[-3.0, 0.0], &[3.0, 0.0], &phi, &phi, &pi).unwrap();
        assert!((joint[0] - joint[1]).abs() < 1e-12);
    }

    #[test]
    fn centralized_k_mismatch() {
        let phi_a = well_separated_pair();
        let phi_b = ComponentSet::new(vec![Component {
            mu: vec![0.0, 0.0],
            lambda: SpdMatrix::identity(2),
        }])
        .unwrap();
        let pi = MixtureWeights::uniform(2);
        assert!(matches!(
            centralized_sign_logits(&[0.0, 0.0], &[0.0, 0.0], &phi_a, &phi_b, &pi),
            Err(GmmError::KMismatch { .. })
        ));
    }

    #[test]
    fn evidence_matches_monte_carlo_1d() {
        // log p(X) against a naive prior-sampled Monte Carlo estimate.
        let h = NwHyper::<f64>::new(
            vec![0.0],
            1.0,
            3.0,
            SpdMatrix::scaled_identity(1, 0.5),
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = vec![vec![0.4], vec![-0.3], vec![0.9]];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let exact = evidence::nw_log_marginal(&h, &refs).unwrap();

        let mut r = rng(99);
        let n = 200_000;
        let mut acc = 0.0f64;
        for _ in 0..n {
            let (mu, lambda) = sample_normal_wishart(&h, &mut r).unwrap();
            let mut ll = 0.0;
            for x in &refs {
                ll += mvn_logpdf(x, &mu, &lambda).unwrap();
            }
            acc += ll.exp();
        }
        let mc = (acc / n as f64).ln();
        assert!(
            (exact - mc).abs() < 0.05,
            "closed form {exact} vs MC {mc}"
        );
    }

    #[test]
    fn evidence_matches_monte_carlo_2d() {
        let h = NwHyper::<f64>::new(
            vec![0.0, 0.0],
            1.0,
            4.0,
            SpdMatrix::scaled_identity(2, 0.4),
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = vec![vec![0.5, -0.2], vec![-0.1, 0.3]];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let exact = evidence::nw_log_marginal(&h, &refs).unwrap();

        let mut r = rng(123);
        let n = 400_000;
        let mut acc = 0.0f64;
        for _ in 0..n {
            let (mu, lambda) = sample_normal_wishart(&h, &mut r).unwrap();
            let mut ll = 0.0;
            for x in &refs {
                ll += mvn_logpdf(x, &mu, &lambda).unwrap();
            }
            acc += ll.exp();
        }
        let mc = (acc / n as f64).ln();
        assert!(
            (exact - mc).abs() < 0.05,
            "closed form {exact} vs MC {mc}"
        );
    }

    #[test]
    fn evidence_empty_is_zero() {
        let h = NwHyper::<f64>::defaults(2);
        assert_eq!(evidence::nw_log_marginal(&h, &[]).unwrap(), 0.0);
    }
}
