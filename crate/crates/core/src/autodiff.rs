//! Minimal reverse-mode machinery for the dense VAE: parameter tensors with
//! co-located gradients, affine layers with cached inputs, ReLU, the two
//! reconstruction heads, and Adam.
//!
//! Activations flow as [`Matrix`] batches (rows = batch elements); gradients
//! flow back through explicit `backward` calls in reverse layer order.

use crate::linalg::{axpy, dot, Matrix};
use crate::rng::RngStream;
use crate::Scalar;

/// Parameter tensor: values and gradient of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![S::zero(); rows * cols],
            grad: vec![S::zero(); rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = S::zero();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn row(&self, r: usize) -> &[S] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    fn grad_row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.grad[r * self.cols..(r + 1) * self.cols]
    }
}

/// Affine layer `y = x Wᵀ + b` with `W: out × in`, caching the input batch
/// for the backward pass.
#[derive(Clone, Debug)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    input_cache: Option<Matrix<S>>,
}

impl<S: Scalar> Linear<S> {
    /// He-style init: `W ~ N(0, 2/fan_in)`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        let std = S::cast_from((2.0 / in_dim as f64).sqrt());
        let mut weight = Tensor::zeros(out_dim, in_dim);
        for v in &mut weight.values {
            *v = rng.standard_normal::<S>() * std;
        }
        Self { weight, bias: Tensor::zeros(1, out_dim), input_cache: None }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    /// Batched forward; caches the input when `train` is set.
    pub fn forward(&mut self, x: &Matrix<S>, train: bool) -> Matrix<S> {
        debug_assert_eq!(x.cols(), self.in_dim());
        let b = x.rows();
        let out_dim = self.out_dim();
        let mut y = Matrix::zeros(b, out_dim);
        for r in 0..b {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for o in 0..out_dim {
                yr[o] = dot(self.weight.row(o), xr) + self.bias.values[o];
            }
        }
        if train {
            self.input_cache = Some(x.clone());
        }
        y
    }

    /// Single-sample forward without caching.
    pub fn forward_one(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.in_dim());
        (0..self.out_dim())
            .map(|o| dot(self.weight.row(o), x) + self.bias.values[o])
            .collect()
    }

    /// Accumulates parameter gradients from `grad_out` and returns the
    /// gradient with respect to the cached input.
    pub fn backward(&mut self, grad_out: &Matrix<S>) -> Matrix<S> {
        let x = self
            .input_cache
            .take()
            .expect("backward without cached forward");
        let b = x.rows();
        debug_assert_eq!(grad_out.rows(), b);
        debug_assert_eq!(grad_out.cols(), self.out_dim());
        let mut grad_in = Matrix::zeros(b, self.in_dim());
        for r in 0..b {
            let go = grad_out.row(r);
            for o in 0..self.out_dim() {
                let g = go[o];
                if g == S::zero() {
                    continue;
                }
                axpy(self.weight.grad_row_mut(o), g, x.row(r));
                self.bias.grad[o] += g;
                axpy(grad_in.row_mut(r), g, self.weight.row(o));
            }
        }
        grad_in
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

/// In-place ReLU; the returned mask feeds [`relu_backward`].
pub fn relu_forward<S: Scalar>(x: &mut Matrix<S>) -> Vec<bool> {
    let mut mask = Vec::with_capacity(x.rows() * x.cols());
    for v in x.data_mut() {
        let on = *v > S::zero();
        mask.push(on);
        if !on {
            *v = S::zero();
        }
    }
    mask
}

pub fn relu_backward<S: Scalar>(grad: &mut Matrix<S>, mask: &[bool]) {
    for (g, &on) in grad.data_mut().iter_mut().zip(mask) {
        if !on {
            *g = S::zero();
        }
    }
}

pub fn sigmoid<S: Scalar>(t: S) -> S {
    let one = S::one();
    if t >= S::zero() {
        one / (one + (-t).exp())
    } else {
        let e = t.exp();
        e / (one + e)
    }
}

/// `Σ softplus(t) − t·o` over all pixels — the Bernoulli NLL of targets `o`
/// under logits `t`. Gradient w.r.t. `t` is `σ(t) − o`, written to `grad`.
pub fn bernoulli_nll_with_logits<S: Scalar>(
    logits: &Matrix<S>,
    targets: &Matrix<S>,
    grad: &mut Matrix<S>,
) -> S {
    let mut loss = S::zero();
    for ((t, o), g) in logits
        .data()
        .iter()
        .zip(targets.data())
        .zip(grad.data_mut())
    {
        // stable softplus(t) − t·o = max(t, 0) − t·o + ln(1 + e^{−|t|})
        let zero = S::zero();
        loss = loss + t.max(zero) - *t * *o + ((-t.abs()).exp() + S::one()).ln();
        *g = sigmoid(*t) - *o;
    }
    loss
}

/// Gaussian NLL with unit variance around `σ(t)`:
/// `Σ ½(σ(t) − o)² + ½ln 2π`. Gradient w.r.t. `t` goes to `grad`.
pub fn gaussian_nll_with_logits<S: Scalar>(
    logits: &Matrix<S>,
    targets: &Matrix<S>,
    grad: &mut Matrix<S>,
) -> S {
    let half = S::cast_from(0.5);
    let mut loss = S::zero();
    for ((t, o), g) in logits
        .data()
        .iter()
        .zip(targets.data())
        .zip(grad.data_mut())
    {
        let m = sigmoid(*t);
        let diff = m - *o;
        loss = loss + half * diff * diff + half * S::ln_2pi();
        *g = diff * m * (S::one() - m);
    }
    loss
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<S> {
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Scalar> Default for AdamConfig<S> {
    fn default() -> Self {
        Self {
            learning_rate: S::cast_from(0.001),
            beta1: S::cast_from(0.9),
            beta2: S::cast_from(0.999),
            epsilon: S::cast_from(1e-8),
        }
    }
}

/// Adam over a fixed list of tensors; states are indexed by position, so the
/// tensor list must be passed in a stable order.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    cfg: AdamConfig<S>,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig<S>, tensor_sizes: &[usize]) -> Self {
        assert!(cfg.learning_rate > S::zero(), "learning rate must be positive");
        Self {
            cfg,
            step: 0,
            m: tensor_sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, tensors: &mut [&mut Tensor<S>]) {
        assert_eq!(tensors.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        let one = S::one();
        for (idx, tensor) in tensors.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..tensor.values.len() {
                let g = tensor.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                tensor.values[i] =
                    tensor.values[i] - self.cfg.learning_rate * mhat / (vhat.sqrt() + self.cfg.epsilon);
            }
        }
    }
}
