//! Variational autoencoder whose per-datum latent prior is the Gaussian
//! mixture component selected by the datum's current sign. Training with
//! those data-dependent priors is what couples the VAE to the mixture during
//! mutual inference.
//!
//! The architecture is a config-driven dense stack; the reconstruction
//! likelihood is Bernoulli for grayscale-in-[0,1] pixels or unit-variance
//! Gaussian for continuous data.

use std::io::{Read, Write};

use crate::autodiff::{
    bernoulli_nll_with_logits, gaussian_nll_with_logits, relu_backward, relu_forward, sigmoid,
    Adam, AdamConfig, Linear, Tensor,
};
use crate::gmm::ComponentSet;
use crate::linalg::Matrix;
use crate::probability::{ProbError, SpdMatrix};
use crate::rng::RngStream;
use crate::Scalar;

pub const VAE_CHECKPOINT_MAGIC: &[u8; 7] = b"IGVVAE1";

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss at training step {step}: {loss}")]
    NonFinite { step: usize, loss: f64 },
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("sign {sign} out of range for K = {k}")]
    SignOutOfRange { sign: usize, k: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Likelihood {
    Bernoulli,
    GaussianUnitVariance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub likelihood: Likelihood,
}

impl VaeArch {
    /// The default dense stack: input → 512 → 256 → latent heads.
    pub fn dense_default(input_dim: usize, latent_dim: usize) -> Self {
        Self { input_dim, hidden: vec![512, 256], latent_dim, likelihood: Likelihood::Bernoulli }
    }
}

/// Gaussian prior for one datum's latent: the mixture component of its sign.
#[derive(Clone, Debug)]
pub struct LatentPrior<S> {
    pub mu: Vec<S>,
    pub lambda: SpdMatrix<S>,
}

impl<S: Scalar> LatentPrior<S> {
    pub fn standard(latent_dim: usize) -> Self {
        Self { mu: vec![S::zero(); latent_dim], lambda: SpdMatrix::identity(latent_dim) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PerceiveMode {
    Sample,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig<S> {
    pub adam: AdamConfig<S>,
    /// `None` = full batch.
    pub batch_size: Option<usize>,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), batch_size: None }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainReport {
    pub steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
}

/// Encoder ψ (affine stack → μ_q, log-variance s_q) and decoder θ
/// (mirrored stack → per-pixel logits).
#[derive(Clone, Debug)]
pub struct Vae<S> {
    arch: VaeArch,
    enc_layers: Vec<Linear<S>>,
    head_mu: Linear<S>,
    head_logvar: Linear<S>,
    dec_layers: Vec<Linear<S>>,
    dec_out: Linear<S>,
}

impl<S: Scalar> Vae<S> {
    pub fn new(arch: VaeArch, rng: &mut RngStream) -> Self {
        assert!(arch.input_dim > 0 && arch.latent_dim > 0);
        let mut enc_layers = Vec::new();
        let mut dim = arch.input_dim;
        for &h in &arch.hidden {
            enc_layers.push(Linear::new(dim, h, rng));
            dim = h;
        }
        let head_mu = Linear::new(dim, arch.latent_dim, rng);
        let head_logvar = Linear::new(dim, arch.latent_dim, rng);
        let mut dec_layers = Vec::new();
        dim = arch.latent_dim;
        for &h in arch.hidden.iter().rev() {
            dec_layers.push(Linear::new(dim, h, rng));
            dim = h;
        }
        let dec_out = Linear::new(dim, arch.input_dim, rng);
        Self { arch, enc_layers, head_mu, head_logvar, dec_layers, dec_out }
    }

    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    fn check_input(&self, len: usize) -> Result<(), VaeError> {
        if len != self.arch.input_dim {
            return Err(VaeError::ShapeMismatch { expected: self.arch.input_dim, got: len });
        }
        Ok(())
    }

    /// Deterministic encoder pass: `(μ_q, log σ_q²)`.
    pub fn encode(&self, o: &[S]) -> Result<(Vec<S>, Vec<S>), VaeError> {
        self.check_input(o.len())?;
        let mut h = o.to_vec();
        for l in &self.enc_layers {
            h = l.forward_one(&h);
            for v in &mut h {
                if *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
        Ok((self.head_mu.forward_one(&h), self.head_logvar.forward_one(&h)))
    }

    /// Decoder pass: per-pixel logits.
    pub fn decode(&self, z: &[S]) -> Result<Vec<S>, VaeError> {
        if z.len() != self.arch.latent_dim {
            return Err(VaeError::ShapeMismatch { expected: self.arch.latent_dim, got: z.len() });
        }
        let mut h = z.to_vec();
        for l in &self.dec_layers {
            h = l.forward_one(&h);
            for v in &mut h {
                if *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
        Ok(self.dec_out.forward_one(&h))
    }

    /// Draws (or takes the mean of) the encoder posterior for one image.
    pub fn perceive(
        &self,
        o: &[S],
        rng: &mut RngStream,
        mode: PerceiveMode,
    ) -> Result<Vec<S>, VaeError> {
        let (mu, logvar) = self.encode(o)?;
        match mode {
            PerceiveMode::Mean => Ok(mu),
            PerceiveMode::Sample => Ok(reparameterize(&mu, &logvar, rng)),
        }
    }

    /// Recalls the image of a sign by decoding the sign's component mean.
    pub fn recall_image(&self, phi: &ComponentSet<S>, w: usize) -> Result<Vec<S>, VaeError> {
        let comp = phi
            .component(w)
            .map_err(|_| VaeError::SignOutOfRange { sign: w, k: phi.k() })?;
        let logits = self.decode(&comp.mu)?;
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.enc_layers {
            l.zero_grad();
        }
        self.head_mu.zero_grad();
        self.head_logvar.zero_grad();
        for l in &mut self.dec_layers {
            l.zero_grad();
        }
        self.dec_out.zero_grad();
    }

    pub fn parameters(&mut self) -> Vec<&mut Tensor<S>> {
        let mut ps = Vec::new();
        for l in &mut self.enc_layers {
            ps.push(&mut l.weight);
            ps.push(&mut l.bias);
        }
        ps.push(&mut self.head_mu.weight);
        ps.push(&mut self.head_mu.bias);
        ps.push(&mut self.head_logvar.weight);
        ps.push(&mut self.head_logvar.bias);
        for l in &mut self.dec_layers {
            ps.push(&mut l.weight);
            ps.push(&mut l.bias);
        }
        ps.push(&mut self.dec_out.weight);
        ps.push(&mut self.dec_out.bias);
        ps
    }

    /// ELBO loss (negated bound) over a batch with per-datum priors; draws
    /// the reparameterization noise from `rng`, accumulates gradients into
    /// the parameter tensors, and returns the summed loss.
    pub fn elbo_loss(
        &mut self,
        batch: &Matrix<S>,
        priors: &[&LatentPrior<S>],
        rng: &mut RngStream,
    ) -> Result<S, VaeError> {
        let mut eps = Matrix::zeros(batch.rows(), self.arch.latent_dim);
        for v in eps.data_mut() {
            *v = rng.standard_normal();
        }
        self.elbo_loss_with_noise(batch, priors, &eps)
    }

    /// Same as [`Vae::elbo_loss`] but with caller-supplied noise — the hook
    /// the finite-difference gradient checks use.
    pub fn elbo_loss_with_noise(
        &mut self,
        batch: &Matrix<S>,
        priors: &[&LatentPrior<S>],
        eps: &Matrix<S>,
    ) -> Result<S, VaeError> {
        let b = batch.rows();
        self.check_input(batch.cols())?;
        if priors.len() != b {
            return Err(VaeError::ShapeMismatch { expected: b, got: priors.len() });
        }
        let l_dim = self.arch.latent_dim;
        let half = S::cast_from(0.5);
        let one = S::one();

        // Encoder forward.
        let mut h = batch.clone();
        let mut enc_masks = Vec::with_capacity(self.enc_layers.len());
        for l in &mut self.enc_layers {
            h = l.forward(&h, true);
            enc_masks.push(relu_forward(&mut h));
        }
        let mu = self.head_mu.forward(&h, true);
        let logvar = self.head_logvar.forward(&h, true);

        // Reparameterization: z = μ + e^{s/2} ⊙ ε.
        let mut z = Matrix::zeros(b, l_dim);
        let mut std = Matrix::zeros(b, l_dim);
        for i in 0..b * l_dim {
            let s = (logvar.data()[i] * half).exp();
            std.data_mut()[i] = s;
            z.data_mut()[i] = mu.data()[i] + s * eps.data()[i];
        }

        // Decoder forward.
        let mut d = z.clone();
        let mut dec_masks = Vec::with_capacity(self.dec_layers.len());
        for l in &mut self.dec_layers {
            d = l.forward(&d, true);
            dec_masks.push(relu_forward(&mut d));
        }
        let logits = self.dec_out.forward(&d, true);

        // Reconstruction term and its gradient wrt logits.
        let mut grad_logits = Matrix::zeros(b, self.arch.input_dim);
        let recon = match self.arch.likelihood {
            Likelihood::Bernoulli => bernoulli_nll_with_logits(&logits, batch, &mut grad_logits),
            Likelihood::GaussianUnitVariance => {
                gaussian_nll_with_logits(&logits, batch, &mut grad_logits)
            }
        };

        // KL(N(μ_q, diag e^s) ‖ N(μ_p, Λ_p⁻¹)) per datum, plus gradients.
        let mut kl = S::zero();
        let mut grad_mu_kl = Matrix::zeros(b, l_dim);
        let mut grad_lv_kl = Matrix::zeros(b, l_dim);
        for r in 0..b {
            let prior = priors[r];
            if prior.mu.len() != l_dim {
                return Err(VaeError::ShapeMismatch { expected: l_dim, got: prior.mu.len() });
            }
            let lam = prior.lambda.matrix();
            let mu_r = mu.row(r);
            let lv_r = logvar.row(r);
            let delta: Vec<S> = mu_r.iter().zip(&prior.mu).map(|(q, p)| *q - *p).collect();
            let quad = prior.lambda.quad_form(&delta)?;
            let log_det = prior.lambda.log_det()?;
            let mut trace = S::zero();
            let mut sum_s = S::zero();
            for i in 0..l_dim {
                trace = trace + lam[(i, i)] * lv_r[i].exp();
                sum_s = sum_s + lv_r[i];
            }
            kl = kl + half * (trace + quad - S::cast_from(l_dim as f64) - log_det - sum_s);
            let gmu = prior.lambda.matrix().mat_vec(&delta);
            for i in 0..l_dim {
                grad_mu_kl[(r, i)] = gmu[i];
                grad_lv_kl[(r, i)] = half * (lam[(i, i)] * lv_r[i].exp() - one);
            }
        }

        // Backward: decoder.
        let mut g = self.dec_out.backward(&grad_logits);
        for (l, mask) in self.dec_layers.iter_mut().zip(&dec_masks).rev() {
            relu_backward(&mut g, mask);
            g = l.backward(&g);
        }
        let grad_z = g;

        // Through the reparameterization into the heads, adding KL terms.
        let mut grad_mu = grad_z.clone();
        for i in 0..b * l_dim {
            grad_mu.data_mut()[i] += grad_mu_kl.data()[i];
        }
        let mut grad_lv = Matrix::zeros(b, l_dim);
        for i in 0..b * l_dim {
            grad_lv.data_mut()[i] = grad_z.data()[i] * eps.data()[i] * half * std.data()[i]
                + grad_lv_kl.data()[i];
        }
        let gh_mu = self.head_mu.backward(&grad_mu);
        let gh_lv = self.head_logvar.backward(&grad_lv);
        let mut g = gh_mu;
        for i in 0..g.rows() * g.cols() {
            g.data_mut()[i] += gh_lv.data()[i];
        }
        for (l, mask) in self.enc_layers.iter_mut().zip(&enc_masks).rev() {
            relu_backward(&mut g, mask);
            g = l.backward(&g);
        }

        Ok(recon + kl)
    }

    /// Runs `iters` Adam steps with sign-selected priors derived from `phi`.
    /// Full-batch unless `cfg.batch_size` is set. Bit-deterministic for a
    /// fixed rng state.
    pub fn train(
        &mut self,
        data: &[Vec<S>],
        priors: &[&LatentPrior<S>],
        iters: usize,
        cfg: &TrainConfig<S>,
        rng: &mut RngStream,
    ) -> Result<TrainReport, VaeError> {
        if data.len() != priors.len() {
            return Err(VaeError::ShapeMismatch { expected: data.len(), got: priors.len() });
        }
        if iters == 0 || data.is_empty() {
            return Ok(TrainReport::default());
        }
        let d = data.len();
        let batch_size = cfg.batch_size.unwrap_or(d).min(d).max(1);
        let n_batches = d.div_ceil(batch_size);
        let batches: Vec<(Matrix<S>, Vec<&LatentPrior<S>>)> = (0..n_batches)
            .map(|bi| {
                let lo = bi * batch_size;
                let hi = (lo + batch_size).min(d);
                let m = Matrix::from_rows(&data[lo..hi].to_vec());
                (m, priors[lo..hi].to_vec())
            })
            .collect();

        let sizes: Vec<usize> = self.parameters().iter().map(|t| t.len()).collect();
        let mut adam = Adam::new(cfg.adam, &sizes);
        let mut report = TrainReport { steps: iters, ..TrainReport::default() };
        for step in 0..iters {
            let (batch, batch_priors) = &batches[step % n_batches];
            self.zero_grad();
            let loss = self.elbo_loss(batch, batch_priors, rng)?;
            let loss_f = loss.cast_f64();
            if !loss_f.is_finite() {
                return Err(VaeError::NonFinite { step, loss: loss_f });
            }
            let mut params = self.parameters();
            adam.step(&mut params);
            if params.iter().any(|t| !t.all_finite()) {
                return Err(VaeError::NonFinite { step, loss: loss_f });
            }
            if step == 0 {
                report.first_loss = loss_f;
            }
            report.last_loss = loss_f;
        }
        Ok(report)
    }

    /// Versioned binary checkpoint: magic, arch header, shape table, then
    /// little-endian f64 arrays.
    pub fn save<W: Write>(&self, out: &mut W) -> Result<(), VaeError> {
        out.write_all(VAE_CHECKPOINT_MAGIC)?;
        write_u32(out, 1)?; // version
        write_u32(
            out,
            match self.arch.likelihood {
                Likelihood::Bernoulli => 0,
                Likelihood::GaussianUnitVariance => 1,
            },
        )?;
        write_u32(out, self.arch.input_dim as u32)?;
        write_u32(out, self.arch.latent_dim as u32)?;
        write_u32(out, self.arch.hidden.len() as u32)?;
        for &h in &self.arch.hidden {
            write_u32(out, h as u32)?;
        }
        let tensors = self.tensor_list();
        write_u32(out, tensors.len() as u32)?;
        for t in &tensors {
            write_u32(out, 2)?;
            write_u32(out, t.rows as u32)?;
            write_u32(out, t.cols as u32)?;
        }
        for t in &tensors {
            for v in &t.values {
                out.write_all(&v.cast_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(input: &mut R) -> Result<Self, VaeError> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != VAE_CHECKPOINT_MAGIC {
            return Err(VaeError::BadMagic);
        }
        let version = read_u32(input)?;
        if version != 1 {
            return Err(VaeError::BadVersion(version));
        }
        let likelihood = match read_u32(input)? {
            0 => Likelihood::Bernoulli,
            _ => Likelihood::GaussianUnitVariance,
        };
        let input_dim = read_u32(input)? as usize;
        let latent_dim = read_u32(input)? as usize;
        let n_hidden = read_u32(input)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u32(input)? as usize);
        }
        let arch = VaeArch { input_dim, hidden, latent_dim, likelihood };
        let n_tensors = read_u32(input)? as usize;
        let mut shapes = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let rank = read_u32(input)?;
            if rank != 2 {
                return Err(VaeError::BadVersion(rank));
            }
            let rows = read_u32(input)? as usize;
            let cols = read_u32(input)? as usize;
            shapes.push((rows, cols));
        }
        let mut rng = RngStream::new(0);
        let mut vae = Self::new(arch, &mut rng);
        {
            let mut tensors = vae.parameters();
            if tensors.len() != n_tensors {
                return Err(VaeError::BadMagic);
            }
            for (t, &(rows, cols)) in tensors.iter_mut().zip(&shapes) {
                if (t.rows, t.cols) != (rows, cols) {
                    return Err(VaeError::ShapeMismatch { expected: t.rows * t.cols, got: rows * cols });
                }
                for v in t.values.iter_mut() {
                    let mut buf = [0u8; 8];
                    input.read_exact(&mut buf)?;
                    *v = S::cast_from(f64::from_le_bytes(buf));
                }
            }
        }
        Ok(vae)
    }

    fn tensor_list(&self) -> Vec<&Tensor<S>> {
        let mut ps = Vec::new();
        for l in &self.enc_layers {
            ps.push(&l.weight);
            ps.push(&l.bias);
        }
        ps.push(&self.head_mu.weight);
        ps.push(&self.head_mu.bias);
        ps.push(&self.head_logvar.weight);
        ps.push(&self.head_logvar.bias);
        for l in &self.dec_layers {
            ps.push(&l.weight);
            ps.push(&l.bias);
        }
        ps.push(&self.dec_out.weight);
        ps.push(&self.dec_out.bias);
        ps
    }
}

/// `z = μ + e^{s/2} ⊙ ε` with fresh standard-normal noise.
pub fn reparameterize<S: Scalar>(mu: &[S], logvar: &[S], rng: &mut RngStream) -> Vec<S> {
    debug_assert_eq!(mu.len(), logvar.len());
    let half = S::cast_from(0.5);
    mu.iter()
        .zip(logvar)
        .map(|(m, s)| *m + (*s * half).exp() * rng.standard_normal())
        .collect()
}

/// Closed-form `KL(N(μ_q, diag e^{s_q}) ‖ N(μ_p, Λ_p⁻¹))`; non-negative,
/// zero iff the moments match.
pub fn kl_to_full_gaussian<S: Scalar>(
    mu_q: &[S],
    logvar_q: &[S],
    prior: &LatentPrior<S>,
) -> Result<S, VaeError> {
    let l = prior.mu.len();
    if mu_q.len() != l || logvar_q.len() != l {
        return Err(VaeError::ShapeMismatch { expected: l, got: mu_q.len() });
    }
    let lam = prior.lambda.matrix();
    let delta: Vec<S> = mu_q.iter().zip(&prior.mu).map(|(q, p)| *q - *p).collect();
    let quad = prior.lambda.quad_form(&delta)?;
    let log_det = prior.lambda.log_det()?;
    let mut trace = S::zero();
    let mut sum_s = S::zero();
    for i in 0..l {
        trace = trace + lam[(i, i)] * logvar_q[i].exp();
        sum_s = sum_s + logvar_q[i];
    }
    let half = S::cast_from(0.5);
    Ok(half * (trace + quad - S::cast_from(l as f64) - log_det - sum_s))
}

fn write_u32<W: Write>(out: &mut W, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
