//! One agent = a sign-indexed Gaussian mixture (φ) plus a VAE (θ, ψ) bound
//! behind exactly the behaviors the naming game needs: utter, judge, learn,
//! perceive, recall. No accessor exposes another agent's latents, mixture
//! parameters, or network weights to the game loop — signs are the only
//! values that cross.

use std::io::{Read, Write};
use std::path::Path;

use crate::gmm::{
    acceptance_probability, gibbs_sample_components, sample_sign, ComponentSet, GmmError,
    MixtureWeights, Sign, SignVector,
};
use crate::probability::{NwHyper, ProbError, SpdMatrix};
use crate::rng::{RngState, RngStream};
use crate::vae::{LatentPrior, PerceiveMode, TrainConfig, Vae, VaeArch, VaeError};
use crate::Scalar;

pub const AGENT_CHECKPOINT_MAGIC: &[u8; 7] = b"IGVAGT1";

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("object index {index} out of range for D = {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("observation count {got} does not match D = {expected}")]
    ObservationCount { expected: usize, got: usize },
    #[error("agent has no perception model for this operation")]
    NoPerceptionModel,
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad agent checkpoint")]
    BadCheckpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentId {
    A,
    B,
}

impl AgentId {
    /// Stream id for this agent under the master seed; 0 is reserved for the
    /// game loop itself.
    pub fn stream(self) -> u64 {
        match self {
            AgentId::A => 1,
            AgentId::B => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            AgentId::A => 'a',
            AgentId::B => 'b',
        }
    }
}

/// Mutual-inference schedule: how many VAE↔GMM rounds per learning phase and
/// how many optimizer steps per round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiSchedule {
    pub mi_rounds: usize,
    pub vae_iters_per_round: usize,
}

impl Default for MiSchedule {
    fn default() -> Self {
        Self { mi_rounds: 5, vae_iters_per_round: 100 }
    }
}

/// How the agent turns observations into latents.
#[derive(Clone, Debug)]
enum Perception<S> {
    /// Trained encoder/decoder.
    Vae(Box<Vae<S>>),
    /// Observations already are latents (synthetic and oracle runs).
    Identity,
}

#[derive(Clone, Debug)]
pub struct Agent<S> {
    id: AgentId,
    k: usize,
    latent_dim: usize,
    phi: ComponentSet<S>,
    perception: Perception<S>,
    z: Vec<Vec<S>>,
    w: SignVector,
    hyper: NwHyper<S>,
    pi: MixtureWeights<S>,
    rng: RngStream,
    train_cfg: TrainConfig<S>,
    perceive_mode: PerceiveMode,
}

impl<S: Scalar> Agent<S> {
    /// Agent with a VAE perception model. Initialization: network weights
    /// random, φ drawn from the prior, w uniform, z from the untrained
    /// encoder.
    pub fn with_vae(
        id: AgentId,
        k: usize,
        hyper: NwHyper<S>,
        arch: VaeArch,
        observations: &[Vec<S>],
        train_cfg: TrainConfig<S>,
        master_seed: u64,
    ) -> Result<Self, AgentError> {
        assert_eq!(arch.latent_dim, hyper.dim(), "latent dim mismatch");
        let mut rng = RngStream::substream(master_seed, id.stream());
        let vae = Vae::new(arch, &mut rng);
        let phi = ComponentSet::from_prior(k, &hyper, &mut rng)?;
        let w = SignVector::uniform_init(observations.len(), k, &mut rng);
        let mut agent = Self {
            id,
            k,
            latent_dim: hyper.dim(),
            phi,
            perception: Perception::Vae(Box::new(vae)),
            z: Vec::new(),
            w,
            hyper,
            pi: MixtureWeights::uniform(k),
            rng,
            train_cfg,
            perceive_mode: PerceiveMode::Sample,
        };
        agent.perceive_all(observations)?;
        Ok(agent)
    }

    /// Agent whose observations are injected latents (no VAE).
    pub fn with_latents(
        id: AgentId,
        k: usize,
        hyper: NwHyper<S>,
        latents: &[Vec<S>],
        master_seed: u64,
    ) -> Result<Self, AgentError> {
        let mut rng = RngStream::substream(master_seed, id.stream());
        let phi = ComponentSet::from_prior(k, &hyper, &mut rng)?;
        let w = SignVector::uniform_init(latents.len(), k, &mut rng);
        Ok(Self {
            id,
            k,
            latent_dim: hyper.dim(),
            phi,
            perception: Perception::Identity,
            z: latents.to_vec(),
            w,
            hyper,
            pi: MixtureWeights::uniform(k),
            rng,
            train_cfg: TrainConfig::default(),
            perceive_mode: PerceiveMode::Sample,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.z.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn set_perceive_mode(&mut self, mode: PerceiveMode) {
        self.perceive_mode = mode;
    }

    /// The agent's current sign beliefs. Signs may cross the boundary.
    pub fn signs(&self) -> &SignVector {
        &self.w
    }

    fn check_index(&self, d: usize) -> Result<(), AgentError> {
        if d >= self.d() {
            return Err(AgentError::IndexOutOfRange { index: d, d: self.d() });
        }
        Ok(())
    }

    /// Speaks a sign for object `d` by sampling the posterior over its own
    /// mixture. Consumes randomness but mutates no model state.
    pub fn utter(&mut self, d: usize) -> Result<Sign, AgentError> {
        self.check_index(d)?;
        Ok(sample_sign(&self.z[d], &self.phi, &self.pi, &mut self.rng)?)
    }

    /// Judges a proposed sign with the MH rule: accepts with probability
    /// `min(1, P(z_d|φ,w_sp)/P(z_d|φ,w_d))`, updating and returning its own
    /// sign for `d`. Only `w[d]` is ever mutated.
    pub fn judge(&mut self, d: usize, w_sp: Sign) -> Result<Sign, AgentError> {
        self.check_index(d)?;
        let r = acceptance_probability(&self.z[d], &self.phi, w_sp, self.w.get(d))?;
        let u: S = self.rng.uniform();
        if u <= r {
            self.w.set(d, w_sp);
        }
        Ok(self.w.get(d))
    }

    /// Redraws its own sign for `d` from its own posterior (the
    /// no-communication update; also the speaking agent's self-update in the
    /// one-way game).
    pub fn resample_own_sign(&mut self, d: usize) -> Result<Sign, AgentError> {
        self.check_index(d)?;
        let w = sample_sign(&self.z[d], &self.phi, &self.pi, &mut self.rng)?;
        self.w.set(d, w);
        Ok(w)
    }

    /// Unconditionally adopts a sign (the all-acceptance condition and the
    /// centralized topline write-back).
    pub fn adopt(&mut self, d: usize, w: Sign) -> Result<(), AgentError> {
        self.check_index(d)?;
        if w >= self.k {
            return Err(GmmError::SignOutOfRange { sign: w, k: self.k }.into());
        }
        self.w.set(d, w);
        Ok(())
    }

    /// Learning phase: `mi_rounds` rounds of (train the VAE with per-datum
    /// sign-selected priors, re-perceive, Gibbs-refresh φ). With no VAE or
    /// zero training iterations this degenerates to pure mixture refreshes.
    pub fn learn(
        &mut self,
        observations: &[Vec<S>],
        schedule: &MiSchedule,
    ) -> Result<(), AgentError> {
        if observations.len() != self.d() {
            return Err(AgentError::ObservationCount {
                expected: self.d(),
                got: observations.len(),
            });
        }
        for _ in 0..schedule.mi_rounds.max(1) {
            if schedule.vae_iters_per_round > 0 {
                if let Perception::Vae(vae) = &mut self.perception {
                    let priors: Vec<LatentPrior<S>> = self
                        .phi
                        .components()
                        .iter()
                        .map(|c| LatentPrior { mu: c.mu.clone(), lambda: c.lambda.clone() })
                        .collect();
                    let per_datum: Vec<&LatentPrior<S>> =
                        self.w.iter().map(|&wd| &priors[wd]).collect();
                    vae.train(
                        observations,
                        &per_datum,
                        schedule.vae_iters_per_round,
                        &self.train_cfg,
                        &mut self.rng,
                    )?;
                }
            }
            self.perceive_all(observations)?;
            self.refresh_components()?;
        }
        Ok(())
    }

    /// Re-perceives every observation into a fresh latent.
    pub fn perceive_all(&mut self, observations: &[Vec<S>]) -> Result<(), AgentError> {
        match &self.perception {
            Perception::Identity => {
                self.z = observations.to_vec();
            }
            Perception::Vae(vae) => {
                let mut z = Vec::with_capacity(observations.len());
                for o in observations {
                    z.push(vae.perceive(o, &mut self.rng, self.perceive_mode)?);
                }
                self.z = z;
            }
        }
        Ok(())
    }

    /// One conjugate Gibbs sweep over the mixture components.
    pub fn refresh_components(&mut self) -> Result<(), AgentError> {
        self.phi = gibbs_sample_components(&self.z, &self.w, &self.hyper, self.k, &mut self.rng)?;
        Ok(())
    }

    /// Trains the VAE once with a standard-normal prior (the decoupled,
    /// MI-disabled regime), then re-perceives and refreshes φ.
    pub fn pretrain_standard_prior(
        &mut self,
        observations: &[Vec<S>],
        iters: usize,
    ) -> Result<(), AgentError> {
        if let Perception::Vae(vae) = &mut self.perception {
            let prior = LatentPrior::standard(self.latent_dim);
            let per_datum: Vec<&LatentPrior<S>> = observations.iter().map(|_| &prior).collect();
            vae.train(observations, &per_datum, iters, &self.train_cfg, &mut self.rng)?;
        }
        self.perceive_all(observations)?;
        self.refresh_components()?;
        Ok(())
    }

    /// Recalls an image from a sign by decoding the sign's component mean.
    pub fn recall(&self, w: Sign) -> Result<Vec<S>, AgentError> {
        match &self.perception {
            Perception::Vae(vae) => Ok(vae.recall_image(&self.phi, w)?),
            Perception::Identity => Err(AgentError::NoPerceptionModel),
        }
    }

    /// Post-hoc diagnostic dump of the latents for offline analysis (CSV
    /// export, projections). Never called by the game loop.
    pub fn export_latents(&self) -> &[Vec<S>] {
        &self.z
    }

    pub(crate) fn latent(&self, d: usize) -> &[S] {
        &self.z[d]
    }

    pub(crate) fn components_ref(&self) -> &ComponentSet<S> {
        &self.phi
    }

    pub(crate) fn mixture_weights(&self) -> &MixtureWeights<S> {
        &self.pi
    }

    /// Versioned single-file checkpoint: mixture, signs, latents, hyper, rng
    /// state, and the embedded VAE blob when present.
    pub fn save<W: Write>(&self, out: &mut W) -> Result<(), AgentError> {
        out.write_all(AGENT_CHECKPOINT_MAGIC)?;
        w_u32(out, 1)?;
        out.write_all(&[match self.id {
            AgentId::A => 0u8,
            AgentId::B => 1,
        }])?;
        let has_vae = matches!(self.perception, Perception::Vae(_));
        out.write_all(&[u8::from(has_vae)])?;
        out.write_all(&[match self.perceive_mode {
            PerceiveMode::Sample => 0u8,
            PerceiveMode::Mean => 1,
        }])?;
        w_u32(out, self.k as u32)?;
        w_u32(out, self.d() as u32)?;
        w_u32(out, self.latent_dim as u32)?;
        // hyper
        w_f64(out, self.hyper.alpha.cast_f64())?;
        w_f64(out, self.hyper.nu.cast_f64())?;
        for v in &self.hyper.m {
            w_f64(out, v.cast_f64())?;
        }
        for v in self.hyper.beta.matrix().data() {
            w_f64(out, v.cast_f64())?;
        }
        // phi
        for c in self.phi.components() {
            for v in &c.mu {
                w_f64(out, v.cast_f64())?;
            }
            for v in c.lambda.matrix().data() {
                w_f64(out, v.cast_f64())?;
            }
        }
        // w, z
        for &wd in self.w.iter() {
            w_u32(out, wd as u32)?;
        }
        for zd in &self.z {
            for v in zd {
                w_f64(out, v.cast_f64())?;
            }
        }
        // rng
        let st = self.rng.state();
        out.write_all(&st.seed.to_le_bytes())?;
        out.write_all(&st.stream.to_le_bytes())?;
        out.write_all(&st.word_pos.to_le_bytes())?;
        // vae blob
        if let Perception::Vae(vae) = &self.perception {
            let mut blob = Vec::new();
            vae.save(&mut blob)?;
            out.write_all(&(blob.len() as u64).to_le_bytes())?;
            out.write_all(&blob)?;
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<(), AgentError> {
        let mut f = std::fs::File::create(path)?;
        self.save(&mut f)
    }

    pub fn load<R: Read>(input: &mut R) -> Result<Self, AgentError> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != AGENT_CHECKPOINT_MAGIC {
            return Err(AgentError::BadCheckpoint);
        }
        if r_u32(input)? != 1 {
            return Err(AgentError::BadCheckpoint);
        }
        let mut b3 = [0u8; 3];
        input.read_exact(&mut b3)?;
        let id = if b3[0] == 0 { AgentId::A } else { AgentId::B };
        let has_vae = b3[1] != 0;
        let perceive_mode = if b3[2] == 0 { PerceiveMode::Sample } else { PerceiveMode::Mean };
        let k = r_u32(input)? as usize;
        let d = r_u32(input)? as usize;
        let latent_dim = r_u32(input)? as usize;
        let alpha = S::cast_from(r_f64(input)?);
        let nu = S::cast_from(r_f64(input)?);
        let mut m = Vec::with_capacity(latent_dim);
        for _ in 0..latent_dim {
            m.push(S::cast_from(r_f64(input)?));
        }
        let beta = SpdMatrix::from_symmetric_unchecked(r_matrix(input, latent_dim)?);
        let hyper = NwHyper::new(m, alpha, nu, beta).map_err(|_| AgentError::BadCheckpoint)?;
        let mut comps = Vec::with_capacity(k);
        for _ in 0..k {
            let mut mu = Vec::with_capacity(latent_dim);
            for _ in 0..latent_dim {
                mu.push(S::cast_from(r_f64(input)?));
            }
            let lambda = SpdMatrix::from_symmetric_unchecked(r_matrix(input, latent_dim)?);
            comps.push(crate::gmm::Component { mu, lambda });
        }
        let phi = ComponentSet::new(comps).map_err(|_| AgentError::BadCheckpoint)?;
        let mut w = Vec::with_capacity(d);
        for _ in 0..d {
            w.push(r_u32(input)? as usize);
        }
        let mut z = Vec::with_capacity(d);
        for _ in 0..d {
            let mut zd = Vec::with_capacity(latent_dim);
            for _ in 0..latent_dim {
                zd.push(S::cast_from(r_f64(input)?));
            }
            z.push(zd);
        }
        let mut seed8 = [0u8; 8];
        input.read_exact(&mut seed8)?;
        let mut stream8 = [0u8; 8];
        input.read_exact(&mut stream8)?;
        let mut pos16 = [0u8; 16];
        input.read_exact(&mut pos16)?;
        let rng = RngStream::restore(&RngState {
            seed: u64::from_le_bytes(seed8),
            stream: u64::from_le_bytes(stream8),
            word_pos: u128::from_le_bytes(pos16),
        });
        let perception = if has_vae {
            let mut len8 = [0u8; 8];
            input.read_exact(&mut len8)?;
            let len = u64::from_le_bytes(len8) as usize;
            let mut blob = vec![0u8; len];
            input.read_exact(&mut blob)?;
            Perception::Vae(Box::new(Vae::load(&mut blob.as_slice())?))
        } else {
            Perception::Identity
        };
        Ok(Self {
            id,
            k,
            latent_dim,
            phi,
            perception,
            z,
            w: SignVector::new(w),
            hyper,
            pi: MixtureWeights::uniform(k),
            rng,
            train_cfg: TrainConfig::default(),
            perceive_mode,
        })
    }

    pub fn load_from_path(path: &Path) -> Result<Self, AgentError> {
        let mut f = std::fs::File::open(path)?;
        Self::load(&mut f)
    }
}

fn w_u32<W: Write>(out: &mut W, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn w_f64<W: Write>(out: &mut W, v: f64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn r_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_f64<R: Read>(input: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn r_matrix<S: Scalar, R: Read>(
    input: &mut R,
    dim: usize,
) -> Result<crate::linalg::Matrix<S>, AgentError> {
    let mut m = crate::linalg::Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = S::cast_from(r_f64(input)?);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Component;
    use crate::vae::Likelihood;

    fn latents_two_clusters(d: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = RngStream::new(1234);
        let mut z = Vec::new();
        let mut truth = Vec::new();
        for i in 0..d {
            let c = i % 2;
            let center = if c == 0 { -6.0 } else { 6.0 };
            z.push(vec![
                center + 0.4 * rng.standard_normal::<f64>(),
                0.4 * rng.standard_normal::<f64>(),
            ]);
            truth.push(c);
        }
        (z, truth)
    }

    fn latent_agent(seed: u64) -> Agent<f64> {
        let (z, _) = latents_two_clusters(20);
        Agent::with_latents(AgentId::A, 2, NwHyper::defaults(2), &z, seed).unwrap()
    }

    #[test]
    fn utter_single_component_always_zero() {
        let (z, _) = latents_two_clusters(6);
        let mut a =
            Agent::with_latents(AgentId::A, 1, NwHyper::defaults(2), &z, 7).unwrap();
        for d in 0..6 {
            assert_eq!(a.utter(d).unwrap(), 0);
        }
    }

    #[test]
    fn utter_separated_component_dominates() {
        let mut a = latent_agent(8);
        // Inject well-separated components by learning on the true split.
        for d in 0..20 {
            a.w.set(d, d % 2);
        }
        a.refresh_components().unwrap();
        // Latent 0 sits near -6; its own component must dominate.
        let mut hits = 0;
        let w0 = a.w.get(0);
        for _ in 0..200 {
            if a.utter(0).unwrap() == w0 {
                hits += 1;
            }
        }
        assert!(hits > 198, "hits {hits}");
    }

    #[test]
    fn utter_distribution_matches_sign_logits() {
        let mut a = latent_agent(9);
        let logits = crate::gmm::sign_logits(&a.z[3], &a.phi, &a.pi).unwrap();
        let lse = crate::probability::log_sum_exp(&logits);
        let p1 = (logits[1] - lse).exp();
        let n = 40_000;
        let mut ones = 0;
        for _ in 0..n {
            if a.utter(3).unwrap() == 1 {
                ones += 1;
            }
        }
        let f = ones as f64 / n as f64;
        assert!((f - p1).abs() < 0.01, "{f} vs {p1}");
    }

    #[test]
    fn judge_same_sign_is_identity() {
        let mut a = latent_agent(10);
        for d in 0..a.d() {
            let own = a.w.get(d);
            assert_eq!(a.judge(d, own).unwrap(), own);
        }
    }

    #[test]
    fn judge_mutates_only_signs() {
        let mut a = latent_agent(11);
        let phi_before = a.phi.clone();
        let z_before = a.z.clone();
        for d in 0..a.d() {
            let _ = a.judge(d, (d + 1) % 2).unwrap();
        }
        assert_eq!(a.phi, phi_before);
        assert_eq!(a.z, z_before);
    }

    #[test]
    fn judge_acceptance_frequency_matches_r() {
        // Fixed φ with known ratio: z at component 0's mean, proposal = 1.
        let z = vec![vec![0.0f64]];
        let mut a = Agent::with_latents(AgentId::B, 2, NwHyper::defaults(1), &z, 12).unwrap();
        a.phi = ComponentSet::new(vec![
            Component { mu: vec![0.0], lambda: SpdMatrix::identity(1) },
            Component { mu: vec![2.0], lambda: SpdMatrix::identity(1) },
        ])
        .unwrap();
        let r_expect = (-2.0f64).exp();
        let n = 100_000;
        let mut accepted = 0;
        for _ in 0..n {
            a.w.set(0, 0);
            if a.judge(0, 1).unwrap() == 1 {
                accepted += 1;
            }
        }
        let f = accepted as f64 / n as f64;
        assert!((f - r_expect).abs() < 0.005, "acceptance {f} vs {r_expect}");
    }

    #[test]
    fn learn_pure_gmm_refresh_recovers_clusters() {
        let (z, truth) = latents_two_clusters(60);
        let mut a =
            Agent::with_latents(AgentId::A, 2, NwHyper::defaults(2), &z, 13).unwrap();
        let schedule = MiSchedule { mi_rounds: 1, vae_iters_per_round: 0 };
        for _ in 0..30 {
            for d in 0..a.d() {
                a.resample_own_sign(d).unwrap();
            }
            a.learn(&z, &schedule).unwrap();
        }
        let ari = crate::metrics::adjusted_rand_index(a.signs().as_slice(), &truth).unwrap();
        assert!(ari > 0.9, "ARI {ari}");
    }

    #[test]
    fn learn_leaves_shapes_unchanged() {
        let (z, _) = latents_two_clusters(10);
        let mut a =
            Agent::with_latents(AgentId::A, 3, NwHyper::defaults(2), &z, 14).unwrap();
        a.learn(&z, &MiSchedule { mi_rounds: 2, vae_iters_per_round: 0 }).unwrap();
        assert_eq!(a.d(), 10);
        assert_eq!(a.k(), 3);
        assert_eq!(a.latent_dim(), 2);
    }

    #[test]
    fn learn_deterministic_under_seed() {
        let (z, _) = latents_two_clusters(16);
        let run = || {
            let mut a =
                Agent::with_latents(AgentId::B, 2, NwHyper::defaults(2), &z, 15).unwrap();
            a.learn(&z, &MiSchedule { mi_rounds: 3, vae_iters_per_round: 0 }).unwrap();
            (a.w.clone(), a.phi.clone())
        };
        let (w1, phi1) = run();
        let (w2, phi2) = run();
        assert_eq!(w1, w2);
        assert_eq!(phi1, phi2);
    }

    #[test]
    fn vae_agent_learn_separates_two_patterns() {
        // Two 8x8 glyphs (bright left half vs bright right half). The
        // sign-prior feedback between mixture and encoder should lock the
        // agent's own signs onto the true split within a dozen sweeps.
        let mut rng = RngStream::new(99);
        let mut obs = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let mut img = vec![0.05f64; 64];
            for y in 0..8 {
                for x in 0..8 {
                    let bright = if c == 0 { x < 4 } else { x >= 4 };
                    if bright {
                        img[y * 8 + x] = 0.95;
                    }
                }
            }
            for v in &mut img {
                *v = (*v + 0.08 * rng.standard_normal::<f64>()).clamp(0.0, 1.0);
            }
            obs.push(img);
            truth.push(c);
        }
        let arch = VaeArch {
            input_dim: 64,
            hidden: vec![32],
            latent_dim: 2,
            likelihood: Likelihood::Bernoulli,
        };
        let mut a = Agent::with_vae(
            AgentId::A,
            2,
            NwHyper::defaults(2),
            arch,
            &obs,
            TrainConfig::default(),
            16,
        )
        .unwrap();
        let schedule = MiSchedule { mi_rounds: 2, vae_iters_per_round: 60 };
        for _ in 0..12 {
            for d in 0..a.d() {
                a.resample_own_sign(d).unwrap();
            }
            a.learn(&obs, &schedule).unwrap();
        }
        let ari = crate::metrics::adjusted_rand_index(a.signs().as_slice(), &truth).unwrap();
        assert!(ari > 0.9, "within-agent ARI {ari}");
    }

    #[test]
    fn perceive_all_identity_keeps_latents() {
        let (z, _) = latents_two_clusters(8);
        let mut a =
            Agent::with_latents(AgentId::A, 2, NwHyper::defaults(2), &z, 17).unwrap();
        a.perceive_all(&z).unwrap();
        assert_eq!(a.z, z);
        assert_eq!(a.d(), 8);
    }

    #[test]
    fn perceive_mean_mode_deterministic() {
        let obs: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64; 6]).collect();
        let arch = VaeArch {
            input_dim: 6,
            hidden: vec![8],
            latent_dim: 2,
            likelihood: Likelihood::Bernoulli,
        };
        let mut a = Agent::with_vae(
            AgentId::B,
            2,
            NwHyper::defaults(2),
            arch,
            &obs,
            TrainConfig::default(),
            18,
        )
        .unwrap();
        a.set_perceive_mode(PerceiveMode::Mean);
        a.perceive_all(&obs).unwrap();
        let z1 = a.z.clone();
        a.perceive_all(&obs).unwrap();
        assert_eq!(z1, a.z);
    }

    #[test]
    fn recall_requires_vae() {
        let a = latent_agent(19);
        assert!(matches!(a.recall(0), Err(AgentError::NoPerceptionModel)));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_state_and_rng() {
        let (z, _) = latents_two_clusters(12);
        let mut a =
            Agent::with_latents(AgentId::B, 2, NwHyper::defaults(2), &z, 20).unwrap();
        a.learn(&z, &MiSchedule { mi_rounds: 1, vae_iters_per_round: 0 }).unwrap();
        let mut buf = Vec::new();
        a.save(&mut buf).unwrap();
        let mut b = Agent::<f64>::load(&mut buf.as_slice()).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.z, b.z);
        // resumed rng produces identical draws
        for d in 0..a.d() {
            assert_eq!(a.utter(d).unwrap(), b.utter(d).unwrap());
        }
    }

    #[test]
    fn checkpoint_roundtrip_with_vae() {
        let obs: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|p| ((i + p) % 2) as f64).collect())
            .collect();
        let arch = VaeArch {
            input_dim: 4,
            hidden: vec![6],
            latent_dim: 2,
            likelihood: Likelihood::Bernoulli,
        };
        let a = Agent::with_vae(
            AgentId::A,
            2,
            NwHyper::defaults(2),
            arch,
            &obs,
            TrainConfig::default(),
            21,
        )
        .unwrap();
        let mut buf = Vec::new();
        a.save(&mut buf).unwrap();
        let b = Agent::<f64>::load(&mut buf.as_slice()).unwrap();
        assert_eq!(a.z, b.z);
        let ra = a.recall(0).unwrap();
        let rb = b.recall(0).unwrap();
        assert_eq!(ra, rb);
    }
}
