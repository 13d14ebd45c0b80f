//! The naming-game schedule: per iteration, agent A speaks to B over every
//! object, B learns and re-perceives, then roles flip. Comparison conditions
//! swap the speaking phases out: no communication, all-acceptance, the
//! centralized Gibbs topline, and the one-way (no turn-taking) variant.

use std::time::Instant;

use crate::agent::{Agent, AgentError, AgentId, MiSchedule};
use crate::gmm::{centralized_sign_logits, GmmError, Sign};
use crate::metrics::{adjusted_rand_index, cohen_kappa, MetricsError};
use crate::probability::{sample_categorical_log, NwHyper, ProbError};
use crate::rng::RngStream;
use crate::vae::{Likelihood, TrainConfig, VaeArch};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// The Metropolis-Hastings naming game with turn-taking.
    Mh,
    /// Both agents infer signs locally; nothing crosses.
    NoComm,
    /// Listener adopts every proposal (acceptance forced to 1).
    AllAccept,
    /// Centralized sampler reading both agents' latents — the topline.
    GibbsTopline,
    /// Only A ever speaks; B listens with the MH rule.
    MhOneWay,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Mh => "mh",
            Condition::NoComm => "no_comm",
            Condition::AllAccept => "all_accept",
            Condition::GibbsTopline => "gibbs_topline",
            Condition::MhOneWay => "mh_one_way",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mh" => Some(Condition::Mh),
            "no_comm" => Some(Condition::NoComm),
            "all_accept" => Some(Condition::AllAccept),
            "gibbs_topline" => Some(Condition::GibbsTopline),
            "mh_one_way" => Some(Condition::MhOneWay),
            _ => None,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How agents perceive: injected latents or a VAE over raw images.
#[derive(Clone, Debug)]
pub enum PerceptionConfig {
    Latent,
    Vae { hidden: Vec<usize>, likelihood: Likelihood, pretrain_iters: usize },
}

#[derive(Clone, Debug)]
pub struct GameConfig<S> {
    pub k: usize,
    /// T, the number of naming-game iterations.
    pub iterations: usize,
    pub latent_dim: usize,
    pub condition: Condition,
    pub mi_enabled: bool,
    pub schedule: MiSchedule,
    pub hyper: NwHyper<S>,
    pub master_seed: u64,
    pub perception: PerceptionConfig,
    pub train: TrainConfig<S>,
    /// Visit objects in a shuffled order each iteration instead of 0..D.
    pub shuffled_order: bool,
}

impl<S: Scalar> GameConfig<S> {
    /// Latent-injection config with the defaults used by the small oracles.
    pub fn latent_game(k: usize, latent_dim: usize, iterations: usize, seed: u64) -> Self {
        Self {
            k,
            iterations,
            latent_dim,
            condition: Condition::Mh,
            mi_enabled: true,
            schedule: MiSchedule { mi_rounds: 1, vae_iters_per_round: 0 },
            hyper: NwHyper::defaults(latent_dim),
            master_seed: seed,
            perception: PerceptionConfig::Latent,
            train: TrainConfig::default(),
            shuffled_order: false,
        }
    }

    fn validate(&self, d_a: usize, d_b: usize, truth: usize) -> Result<(), GameError> {
        if self.k < 1 {
            return Err(GameError::Config("K must be at least 1".into()));
        }
        if self.latent_dim < 1 {
            return Err(GameError::Config("latent_dim must be at least 1".into()));
        }
        if d_a == 0 {
            return Err(GameError::Config("empty observation set".into()));
        }
        if d_a != d_b || d_a != truth {
            return Err(GameError::Config(format!(
                "joint attention requires equal lengths: |obs_a|={d_a}, |obs_b|={d_b}, |truth|={truth}"
            )));
        }
        if self.hyper.dim() != self.latent_dim {
            return Err(GameError::Config(format!(
                "hyper dimension {} does not match latent_dim {}",
                self.hyper.dim(),
                self.latent_dim
            )));
        }
        Ok(())
    }
}

/// One iteration's record: metrics against the supplied truth labels,
/// acceptance counts per direction, sign snapshots, and wall-clock time.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub t: usize,
    pub ari_a: f64,
    pub ari_b: f64,
    pub kappa: Option<f64>,
    pub accepted_ab: Option<usize>,
    pub accepted_ba: Option<usize>,
    /// Sign proposals that crossed the boundary this iteration, per
    /// direction — the protocol audit counter.
    pub proposals_ab: usize,
    pub proposals_ba: usize,
    pub wall_ms: f64,
    pub w_a: Vec<Sign>,
    pub w_b: Vec<Sign>,
}

#[derive(Clone, Debug, Default)]
pub struct GameTrace {
    pub iterations: Vec<IterationRecord>,
}

impl GameTrace {
    /// CSV rows `t, ari_a, ari_b, kappa, acc_ab, acc_ba` with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ari_a,ari_b,kappa,acc_ab,acc_ba\n");
        for r in &self.iterations {
            let kappa = r.kappa.map(|k| format!("{k:.6}")).unwrap_or_default();
            let acc_ab = r.accepted_ab.map(|a| a.to_string()).unwrap_or_default();
            let acc_ba = r.accepted_ba.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{},{}\n",
                r.t, r.ari_a, r.ari_b, kappa, acc_ab, acc_ba
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

/// The full outcome: the trace plus both trained agents.
#[derive(Debug)]
pub struct GameOutcome<S> {
    pub trace: GameTrace,
    pub agent_a: Agent<S>,
    pub agent_b: Agent<S>,
}

/// One MH exchange about object `d`: the speaker utters a sign, the listener
/// judges it. Exactly one sign value crosses the boundary.
pub fn mh_communication<S: Scalar>(
    speaker: &mut Agent<S>,
    listener: &mut Agent<S>,
    d: usize,
) -> Result<Sign, GameError> {
    let sign = speaker.utter(d)?;
    Ok(listener.judge(d, sign)?)
}

fn speak_phase<S: Scalar>(
    speaker: &mut Agent<S>,
    listener: &mut Agent<S>,
    order: &[usize],
) -> Result<(usize, usize), GameError> {
    let mut accepted = 0;
    for &d in order {
        let sign = speaker.utter(d)?;
        let adopted = listener.judge(d, sign)?;
        if adopted == sign {
            accepted += 1;
        }
    }
    Ok((accepted, order.len()))
}

fn build_agents<S: Scalar>(
    cfg: &GameConfig<S>,
    obs_a: &[Vec<S>],
    obs_b: &[Vec<S>],
) -> Result<(Agent<S>, Agent<S>), GameError> {
    match &cfg.perception {
        PerceptionConfig::Latent => {
            let a = Agent::with_latents(AgentId::A, cfg.k, cfg.hyper.clone(), obs_a, cfg.master_seed)?;
            let b = Agent::with_latents(AgentId::B, cfg.k, cfg.hyper.clone(), obs_b, cfg.master_seed)?;
            Ok((a, b))
        }
        PerceptionConfig::Vae { hidden, likelihood, .. } => {
            let arch = VaeArch {
                input_dim: obs_a[0].len(),
                hidden: hidden.clone(),
                latent_dim: cfg.latent_dim,
                likelihood: *likelihood,
            };
            let a = Agent::with_vae(
                AgentId::A,
                cfg.k,
                cfg.hyper.clone(),
                arch.clone(),
                obs_a,
                cfg.train,
                cfg.master_seed,
            )?;
            let b = Agent::with_vae(
                AgentId::B,
                cfg.k,
                cfg.hyper.clone(),
                arch,
                obs_b,
                cfg.train,
                cfg.master_seed,
            )?;
            Ok((a, b))
        }
    }
}

/// Runs the configured condition for `cfg.iterations` iterations. Truth
/// labels are used for metrics only; the game itself never sees them.
pub fn run<S: Scalar>(
    cfg: &GameConfig<S>,
    obs_a: &[Vec<S>],
    obs_b: &[Vec<S>],
    truth: &[usize],
) -> Result<GameOutcome<S>, GameError> {
    cfg.validate(obs_a.len(), obs_b.len(), truth.len())?;
    let d = obs_a.len();
    let (mut agent_a, mut agent_b) = build_agents(cfg, obs_a, obs_b)?;

    // Warm-up: train each VAE against a standard-normal prior before the
    // first exchange, so the latent geometry exists before signs commit.
    // With MI disabled this is the only VAE training the agents ever get.
    if let PerceptionConfig::Vae { pretrain_iters, .. } = &cfg.perception {
        agent_a.pretrain_standard_prior(obs_a, *pretrain_iters)?;
        agent_b.pretrain_standard_prior(obs_b, *pretrain_iters)?;
    }
    let schedule = if cfg.mi_enabled {
        cfg.schedule
    } else {
        MiSchedule { mi_rounds: 1, vae_iters_per_round: 0 }
    };

    // Stream 0 belongs to the game loop (topline draws, order shuffles).
    let mut game_rng = RngStream::substream(cfg.master_seed, 0);
    let mut trace = GameTrace::default();

    for t in 1..=cfg.iterations {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..d).collect();
        if cfg.shuffled_order {
            game_rng.shuffle(&mut order);
        }
        let mut accepted_ab = None;
        let mut accepted_ba = None;
        let mut proposals_ab = 0;
        let mut proposals_ba = 0;
        match cfg.condition {
            Condition::Mh => {
                let (acc, n) = speak_phase(&mut agent_a, &mut agent_b, &order)?;
                accepted_ab = Some(acc);
                proposals_ab = n;
                agent_b.learn(obs_b, &schedule)?;
                let (acc, n) = speak_phase(&mut agent_b, &mut agent_a, &order)?;
                accepted_ba = Some(acc);
                proposals_ba = n;
                agent_a.learn(obs_a, &schedule)?;
            }
            Condition::MhOneWay => {
                let (acc, n) = speak_phase(&mut agent_a, &mut agent_b, &order)?;
                accepted_ab = Some(acc);
                proposals_ab = n;
                agent_b.learn(obs_b, &schedule)?;
                // The speaker never listens; it keeps sampling its own signs
                // from its own posterior before learning.
                for &dd in &order {
                    agent_a.resample_own_sign(dd)?;
                }
                agent_a.learn(obs_a, &schedule)?;
            }
            Condition::NoComm => {
                for &dd in &order {
                    agent_b.resample_own_sign(dd)?;
                }
                agent_b.learn(obs_b, &schedule)?;
                for &dd in &order {
                    agent_a.resample_own_sign(dd)?;
                }
                agent_a.learn(obs_a, &schedule)?;
            }
            Condition::AllAccept => {
                for &dd in &order {
                    let sign = agent_a.utter(dd)?;
                    agent_b.adopt(dd, sign)?;
                }
                accepted_ab = Some(d);
                proposals_ab = d;
                agent_b.learn(obs_b, &schedule)?;
                for &dd in &order {
                    let sign = agent_b.utter(dd)?;
                    agent_a.adopt(dd, sign)?;
                }
                accepted_ba = Some(d);
                proposals_ba = d;
                agent_a.learn(obs_a, &schedule)?;
            }
            Condition::GibbsTopline => {
                // Both speaking phases are replaced by centralized joint
                // draws, keeping the per-iteration update budget of the
                // two-phase game.
                let mut joint_draw = |agent_a: &mut Agent<S>,
                                      agent_b: &mut Agent<S>,
                                      game_rng: &mut RngStream|
                 -> Result<(), GameError> {
                    for &dd in &order {
                        let logits = centralized_sign_logits(
                            agent_a.latent(dd),
                            agent_b.latent(dd),
                            agent_a.components_ref(),
                            agent_b.components_ref(),
                            agent_a.mixture_weights(),
                        )?;
                        let sign = sample_categorical_log(&logits, game_rng)?;
                        agent_a.adopt(dd, sign)?;
                        agent_b.adopt(dd, sign)?;
                    }
                    Ok(())
                };
                joint_draw(&mut agent_a, &mut agent_b, &mut game_rng)?;
                agent_b.learn(obs_b, &schedule)?;
                joint_draw(&mut agent_a, &mut agent_b, &mut game_rng)?;
                agent_a.learn(obs_a, &schedule)?;
            }
        }

        let w_a = agent_a.signs().as_slice().to_vec();
        let w_b = agent_b.signs().as_slice().to_vec();
        let ari_a = adjusted_rand_index(&w_a, truth)?;
        let ari_b = adjusted_rand_index(&w_b, truth)?;
        let kappa = if cfg.condition == Condition::GibbsTopline {
            Some(1.0)
        } else {
            cohen_kappa(&w_a, &w_b).ok()
        };
        trace.iterations.push(IterationRecord {
            t,
            ari_a,
            ari_b,
            kappa,
            accepted_ab,
            accepted_ba,
            proposals_ab,
            proposals_ba,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            w_a,
            w_b,
        });
    }

    Ok(GameOutcome { trace, agent_a, agent_b })
}
