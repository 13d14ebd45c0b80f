//! Experiment configuration: one human-editable TOML file describing the
//! dataset, the model, the game, and the sweep of conditions to run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use emcom_core::agent::MiSchedule;
use emcom_core::autodiff::AdamConfig;
use emcom_core::game::{Condition, GameConfig, PerceptionConfig};
use emcom_core::probability::{NwHyper, SpdMatrix};
use emcom_core::vae::{Likelihood, TrainConfig};
use emcom_core::Scalar;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub trials: usize,
    pub master_seed: u64,
    /// "f64" (default) or "f32".
    #[serde(default = "default_precision")]
    pub precision: String,
    pub game: GameSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub hyper: HyperSection,
    pub data: DataSection,
}

fn default_precision() -> String {
    "f64".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub k: usize,
    pub t: usize,
    pub latent_dim: usize,
    pub conditions: Vec<ConditionEntry>,
    #[serde(default)]
    pub shuffled_order: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionEntry {
    pub condition: String,
    #[serde(default = "default_true")]
    pub mi: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub mi_rounds: usize,
    pub vae_iters_per_round: usize,
    /// VAE pretraining budget for MI-disabled runs.
    pub pretrain_iters: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { mi_rounds: 5, vae_iters_per_round: 100, pretrain_iters: 500 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    /// "bernoulli" or "gaussian".
    pub likelihood: String,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![512, 256],
            likelihood: "bernoulli".into(),
            learning_rate: 0.001,
            batch_size: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub alpha: f64,
    pub nu: Option<f64>,
    pub beta_scale: f64,
}

impl Default for HyperSection {
    fn default() -> Self {
        Self { alpha: 1.0, nu: None, beta_scale: 0.05 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "mnist", "image_folder", or "synthetic".
    pub source: String,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    #[serde(default)]
    pub classes: Vec<usize>,
    pub per_class: Option<usize>,
    /// Viewpoint rotations (degrees counterclockwise) per agent.
    #[serde(default)]
    pub rotate_a: f64,
    #[serde(default = "default_rotate_b")]
    pub rotate_b: f64,
    pub folder: Option<PathBuf>,
    pub resize: Option<[usize; 2]>,
    /// Synthetic source: mean-spread control for the generator prior.
    pub synthetic_alpha: Option<f64>,
    pub synthetic_d: Option<usize>,
}

fn default_rotate_b() -> f64 {
    45.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if !matches!(self.precision.as_str(), "f32" | "f64") {
            bail!("precision must be \"f32\" or \"f64\", got {:?}", self.precision);
        }
        if self.game.k == 0 || self.game.latent_dim == 0 {
            bail!("game.k and game.latent_dim must be positive");
        }
        if self.game.conditions.is_empty() {
            bail!("game.conditions must list at least one condition");
        }
        for entry in &self.game.conditions {
            if Condition::parse(&entry.condition).is_none() {
                bail!(
                    "unknown condition {:?} (expected mh, no_comm, all_accept, gibbs_topline, mh_one_way)",
                    entry.condition
                );
            }
        }
        if !matches!(self.model.likelihood.as_str(), "bernoulli" | "gaussian") {
            bail!("model.likelihood must be \"bernoulli\" or \"gaussian\"");
        }
        match self.data.source.as_str() {
            "mnist" => {
                if self.data.mnist_images.is_none() {
                    bail!("data.mnist_images is required for source = \"mnist\"");
                }
                if self.data.mnist_labels.is_none() {
                    bail!("data.mnist_labels is required for source = \"mnist\"");
                }
            }
            "image_folder" => {
                if self.data.folder.is_none() {
                    bail!("data.folder is required for source = \"image_folder\"");
                }
            }
            "synthetic" => {
                if self.data.synthetic_d.unwrap_or(0) == 0 {
                    bail!("data.synthetic_d must be positive for source = \"synthetic\"");
                }
            }
            other => bail!("unknown data.source {other:?}"),
        }
        if let Some(nu) = self.hyper.nu {
            if nu <= self.game.latent_dim as f64 - 1.0 {
                bail!("hyper.nu must exceed latent_dim - 1");
            }
        }
        Ok(())
    }

    pub fn likelihood(&self) -> Likelihood {
        match self.model.likelihood.as_str() {
            "gaussian" => Likelihood::GaussianUnitVariance,
            _ => Likelihood::Bernoulli,
        }
    }

    pub fn nw_hyper<S: Scalar>(&self) -> NwHyper<S> {
        let l = self.game.latent_dim;
        let nu = self.hyper.nu.unwrap_or_else(|| 12.0f64.max(l as f64));
        NwHyper {
            m: vec![S::zero(); l],
            alpha: S::cast_from(self.hyper.alpha),
            nu: S::cast_from(nu),
            beta: SpdMatrix::scaled_identity(l, S::cast_from(self.hyper.beta_scale)),
        }
    }

    pub fn schedule(&self) -> MiSchedule {
        MiSchedule {
            mi_rounds: self.schedule.mi_rounds,
            vae_iters_per_round: self.schedule.vae_iters_per_round,
        }
    }

    pub fn train_config<S: Scalar>(&self) -> TrainConfig<S> {
        TrainConfig {
            adam: AdamConfig {
                learning_rate: S::cast_from(self.model.learning_rate),
                ..AdamConfig::default()
            },
            batch_size: self.model.batch_size,
        }
    }

    pub fn perception(&self) -> PerceptionConfig {
        if self.data.source == "synthetic" {
            PerceptionConfig::Latent
        } else {
            PerceptionConfig::Vae {
                hidden: self.model.hidden.clone(),
                likelihood: self.likelihood(),
                pretrain_iters: self.schedule.pretrain_iters,
            }
        }
    }

    /// Builds a core game config for one condition and trial seed.
    pub fn game_config<S: Scalar>(
        &self,
        condition: Condition,
        mi: bool,
        seed: u64,
    ) -> GameConfig<S> {
        GameConfig {
            k: self.game.k,
            iterations: self.game.t,
            latent_dim: self.game.latent_dim,
            condition,
            mi_enabled: mi,
            schedule: self.schedule(),
            hyper: self.nw_hyper(),
            master_seed: seed,
            perception: self.perception(),
            train: self.train_config(),
            shuffled_order: self.game.shuffled_order,
        }
    }

    /// Per-trial master seed derivation.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.master_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(trial as u64)
    }
}
