//! Two agents, each a Gaussian-mixture-over-VAE-latents generative model, play
//! a Metropolis-Hastings naming game: a speaker utters a categorical sign for a
//! jointly attended object, the listener accepts it with the MH probability
//! computed from its own model, and both keep learning from raw images. Signs
//! are the only data that ever cross the agent boundary, yet the exchange
//! samples the joint posterior of the combined model.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`] — dense matrices and the Cholesky kernel everything sits on
//! * [`rng`] — seeded, splittable random streams (one per agent)
//! * [`probability`] — multivariate normal / Wishart / normal-Wishart /
//!   categorical sampling and log-densities
//! * [`gmm`] — conjugate Gibbs machinery for the sign-indexed mixture,
//!   the MH acceptance probability, and the centralized topline sampler
//! * [`autodiff`] / [`vae`] — a small reverse-mode engine and the
//!   variational autoencoder trained with sign-selected Gaussian priors
//! * [`agent`] — one agent = mixture + VAE behind a five-verb interface
//!   (utter, judge, learn, perceive, recall)
//! * [`game`] — the naming-game schedule and its comparison conditions
//! * [`oracle`] — exact small-instance posteriors for validating the game
//! * [`metrics`] — ARI, Cohen's kappa, sorted confusion matrices
//! * [`data`] — IDX/MNIST ingestion, rotation, synthetic generators
//! * [`transport`] — the two-process wire protocol (signs only)
//! * [`verify`] — the bundled self-check suite behind `emcom verify`
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); concrete
//! aliases for the common instantiations live at the crate root.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

pub mod agent;
pub mod autodiff;
pub mod data;
pub mod game;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod probability;
pub mod rng;
pub mod transport;
pub mod vae;
pub mod verify;

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn cast_from(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value representable in scalar type")
    }

    fn cast_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn ln_2pi() -> Self {
        Self::cast_from(core::f64::consts::TAU.ln())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type SpdMatrix64 = probability::SpdMatrix<f64>;
pub type SpdMatrix32 = probability::SpdMatrix<f32>;
pub type NwHyper64 = probability::NwHyper<f64>;
pub type NwHyper32 = probability::NwHyper<f32>;
pub type ComponentSet64 = gmm::ComponentSet<f64>;
pub type ComponentSet32 = gmm::ComponentSet<f32>;
// Aliases for modules still landing are appended as they do.
