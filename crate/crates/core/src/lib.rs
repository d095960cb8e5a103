//! Zero-shot source separation by latent inversion on synthetic feature grids.
//!
//! A mixture grid is inverted into a diffusion model's noise space and then
//! re-denoised under a per-source condition with classifier-free guidance.
//! Everything runs on small synthetic harmonic textures so the whole chain —
//! schedules, inversion, guided sampling, metrics — is exactly testable
//! against analytic oracles.

pub mod denoiser;
pub mod error;
pub mod grid;
pub mod rng;
pub mod schedule;

pub use denoiser::{Condition, CountingDenoiser, Denoiser, GaussianSourceModel, TinyDenoiser};
pub use error::Error;
pub use grid::{FeatureGrid, GridDims};
pub use rng::Prng;
pub use schedule::{NoiseSchedule, ScheduleKind, StepPlan};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
