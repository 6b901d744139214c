//! Gaussian process regression whose predictive variance accounts for known
//! noise in the inputs.
//!
//! The numerical core ([`kernel`], [`gp`], [`correction`], [`hyperopt`]) is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`,
//! which is what the data pipeline and CLI use.

pub mod cli;
pub mod correction;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod kernel;
pub mod hyperopt;
pub mod linalg;
pub mod optimize;
pub mod persist;
pub mod scalar;

pub use correction::{CorrectionCache, CorrectionMode};
pub use error::{Error, Result};
pub use gp::{NoiseModel, Prediction, TrainedModel};
pub use kernel::KernelParams;
pub use scalar::Scalar;

pub type Params = KernelParams<f64>;
pub type Noise = NoiseModel<f64>;
pub type Model = TrainedModel<f64>;
pub type Correction = CorrectionCache<f64>;

pub type ParamsF32 = KernelParams<f32>;
pub type NoiseF32 = NoiseModel<f32>;
pub type ModelF32 = TrainedModel<f32>;
pub type CorrectionF32 = CorrectionCache<f32>;
