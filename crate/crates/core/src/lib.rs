//! Joint estimation of early relative transfer functions, source PSDs,
//! late-reverberation PSD and microphone self-noise from multichannel CPSDMs
//! by constrained simultaneous confirmatory factor analysis.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod baselines;
pub mod beamforming;
pub mod bundle;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod scene;
pub mod solver;
pub mod stft;

pub use error::{Result, ScfaError};
pub use model::{FrequencyGrid, Geometry, SegmentParameters};
pub use solver::{ObjectiveKind, OnlineConfig, ProblemVariant, SolveReport, SolverOptions};
pub use stft::FramePlan;

pub type CMat64 = linalg::CMat<f64>;
pub type CMat32 = linalg::CMat<f32>;
pub type SegmentParameters64 = model::SegmentParameters<f64>;
pub type SegmentParameters32 = model::SegmentParameters<f32>;
pub type CpsdmSeries64 = stft::CpsdmSeries<f64>;
pub type CpsdmSeries32 = stft::CpsdmSeries<f32>;
pub type OnlineEstimate64 = solver::OnlineEstimate<f64>;
pub type OnlineEstimate32 = solver::OnlineEstimate<f32>;
pub type SubframeSpectra64 = stft::SubframeSpectra<f64>;
pub type SubframeSpectra32 = stft::SubframeSpectra<f32>;
