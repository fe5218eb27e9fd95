//! Nonlocal tensor-train completion of images and other visual tensors.
//!
//! Similar `s×s×n₃` cubes are grouped into fourth-order tensors, each group is
//! completed by minimizing a weighted sum of nuclear norms of its canonical
//! matricizations with ADMM, and the completed cubes are averaged back into
//! place. The same solver applied to a whole tensor gives the SiLRTC-TT
//! baseline.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, which is what the file formats and the CLI use.

pub mod admm;
pub mod analysis;
mod error;
pub mod grouping;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod pipeline;
mod scalar;
pub mod svt;
pub mod tensor;

pub use admm::{silrtc_tt, solve, ConvergenceTrace, SolverConfig, TraceRecord, UpdateOrder};
pub use error::{Error, Result};
pub use grouping::{CubeCoord, GroupingParams, MatchDistance};
pub use masks::{MaskKind, MaskSpec};
pub use metrics::QualityScore;
pub use pipeline::{CompletionReport, ExperimentConfig, Method};
pub use scalar::{Real, SvdKernel};
pub use tensor::{DenseTensor, Matricization, ObservationMask};

pub type Tensor = DenseTensor<f64>;
pub type Tensor32 = DenseTensor<f32>;
pub type Group = grouping::Group<f64>;
pub type GroupSet = grouping::GroupSet<f64>;
pub type SvdFactors = svt::SvdFactors<f64>;
