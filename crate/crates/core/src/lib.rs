//! Group-level pattern detection for collections of noisy longitudinal curves.
//!
//! The pipeline is: ingest curves onto a common [`funcdata::TimeGrid`], smooth
//! them into a B-spline basis ([`basis`]), fit a function-on-scalar FANOVA
//! model with a zero-sum group constraint ([`fanova`]), locate the time zones
//! where a group differs from the control group with pointwise F-tests
//! ([`inference`]), and classify new curves by their inner products with the
//! estimated group-effect kernels ([`kernelclass`]). [`simulate`] generates
//! ground-truth data and scores the whole pipeline against it.

pub mod basis;
pub mod error;
pub mod fanova;
pub mod fpca;
pub mod funcdata;
pub mod inference;
pub mod kernelclass;
pub mod linalg;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod serde_float;
pub mod simulate;

pub use basis::{BSplineBasis, CoefficientMatrix, GramMatrix, KnotPlacement, Smoother};
pub use error::{Error, Result};
pub use fanova::{DesignMatrix, FanovaModel, Kernels};
pub use fpca::EigenSystem;
pub use funcdata::{CurveSample, FunctionalDataset, HeatmapTable, TimeGrid};
pub use inference::{ContrastSpec, FStatSeries, TestMethod, TestReport};
pub use kernelclass::{ClassifierModel, CombinationWeights, KernelSet, ScoreTable};
pub use simulate::{SimulationConfig, SweepReport};
