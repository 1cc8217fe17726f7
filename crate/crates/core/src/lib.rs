//! Dynamic magnetic particle imaging: simulation, uncertainty-level
//! estimation and motion-compensating reconstruction with
//! RESESOP-Kaczmarz.
//!
//! Motion of the tracer during acquisition is treated as inexactness of the
//! static system matrix. Every subproblem (a frame, or a fraction of one)
//! contributes a stripe whose width reflects how far its data may deviate
//! from the reference state; projecting onto these stripes reconstructs the
//! reference state from all frames without a motion model.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod inexactness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod projections;
pub mod simulator;
pub mod solvers;

pub use error::{Error, Result};
pub use eval::{mse, EstimatorMethod, EstimatorSpec, ExperimentConfig, MetricsReport};
pub use inexactness::{LevelMethod, UncertaintyLevels};
pub use model::{ConcentrationSequence, DynamicDataset, Grid2D, SystemMatrix, TimePartition};
pub use projections::Stripe;
pub use simulator::{PhantomMotion, ScannerConfig};
pub use solvers::{Algorithm, SolveResult, SolverConfig};
