//! ℓ1-regularised dynamic filtering of time-varying sparse signals.
//!
//! The crate provides ISTA solvers for weighted BPDN and BPDN with a
//! dynamics penalty (BPDN-DF), the reweighted filters RWL1 and RWL1-DF, a
//! Kalman baseline, a synthetic tracking simulator, error metrics, a
//! Monte-Carlo experiment runner and numerical checks of the BPDN-DF error
//! bound.
//!
//! ```
//! use sparse_dynfilt::experiment::{run_trial, ExperimentSpec};
//! use sparse_dynfilt::simulation::ScenarioConfig;
//!
//! let scenario = ScenarioConfig { grid_side: 8, num_targets: 3, num_frames: 4,
//!     num_measurements: 30, ..ScenarioConfig::default() };
//! let spec = ExperimentSpec::new(scenario, ExperimentSpec::standard_algorithms());
//! let results = run_trial(&spec, 0).unwrap();
//! assert_eq!(results.len(), 5);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod filters;
pub mod linalg;
pub mod metrics;
pub mod operators;
pub mod simulation;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
pub use filters::{FrameInput, StepOutput, StreamingFilter};
pub use metrics::TrialResult;
pub use operators::{DenseOperator, LinearOperator};
pub use simulation::{ScenarioConfig, TrackingScenario};
