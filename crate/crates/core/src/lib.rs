//! Distributed FMCW MIMO radar imaging: signal model, performance bounds,
//! sparse reconstruction, clock-offset estimation and the Monte-Carlo
//! harness that ties them together.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scene;
pub mod bounds;
pub mod dictionary;
pub mod recovery;
pub mod sync;
pub mod eval;
pub mod signal;

pub use error::{RadarError, Result};
pub use nalgebra;
pub use num_complex::{self, Complex64};
pub use scene::{CubeDims, RadarUnit, Scene, Target, Vec3, SPEED_OF_LIGHT};
pub use signal::{BasebandCube, NoiseSpec};
pub use dictionary::{BlockDictionary, CoherentDictionary, ImagingGrid, SensingOperator};
pub use recovery::{SolverConfig, SparseImage};
pub use sync::SyncEstimate;
pub use eval::{Experiment, NmseTable, ScenarioName, Scheme};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
