//! Experiment harness for `regnoise-core`: JSON configs, a parallel runner
//! with reproducible replica seeds, CSV / SVG / flat-binary outputs and a
//! hashed run manifest.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod run;
pub mod svg;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{LabError, Result};
pub use experiments::{run_experiment, Check, Outcome};
pub use run::{execute, Manifest, RunOptions};
