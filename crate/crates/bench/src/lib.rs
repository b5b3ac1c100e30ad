//! Experiment harness for `ovk-core`: sample-size sweeps, rate fits, Koopman
//! spectra and forecasts, written as CSV tables.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{run, run_exp1, run_exp2, run_exp3, run_fit, run_forecast, RunContext};
pub use report::{fit_slope, RateReport};

use ovk_core::OvkError;

/// Process exit code for a failed run: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &OvkError) -> i32 {
    match err {
        OvkError::Numerical { .. } => 2,
        _ => 1,
    }
}
