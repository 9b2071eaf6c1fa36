//! Experiment runner for the decoupling laboratory: config-driven
//! measurement studies with CSV/JSON output, plus small diagnostic commands.

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{Outputs, RunConfig};
pub use error::{CliError, CliResult};
pub use plot::{emit_plotdata, PlotData};
pub use run::{run, write_csv, RunReport};

/// Size of the worker pool requested through `DECLAB_THREADS`.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var("DECLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Schema(format!("DECLAB_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
