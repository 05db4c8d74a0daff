//! The `shiftgen` command line as a library: configuration, reports,
//! synthetic data and the four pipelines, so tests can drive them without
//! spawning processes.
//!
//! | subcommand  | pipeline                                                    |
//! |-------------|-------------------------------------------------------------|
//! | `scenario`  | flow-matching scenario generator scored by MMD, KS, corr    |
//! | `stress`    | nominal fit plus Wasserstein worst case per λ, backtest     |
//! | `posterior` | latent Langevin sampling against a linear-Gaussian model    |
//! | `flow-demo` | probability-flow ODE against reverse SDE on a mixture       |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod synth;

pub use commands::{cmd_flow_demo, cmd_posterior, cmd_scenario, cmd_stress};
pub use config::{Override, RunConfig};
pub use error::{CliError, CliResult};
pub use report::Report;
pub use shiftgen_core::{Error as CoreError, Matrix, RngState};

pub fn version() -> String {
    format!("shiftgen {}", env!("CARGO_PKG_VERSION"))
}
