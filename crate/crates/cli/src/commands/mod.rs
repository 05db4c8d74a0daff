mod flow_demo;
mod posterior;
mod scenario;
mod stress;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use shiftgen_core::ndmath::{read_csv, write_csv};
use shiftgen_core::Matrix;

pub use flow_demo::cmd_flow_demo;
pub use posterior::cmd_posterior;
pub use scenario::cmd_scenario;
pub use stress::cmd_stress;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::Report;

/// Output directory, created if needed, and a report preloaded with the
/// common header keys.
fn start(cfg: &RunConfig, command: &str) -> CliResult<(PathBuf, Report, Instant)> {
    let started = Instant::now();
    let out = cfg.out_dir();
    fs::create_dir_all(&out)
        .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", out.display())))?;
    let mut r = Report::new();
    r.text("command", command);
    r.text("version", crate::version());
    r.text("seed", cfg.seed);
    Ok((out, r, started))
}

fn save(out: &Path, r: &mut Report, key: &str, name: &str, header: &[String], m: &Matrix) -> CliResult<()> {
    write_csv(out.join(name), header, m)?;
    r.file(key, name);
    Ok(())
}

fn load_table(path: &Path) -> CliResult<(Vec<String>, Matrix)> {
    let t = read_csv(path)?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = t.header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(CliError::data(format!("{}: repeated column name {dup:?}", path.display())));
    }
    Ok((t.header, t.data))
}

/// First `⌊fraction · n⌋` rows and the rest, both with at least two rows.
fn chronological_split(m: &Matrix, fraction: f64) -> CliResult<(Matrix, Matrix)> {
    let n = m.rows();
    let cut = (fraction * n as f64).floor() as usize;
    if cut < 2 || n - cut < 2 {
        return Err(CliError::data(format!(
            "a {fraction} split of {n} rows leaves fewer than two rows on one side"
        )));
    }
    Ok((m.slice_rows(0, cut), m.slice_rows(cut, n)))
}
