//! Run configuration: one TOML file with a section per subcommand, every
//! key optional, and `section.key=value` overrides applied on top.

use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Default output directory when neither the config nor a flag sets one.
pub const OUT_DIR_ENV: &str = "SHIFTGEN_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "shiftgen-out";

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub stress: StressConfig,
    pub posterior: PosteriorConfig,
    pub flow_demo: FlowDemoConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Count CSV; the built-in generator is used when absent.
    pub input: Option<PathBuf>,
    pub synthetic_rows: usize,
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub hidden: Vec<usize>,
    pub samples: usize,
    pub ode_steps: usize,
    pub mmd_estimator: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            input: None,
            synthetic_rows: 2000,
            train_fraction: 0.8,
            epochs: 100,
            batch: 128,
            lr: 2e-3,
            lr_min: 1e-5,
            hidden: vec![64, 64],
            samples: 2000,
            ode_steps: 64,
            mmd_estimator: "unbiased".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressConfig {
    /// `portfolio` (shortfall loss on returns) or `linear` (toy loss on
    /// standard normal particles).
    pub mode: String,
    /// Returns CSV; the built-in factor model is used when absent.
    pub input: Option<PathBuf>,
    pub synthetic_rows: usize,
    pub assets: usize,
    pub train_fraction: f64,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    pub eta: f64,
    pub iters: usize,
    pub inner_iters: usize,
    pub nominal_iters: usize,
    pub threshold: f64,
    pub beta: f64,
    pub linear_particles: usize,
    pub linear_dim: usize,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            mode: "portfolio".into(),
            input: None,
            synthetic_rows: 600,
            assets: 6,
            train_fraction: 0.8,
            lambdas: vec![0.05, 0.1, 0.2, 0.5],
            tau: 1.0,
            eta: 0.01,
            iters: 200,
            inner_iters: 5,
            nominal_iters: 400,
            threshold: 0.0,
            beta: 10.0,
            linear_particles: 200,
            linear_dim: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    /// `identity`, `affine` (with `a`, `b`) or `checkpoint` (with
    /// `checkpoint`, a flow checkpoint).
    pub generator: String,
    /// Dimension for the identity generator.
    pub dim: usize,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    pub checkpoint: Option<PathBuf>,
    pub flow_steps: usize,
    /// Forward operator, identity when absent.
    pub h: Option<Vec<Vec<f64>>>,
    pub noise_var: f64,
    /// Observations, all ones when absent.
    pub y: Option<Vec<f64>>,
    pub step: f64,
    pub steps: usize,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub chains: usize,
    /// Prior against which `prior_disc` is measured, `N(0, I)` when absent.
    pub true_prior_mean: Option<Vec<f64>>,
    pub true_prior_cov: Option<Vec<Vec<f64>>>,
    pub prior_samples: usize,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            generator: "identity".into(),
            dim: 1,
            a: None,
            b: None,
            checkpoint: None,
            flow_steps: 32,
            h: None,
            noise_var: 1.0,
            y: None,
            step: 1e-3,
            steps: 200_000,
            burn_in: None,
            thin: 10,
            chains: 8,
            true_prior_mean: None,
            true_prior_cov: None,
            prior_samples: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowDemoConfig {
    pub samples: usize,
    pub ode_steps: usize,
    pub schedule_steps: usize,
    pub beta: f64,
    /// Mixture components sit at `(±separation, 0)`.
    pub separation: f64,
    pub component_var: f64,
    /// Rows of each cloud used for the assignment W2 distances.
    pub w2_points: usize,
}

impl Default for FlowDemoConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            ode_steps: 100,
            schedule_steps: 400,
            beta: 0.02,
            separation: 2.0,
            component_var: 0.5,
            w2_points: 400,
        }
    }
}

/// One `section.key=value` override; the value is parsed as a TOML value
/// and falls back to a bare string.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: toml::Value,
}

impl Override {
    pub fn new(path: impl Into<String>, value: impl Into<toml::Value>) -> Self {
        Self {
            path: path.into(),
            value: value.into(),
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override {s:?} is not KEY=VALUE")))?;
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        Ok(Self::new(path.trim(), value))
    }
}

fn apply(table: &mut toml::Table, o: &Override) -> CliResult<()> {
    let mut parts: Vec<&str> = o.path.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty());
    let Some(last) = last else {
        return Err(CliError::config(format!("empty override key {:?}", o.path)));
    };
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {:?}: {p} is not a section", o.path)))?;
    }
    cur.insert(last.to_string(), o.value.clone());
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[Override]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config value, then `SHIFTGEN_OUT_DIR`, then `shiftgen-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn validate(&self) -> CliResult<()> {
        let fraction = |f: f64, what: &str| {
            if f > 0.0 && f < 1.0 {
                Ok(())
            } else {
                Err(CliError::config(format!("{what}.train_fraction must lie in (0, 1), got {f}")))
            }
        };
        let s = &self.scenario;
        fraction(s.train_fraction, "scenario")?;
        if s.samples < 2 || s.ode_steps == 0 || s.batch == 0 {
            return Err(CliError::config("scenario needs samples >= 2, ode_steps >= 1, batch >= 1"));
        }
        let t = &self.stress;
        fraction(t.train_fraction, "stress")?;
        if t.mode != "portfolio" && t.mode != "linear" {
            return Err(CliError::config(format!("stress.mode must be portfolio or linear, got {:?}", t.mode)));
        }
        if t.lambdas.is_empty() || t.lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(CliError::config("stress.lambdas must be a nonempty list of positive values"));
        }
        let mut keys: Vec<String> = t.lambdas.iter().map(|l| crate::report::fmt_sig(*l)).collect();
        keys.sort();
        keys.dedup();
        if keys.len() != t.lambdas.len() {
            return Err(CliError::config("stress.lambdas contains repeated values"));
        }
        let p = &self.posterior;
        if p.prior_samples < 2 {
            return Err(CliError::config("posterior.prior_samples must be >= 2"));
        }
        let f = &self.flow_demo;
        if f.samples < 2 || f.w2_points < 2 || f.w2_points > f.samples.min(shiftgen_core::transport::MAX_ASSIGNMENT_SIZE) {
            return Err(CliError::config(format!(
                "flow_demo needs 2 <= w2_points <= min(samples, {})",
                shiftgen_core::transport::MAX_ASSIGNMENT_SIZE
            )));
        }
        Ok(())
    }

    /// A section serialized back to TOML, for echoing into reports.
    pub(crate) fn section<T: Serialize>(section: &T) -> toml::Table {
        toml::Table::try_from(section).expect("config sections serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_fall_back_to_strings() {
        let o = Override::parse("stress.lambdas=[0.1, 0.2]").unwrap();
        assert_eq!(o.path, "stress.lambdas");
        assert!(o.value.is_array());
        assert_eq!(Override::parse("stress.mode=linear").unwrap().value.as_str(), Some("linear"));
        assert!(Override::parse("novalue").is_err());
    }

    #[test]
    fn load_applies_overrides_and_rejects_unknown_keys() {
        let cfg = RunConfig::load(None, &[Override::new("seed", 9), Override::new("scenario.epochs", 0)]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenario.epochs, 0);
        assert_eq!(cfg.scenario.batch, 128);
        let err = RunConfig::load(None, &[Override::new("scenario.epochz", 1)]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::load(None, &[Override::parse("stress.lambdas=[0.1, 0.1]").unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn file_then_overrides() {
        let dir = std::env::temp_dir().join(format!("shiftgen-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "seed = 3\n[flow_demo]\nsamples = 600\node_steps = 10\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[Override::new("flow_demo.ode_steps", 20)]).unwrap();
        assert_eq!((cfg.seed, cfg.flow_demo.samples, cfg.flow_demo.ode_steps), (3, 600, 20));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
