use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::error::CliResult;

pub const REPORT_FILE: &str = "report.txt";
pub const META_FILE: &str = "run_meta.txt";

/// `%g`-style rendering with 6 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Ordered `key=value` lines plus the output files they refer to.
///
/// File names are relative to the output directory so two runs into
/// different directories still render identically.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
    files: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a repeated key; keys are fixed by the subcommands and user
    /// lists that feed keys are validated before a run starts.
    pub fn text(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        assert!(self.get(&key).is_none(), "duplicate report key {key}");
        self.entries.push((key, value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) {
        self.text(key, fmt_sig(v));
    }

    pub fn opt_num(&mut self, key: impl Into<String>, v: Option<f64>) {
        match v {
            Some(v) => self.num(key, v),
            None => self.text(key, "absent"),
        }
    }

    pub fn file(&mut self, key: impl Into<String>, name: &str) {
        self.text(key, name);
        self.files.push(name.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Adds every leaf of a serialized config section as `prefix.key`.
    pub fn params(&mut self, prefix: &str, table: &toml::Table) {
        for (k, v) in table {
            let key = format!("{prefix}.{k}");
            match v {
                toml::Value::Table(t) => self.params(&key, t),
                v => self.text(key, render_value(v)),
            }
        }
    }

    /// Writes the report and the timing sidecar. Wall-clock time lives in
    /// the sidecar so the report itself stays byte-identical across runs.
    pub fn finish(mut self, out_dir: &Path, started: Instant) -> CliResult<Self> {
        self.file("meta_file", META_FILE);
        fs::write(out_dir.join(REPORT_FILE), self.render())?;
        fs::write(
            out_dir.join(META_FILE),
            format!(
                "version={}\nwall_clock_seconds={}\n",
                crate::version(),
                fmt_sig(started.elapsed().as_secs_f64())
            ),
        )?;
        Ok(self)
    }
}

fn render_value(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(f) => fmt_sig(*f),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::String(s) => s.clone(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(a) => format!("[{}]", a.iter().map(render_value).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
