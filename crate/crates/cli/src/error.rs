use std::fmt::Display;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn data(msg: impl Display) -> Self {
        CliError::Data(msg.to_string())
    }

    /// 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<shiftgen_core::Error> for CliError {
    fn from(e: shiftgen_core::Error) -> Self {
        use shiftgen_core::Error as E;
        match e {
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            E::InvalidArgument(m) => CliError::Config(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Rewrites a zero-variance error so it names the offending column.
pub(crate) fn name_zero_variance(e: shiftgen_core::Error, names: &[String]) -> CliError {
    match e {
        shiftgen_core::Error::ZeroVariance { index, .. } => CliError::Data(format!(
            "column {:?} has zero variance in the training split",
            names.get(index).map_or("?", String::as_str)
        )),
        e => e.into(),
    }
}
