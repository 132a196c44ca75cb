//! Stage drivers behind the `lattice-eit` command.

pub mod config;
pub mod stages;

use std::fmt;

use lattice_eit::Error;

pub use config::RunConfig;
pub use stages::Context;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_PROVENANCE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub stage: Option<&'static str>,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            stage: None,
            message: msg.into(),
        }
    }

    pub fn provenance(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_PROVENANCE,
            stage: None,
            message: msg.into(),
        }
    }

    pub fn in_stage(mut self, stage: &'static str) -> Self {
        self.stage.get_or_insert(stage);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "{s}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Provenance(_) | Error::ProtocolMismatch { .. } => EXIT_PROVENANCE,
        Error::Meshing(_)
        | Error::Electrodes(_)
        | Error::DisconnectedComponent { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::SingularNormalMatrix { .. }
        | Error::BracketNoStraddle { .. }
        | Error::ZeroSignal(_) => EXIT_NUMERICAL,
        Error::Drive { source, .. } => exit_code(source),
        _ => EXIT_CONFIG,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            stage: None,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}
