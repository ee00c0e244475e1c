//! Batch runner for the ttslab laboratory.
//!
//! A run reads one TOML experiment file, executes the selected mode, and writes
//! CSV artifacts, a long-format `plot.csv` and a `report.txt` into the output
//! directory. Exit codes: 0 success, 1 configuration error, 2 divergence,
//! 3 validation failure, 4 I/O or missing artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::Path;

use thiserror::Error;
use ttslab::dominance::DominanceError;
use ttslab::flow::FlowError;
use ttslab::regime::RegimeError;
use ttslab::sgd::SgdError;

pub mod config;
pub mod exec;
pub mod functions;
pub mod report;

pub use config::{parse_config, ExperimentConfig, Mode};
pub use exec::{execute, RunOptions, RunReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run diverged: {0}")]
    Diverged(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Diverged(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SgdError> for CliError {
    fn from(e: SgdError) -> Self {
        match e {
            SgdError::Config(_) | SgdError::Dimension { .. } => CliError::Config(e.to_string()),
            SgdError::NonFinite { .. } => CliError::Diverged(e.to_string()),
            SgdError::Inner { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Config(_) | FlowError::StepTooLarge { .. } | FlowError::MissingLambda | FlowError::Stride(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RegimeError> for CliError {
    fn from(e: RegimeError) -> Self {
        match e {
            RegimeError::Config(_) | RegimeError::NoValleys => CliError::Config(e.to_string()),
            RegimeError::Diverged { .. } => CliError::Diverged(e.to_string()),
            RegimeError::Flow(f) => f.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DominanceError> for CliError {
    fn from(e: DominanceError) -> Self {
        match e {
            DominanceError::NonFinite { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not a pass/fail property; reported for information.
    Info,
}

/// One invariant check recorded in the run report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub mandatory: bool,
    pub detail: String,
}

impl Check {
    pub fn verdict(name: &str, ok: bool, mandatory: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            mandatory,
            detail: detail.into(),
        }
    }

    pub fn info(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Info,
            mandatory: false,
            detail: detail.into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Info => "INFO",
        };
        let kind = if self.mandatory { " [mandatory]" } else { "" };
        write!(f, "{tag}  {}{kind}: {}", self.name, self.detail)
    }
}

/// Write via a temporary sibling and rename, so readers never see partial files.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
