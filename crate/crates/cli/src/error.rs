use std::fmt;

use geoscale_core::GeoscaleError;

/// Pipeline stage an error is attributed to; printed in every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Generate,
    Grid,
    Estimate,
    Compare,
    Smoothing,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Generate => "generate",
            Stage::Grid => "grid",
            Stage::Estimate => "estimate",
            Stage::Compare => "compare",
            Stage::Smoothing => "smoothing",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    /// Bad input or configuration (exit 2) as opposed to a failed
    /// computation (exit 1).
    pub input: bool,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            stage: Stage::Config,
            input: true,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.input {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error in {} stage: {}", self.stage, self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> CliResult<T>;
}

impl<T> AtStage<T> for Result<T, GeoscaleError> {
    fn at(self, stage: Stage) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage,
            input: e.is_input_error(),
            message: e.to_string(),
        })
    }
}
