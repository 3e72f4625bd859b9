use std::fmt;

use stnlm::correlations::CorrelationError;
use stnlm::prob_model::ProbError;
use stnlm::spectral::SpectralError;
use stnlm::tensor_bank::BankError;
use stnlm::treebank::TreebankError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: DATA, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: NUMERIC, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<TreebankError> for CliError {
    fn from(e: TreebankError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<BankError> for CliError {
    fn from(e: BankError) -> Self {
        match e {
            BankError::InvalidLevel(_) | BankError::InvalidSmoothing(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<ProbError> for CliError {
    fn from(e: ProbError) -> Self {
        match e {
            ProbError::Bank(b) => b.into(),
            ProbError::LimitExceeded { .. } | ProbError::ZeroPartition | ProbError::NotADistribution(_) => {
                CliError::numeric(e.to_string())
            }
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Bank(b) => b.into(),
            SpectralError::EmptyBlock | SpectralError::BlockOutOfRange { .. } => CliError::usage(e.to_string()),
            SpectralError::Malformed { .. } | SpectralError::Io(_) => CliError::data(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

impl From<CorrelationError> for CliError {
    fn from(e: CorrelationError) -> Self {
        match e {
            CorrelationError::Prob(p) => p.into(),
            CorrelationError::Treebank(t) => t.into(),
            CorrelationError::IndexOutOfRange { .. } => CliError::usage(e.to_string()),
            CorrelationError::ZeroPartition => CliError::numeric(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}
