use std::process::ExitCode;

use specmer::analysis::AnalysisError;
use specmer::decode::DecodeError;
use specmer::kmer::KmerError;
use specmer::lm::LmError;
use specmer::msa::MsaError;
use specmer::oracle::OracleError;
use specmer::sweep::SweepError;
use specmer::vocab::VocabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Data(_) => ExitCode::from(2),
            CliError::Remote(_) => ExitCode::from(3),
        }
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            e if e.is_remote() => CliError::Remote(e.to_string()),
            LmError::InvalidConfig(_) | LmError::Descriptor(_) => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Model(m) => m.into(),
            DecodeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Nll { source, .. } if source.is_remote() => CliError::Remote(source.to_string()),
            AnalysisError::InvalidParams(_) => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Model(m) => m.into(),
            OracleError::Decode(d) => d.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<KmerError> for CliError {
    fn from(e: KmerError) -> Self {
        match e {
            KmerError::ZeroK | KmerError::KTooLarge(_) | KmerError::NoKValues => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(MsaError, VocabError, SweepError, std::io::Error, serde_json::Error);
