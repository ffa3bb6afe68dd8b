use std::path::Path;

use msgraph_core::can_log::LogError;
use msgraph_core::detect::ThresholdError;
use msgraph_core::inject::InjectError;
use msgraph_core::seq_model::ModelError;
use msgraph_core::Error;
use thiserror::Error;

/// Usage problems exit with 1, bad or unreadable data with 2.
#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    /// The reader of stdout went away; not worth reporting.
    #[error("output closed")]
    Closed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Closed => 0,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn in_file(path: &Path, err: impl Into<CliError>) -> CliError {
        match err.into() {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            CliError::Closed => CliError::Closed,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> CliError {
        let usage = match &err {
            Error::Log(LogError::WindowTooSmall(_) | LogError::ZeroStride) => true,
            Error::Inject(_) => true,
            Error::Model(ModelError::InvalidConfig(_)) => true,
            Error::Threshold(ThresholdError::Unlabeled) => true,
            _ => false,
        };
        if usage {
            CliError::Usage(err.to_string())
        } else {
            CliError::Data(err.to_string())
        }
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(err: $t) -> CliError {
                Error::from(err).into()
            }
        }
    )*};
}

via_core!(LogError, InjectError, ModelError, ThresholdError, msgraph_core::detect::CpdError, msgraph_core::eval::EvalError);

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> CliError {
        if let csv::ErrorKind::Io(e) = err.kind() {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return CliError::Closed;
            }
        }
        CliError::Data(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::Closed;
        }
        CliError::Data(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> CliError {
        if err.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe) {
            return CliError::Closed;
        }
        CliError::Data(err.to_string())
    }
}
