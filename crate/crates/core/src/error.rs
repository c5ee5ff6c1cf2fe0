use thiserror::Error;

/// Error type shared across the crate.
///
/// The variants map onto the CLI exit codes: configuration problems (1),
/// data problems (2), and generation-backend problems (3).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameters, inconsistent modes,
    /// malformed config files.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or degenerate data: parse failures, constant series,
    /// shape mismatches, out-of-vocabulary tokens, training divergence.
    #[error("data error: {0}")]
    Data(String),

    /// A generation backend failed: transport errors after retries or a
    /// malformed service response.
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn backend(attempts: usize, msg: impl Into<String>) -> Self {
        Error::Backend {
            attempts,
            message: msg.into(),
        }
    }

    /// Prefix the message with the refinement round it occurred in.
    pub fn with_round_context(self, round: usize) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("round {round}: {m}")),
            Error::Data(m) => Error::Data(format!("round {round}: {m}")),
            Error::Backend { attempts, message } => Error::Backend {
                attempts,
                message: format!("round {round}: {message}"),
            },
            Error::Io(e) => Error::Io(e),
        }
    }

    /// Process exit code for the CLI: 1 config, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Backend { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
