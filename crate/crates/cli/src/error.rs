use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] traco::Error),
}

impl CliError {
    /// 2 bad input or configuration, 3 empty vocabulary, 4 numeric failure,
    /// 5 checkpoint/corpus vocabulary mismatch, 1 anything else.
    pub fn exit_code(&self) -> ExitCode {
        use traco::Error as E;
        let code = match self {
            CliError::Input(_) | CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Config(_) | E::Schema(_) | E::Io(_) => 2,
                E::EmptyVocabulary(_) => 3,
                E::Numeric(_) => 4,
                E::VocabMismatch(_) => 5,
                E::Shape(_) => 1,
            },
        };
        ExitCode::from(code)
    }
}
