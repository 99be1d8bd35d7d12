use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] expansive_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// Process exit status.
    pub fn exit_code(&self) -> u8 {
        use expansive_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Domain(_)) => 3,
            CliError::Core(E::Precision(_)) => 4,
            CliError::Core(E::Size { .. }) => 5,
            CliError::Core(E::Contract(_) | E::Mode(_) | E::Spec(_)) => 2,
            CliError::Io(_) | CliError::Output(_) => 1,
        }
    }
}
