use std::fmt;

/// A failure reported as `error[Code]: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // One line, whatever the underlying message contains.
        let message = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.code, message)
    }
}

impl std::error::Error for CliError {}

macro_rules! coded {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        })*
    };
}

coded!(
    gauntlet_core::engine::EngineError,
    gauntlet_core::engine::ConfigError,
    gauntlet_core::store::StoreError,
    gauntlet_core::overrides::OverrideError,
    gauntlet_core::sim::WorldError,
    gauntlet_core::sim::OracleError,
    gauntlet_core::rules::RuleError,
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("Io", e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
