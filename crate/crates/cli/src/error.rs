use std::fmt;
use std::path::Path;

/// An error with a stable category, printed as `error[category]: message`.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn invalid_config(message: impl Into<String>) -> Self {
        Self::new("invalid_config", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new("config_conflict", message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Category of the first categorised error in the chain.
pub fn category(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| {
            e.downcast_ref::<CliError>()
                .map(|c| c.category)
                .or_else(|| e.downcast_ref::<lir_core::Error>().map(lir_core::Error::category))
        })
        .unwrap_or("error")
}
