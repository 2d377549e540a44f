use std::fmt;

use vetri_core::adapters::AdapterError;
use vetri_core::extract::ExtractError;
use vetri_core::metrics::MetricsError;
use vetri_core::vulnfeed::FeedError;
use vetri_registry::RegistryError;

pub const EXIT_OK: i32 = 0;
/// Crawl finished with some pages missing.
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_UNAVAILABLE: i32 = 69;
pub const EXIT_INTERNAL: i32 = 70;
pub const EXIT_LOCKED: i32 = 75;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message: msg.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::internal(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        let code = match &e {
            RegistryError::Network(_) | RegistryError::NotFound(_) | RegistryError::Auth(_) => EXIT_UNAVAILABLE,
            RegistryError::Protocol(_)
            | RegistryError::DigestMismatch { .. }
            | RegistryError::NoMatchingPlatform(_) => EXIT_DATA,
            RegistryError::Precondition(_) => EXIT_USAGE,
            RegistryError::Locked(_) => EXIT_LOCKED,
            RegistryError::Io { .. } => EXIT_INTERNAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<FeedError> for CliError {
    fn from(e: FeedError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::NoTools | MetricsError::DuplicateTool(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
