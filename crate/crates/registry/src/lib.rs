//! Registry catalog crawler and OCI distribution pull client.
//!
//! [`RegistryClient`] is `Sync`; one client can serve many threads. Pulls
//! write the layout read by `vetri_core::extract::load_image_dir`:
//! `dest/manifest.json` plus `dest/blobs/sha256/<hex>`.

use std::time::Duration;

use vetri_core::manifest::Platform;
use vetri_core::{DigestError, ImageRef};

mod catalog;
mod http;
mod pull;

pub use catalog::{CatalogEntry, CatalogQuery, Crawl, SourceType, TagInfo};
pub use http::{Challenge, Credentials, TOKEN_ENV, USER_ENV};
pub use pull::Pulled;

use http::Http;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("network error: {0}")]
    Network(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("digest mismatch for {expected}: content hashes to {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no manifest for platform {0}")]
    NoMatchingPlatform(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("destination is locked by another pull: {0}")]
    Locked(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<DigestError> for RegistryError {
    fn from(e: DigestError) -> Self {
        RegistryError::Protocol(e.to_string())
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const DOCKER_HUB_REGISTRY: &str = "https://registry-1.docker.io";
pub const DOCKER_HUB_API: &str = "https://hub.docker.com";

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    /// Base URL used for every distribution request instead of the one
    /// derived from the image's registry host.
    pub registry_url: Option<String>,
    /// Base URL of the search/build-info/tag-metadata API.
    pub hub_url: String,
    pub platform: Platform,
    pub parallelism: usize,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub credentials: Option<Credentials>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            registry_url: None,
            hub_url: DOCKER_HUB_API.to_string(),
            platform: Platform::default(),
            parallelism: 4,
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(300),
            credentials: None,
        }
    }
}

impl RegistryConfig {
    /// Defaults plus credentials from the environment.
    pub fn from_env() -> Self {
        RegistryConfig {
            credentials: Credentials::from_env(),
            ..Default::default()
        }
    }
}

pub struct RegistryClient {
    config: RegistryConfig,
    http: Http,
}

impl RegistryClient {
    pub fn new(config: RegistryConfig) -> Self {
        let http = Http::new(
            config.attempts,
            config.backoff,
            config.timeout,
            config.credentials.clone(),
        );
        RegistryClient { config, http }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    /// Distribution API base URL for an image.
    pub fn registry_base(&self, image: &ImageRef) -> String {
        if let Some(url) = &self.config.registry_url {
            return url.trim_end_matches('/').to_string();
        }
        let host = image.registry.as_str();
        if host == "docker.io" || host == "index.docker.io" {
            return DOCKER_HUB_REGISTRY.to_string();
        }
        let plain = host.starts_with("localhost") || host.starts_with("127.") || host.starts_with("[::1]");
        format!("{}://{host}", if plain { "http" } else { "https" })
    }

    pub(crate) fn hub_base(&self) -> &str {
        self.config.hub_url.trim_end_matches('/')
    }
}

pub(crate) fn pull_scope(image: &ImageRef) -> String {
    format!("repository:{}:pull", image.repository)
}
