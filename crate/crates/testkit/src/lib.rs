//! Test fixtures: layer and archive builders, hand-built images and an
//! in-process registry.

pub mod build;
pub mod image;
pub mod oracle;
pub mod overlay;
pub mod registry;

pub use build::{bare_jar, gzip, jar, sha256_digest, war, zip_bytes, LayerBuilder};
pub use image::{standard_image, standard_layers, FixtureImage, APP_SELECTOR, STANDARD_FILES, STANDARD_LISTING};
pub use registry::{FixtureRegistry, RegistryBuilder, FIXTURE_TOKEN};

use std::path::PathBuf;

/// Absolute path of a file under this crate's `data/` directory.
pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Projects with a static-analysis report at `data/spotbugs_<project>.xml`.
pub const SPOTBUGS_PROJECTS: &[&str] = &["blog", "forum", "shop", "tracker", "wiki"];
