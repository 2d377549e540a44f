//! Core of the vetri container-scanner evaluation harness.
//!
//! The crate is organised along the pipeline:
//!
//! * [`model`]: shared value types (images, packages, detections, join keys).
//! * [`manifest`]: image manifest documents as stored on disk.
//! * [`extract`]: layer flattening and package inventory extraction.
//! * [`version`]: per-ecosystem version comparators.
//! * [`vulnfeed`]: feed snapshots and the built-in reference matcher.
//! * [`adapters`]: third-party scanner and static-analysis report ingestion.
//! * [`metrics`]: filters, detection miss, DHR, coverage and landscape.

pub mod adapters;
pub mod extract;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod version;
pub mod vulnfeed;

mod digest;

pub use digest::{sha256_digest, Digest, DigestError};
pub use model::{
    Detection, Ecosystem, Fix, ImageRef, ImageRefError, JoinKey, PackageClass, PackageRecord, ProjectedKey, Severity,
    VulnId,
};

/// Version string stamped into every inventory this crate produces.
pub const EXTRACTOR_VERSION: &str = concat!("vetri-extract/", env!("CARGO_PKG_VERSION"));

/// Current time, or the instant named by `SOURCE_DATE_EPOCH` when set so that
/// repeated runs can produce byte-identical artifacts.
pub fn now_utc() -> chrono::DateTime<chrono::Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now)
}
