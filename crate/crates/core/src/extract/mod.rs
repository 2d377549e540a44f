//! Layer flattening and package inventory extraction.

mod apk;
mod archive;
mod dpkg;
mod fs;
mod layers;
mod source;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::model::{ImageRef, PackageRecord};

pub use apk::{parse_apk_installed, APK_INSTALLED};
pub use archive::{extract_archive_packages, is_archive_path, CoordinatePattern};
pub use dpkg::{parse_dpkg_status, parse_dpkg_status_d, DPKG_STATUS, DPKG_STATUS_DIR};
pub use fs::{normalize_path, FileTree, Node};
pub use layers::{
    apply_layer, assemble_filesystem, assemble_filesystem_with, compression_for, read_layer, Compression, EntryKind,
    LayerEntry, OPAQUE_WHITEOUT, WHITEOUT_PREFIX,
};
pub use source::{
    load_image, load_image_dir, load_image_tarball, BlobStore, DirBlobStore, LoadedImage, MemoryBlobStore,
};

/// RPM database locations. Their presence is reported, not parsed.
pub const RPM_DATABASES: [&str; 4] = [
    "/var/lib/rpm/Packages",
    "/var/lib/rpm/Packages.db",
    "/var/lib/rpm/rpmdb.sqlite",
    "/usr/lib/sysimage/rpm/rpmdb.sqlite",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{database}: record {record} (line {line}): {message}")]
pub struct ParseError {
    pub database: String,
    /// Zero-based stanza or record index.
    pub record: usize,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("corrupt layer: {0}")]
    CorruptLayer(String),
    #[error("unsupported layer media type {0}")]
    UnsupportedMediaType(String),
    #[error("blob {0} is not present")]
    MissingBlob(Digest),
    #[error("image layout: {0}")]
    Layout(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Non-fatal extraction problems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractWarning {
    CorruptArchive { path: String, reason: String },
    MissingMetadata { path: String },
    UnsupportedEcosystem { path: String, ecosystem: String },
}

impl fmt::Display for ExtractWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractWarning::CorruptArchive { path, reason } => {
                write!(f, "skipped unreadable archive {path}: {reason}")
            }
            ExtractWarning::MissingMetadata { path } => {
                write!(f, "archive {path} has no build metadata; recorded with unknown version")
            }
            ExtractWarning::UnsupportedEcosystem { path, ecosystem } => {
                write!(f, "unsupported ecosystem {ecosystem} database at {path}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub image: ImageRef,
    pub extracted_at: DateTime<Utc>,
    pub extractor_version: String,
    pub packages: Vec<PackageRecord>,
}

impl Inventory {
    pub fn new(image: ImageRef, packages: Vec<PackageRecord>) -> Self {
        let mut packages = packages;
        sort_dedup(&mut packages);
        Inventory {
            image,
            extracted_at: crate::now_utc(),
            extractor_version: crate::EXTRACTOR_VERSION.to_string(),
            packages,
        }
    }

    /// Deterministic JSON: pretty-printed with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("inventory serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub inventory: Inventory,
    pub warnings: Vec<ExtractWarning>,
}

fn sort_dedup(packages: &mut Vec<PackageRecord>) {
    packages.sort_by(|a, b| {
        (a.ecosystem, &a.name, &a.version, &a.source_path, a.class).cmp(&(
            b.ecosystem,
            &b.name,
            &b.version,
            &b.source_path,
            b.class,
        ))
    });
    packages.dedup_by(|a, b| {
        a.ecosystem == b.ecosystem && a.name == b.name && a.version == b.version && a.source_path == b.source_path
    });
}

/// Paths whose bytes inventory extraction needs; everything else can be
/// assembled without content.
pub fn is_inventory_path(path: &str) -> bool {
    path == DPKG_STATUS
        || path.starts_with(DPKG_STATUS_DIR)
        || path == APK_INSTALLED
        || is_archive_path(path)
        // Package databases are sometimes reached through symlinked parents;
        // keep anything named like one.
        || path.ends_with("/dpkg/status")
        || path.ends_with("/apk/db/installed")
}

/// Union of dpkg, apk and archive extraction over an assembled view.
pub fn build_inventory(
    image: ImageRef,
    fs: &FileTree,
    app_selectors: &[CoordinatePattern],
) -> Result<Extraction, ExtractError> {
    let mut packages = Vec::new();
    let mut warnings = Vec::new();

    if let Some(bytes) = fs.read_resolved(DPKG_STATUS) {
        packages.extend(parse_dpkg_status(&String::from_utf8_lossy(bytes))?);
    }
    if let Some(dir) = fs.resolve(DPKG_STATUS_DIR) {
        for child in fs.children(&dir) {
            if let Some(bytes) = fs.read_resolved(child) {
                let logical = format!("{DPKG_STATUS_DIR}/{}", &child[dir.len() + 1..]);
                packages.extend(parse_dpkg_status_d(&String::from_utf8_lossy(bytes), &logical)?);
            }
        }
    }
    if let Some(bytes) = fs.read_resolved(APK_INSTALLED) {
        packages.extend(parse_apk_installed(&String::from_utf8_lossy(bytes))?);
    }
    for db in RPM_DATABASES {
        if fs
            .resolve(db)
            .is_some_and(|p| matches!(fs.get(&p), Some(Node::File { .. })))
        {
            warnings.push(ExtractWarning::UnsupportedEcosystem {
                path: db.to_string(),
                ecosystem: "rpm".to_string(),
            });
        }
    }
    let (archives, archive_warnings) = extract_archive_packages(fs, app_selectors);
    packages.extend(archives);
    warnings.extend(archive_warnings);

    for warning in &warnings {
        log::warn!("{warning}");
    }
    Ok(Extraction {
        inventory: Inventory::new(image, packages),
        warnings,
    })
}
