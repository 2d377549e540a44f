//! Shared domain types.
//!
//! Everything here is an immutable value: construct through the validating
//! constructors (or deserialize and call `validate`) and share freely.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;

pub const DEFAULT_REGISTRY: &str = "docker.io";
pub const DEFAULT_TAG: &str = "latest";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageRefError {
    #[error("image reference is empty")]
    Empty,
    #[error("repository {0:?} is empty or contains whitespace")]
    BadRepository(String),
    #[error("tag {0:?} is empty or contains whitespace")]
    BadTag(String),
    #[error(transparent)]
    BadDigest(#[from] crate::digest::DigestError),
}

/// Registry-qualified image name with tag and optional content digest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawImageRef")]
pub struct ImageRef {
    pub registry: String,
    pub repository: String,
    pub tag: String,
    pub digest: Option<Digest>,
}

#[derive(Deserialize)]
struct RawImageRef {
    #[serde(default)]
    registry: Option<String>,
    repository: String,
    #[serde(default)]
    tag: Option<String>,
    #[serde(default)]
    digest: Option<String>,
}

impl TryFrom<RawImageRef> for ImageRef {
    type Error = ImageRefError;

    fn try_from(raw: RawImageRef) -> Result<Self, Self::Error> {
        ImageRef::new(
            raw.registry.as_deref().unwrap_or(DEFAULT_REGISTRY),
            &raw.repository,
            raw.tag.as_deref(),
            raw.digest.as_deref(),
        )
    }
}

impl ImageRef {
    pub fn new(
        registry: &str,
        repository: &str,
        tag: Option<&str>,
        digest: Option<&str>,
    ) -> Result<Self, ImageRefError> {
        if repository.is_empty() || repository.chars().any(char::is_whitespace) {
            return Err(ImageRefError::BadRepository(repository.to_string()));
        }
        let tag = tag.unwrap_or(DEFAULT_TAG);
        if tag.is_empty() || tag.chars().any(char::is_whitespace) {
            return Err(ImageRefError::BadTag(tag.to_string()));
        }
        let digest = digest.map(Digest::parse).transpose()?;
        Ok(ImageRef {
            registry: if registry.is_empty() {
                DEFAULT_REGISTRY.to_string()
            } else {
                registry.to_string()
            },
            repository: repository.to_string(),
            tag: tag.to_string(),
            digest,
        })
    }

    /// Parses `[registry/]repository[:tag][@sha256:<hex>]`.
    ///
    /// The first path component is treated as a registry host when it contains
    /// a `.` or `:` or equals `localhost`. Single-component names on the
    /// default registry get the `library/` namespace.
    pub fn parse(reference: &str) -> Result<Self, ImageRefError> {
        let reference = reference.trim();
        if reference.is_empty() {
            return Err(ImageRefError::Empty);
        }
        let (name_tag, digest) = match reference.split_once('@') {
            Some((n, d)) => (n, Some(d)),
            None => (reference, None),
        };
        let (registry, rest) = match name_tag.split_once('/') {
            Some((first, rest)) if first.contains('.') || first.contains(':') || first == "localhost" => (first, rest),
            _ => (DEFAULT_REGISTRY, name_tag),
        };
        // A colon after the last slash separates the tag.
        let (repository, tag) = match rest.rfind(':') {
            Some(i) if !rest[i..].contains('/') => (&rest[..i], Some(&rest[i + 1..])),
            _ => (rest, None),
        };
        let repository = if registry == DEFAULT_REGISTRY && !repository.contains('/') {
            format!("library/{repository}")
        } else {
            repository.to_string()
        };
        ImageRef::new(registry, &repository, tag, digest)
    }

    pub fn with_digest(&self, digest: Digest) -> Self {
        ImageRef {
            digest: Some(digest),
            ..self.clone()
        }
    }

    /// Identity used inside join keys: `repository@digest` when the digest is
    /// known, otherwise `repository:tag`.
    pub fn key_name(&self) -> String {
        match &self.digest {
            Some(d) => format!("{}@{}", self.repository, d),
            None => format!("{}:{}", self.repository, self.tag),
        }
    }

    /// `repository:tag`, ignoring any digest.
    pub fn name_tag(&self) -> String {
        format!("{}:{}", self.repository, self.tag)
    }

    /// The reference to request from the registry: digest if pinned, else tag.
    pub fn reference(&self) -> &str {
        match &self.digest {
            Some(d) => d.as_str(),
            None => &self.tag,
        }
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}:{}", self.registry, self.repository, self.tag)?;
        if let Some(d) = &self.digest {
            write!(f, "@{d}")?;
        }
        Ok(())
    }
}

impl FromStr for ImageRef {
    type Err = ImageRefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImageRef::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ecosystem {
    Dpkg,
    Apk,
    MavenArchive,
}

impl Ecosystem {
    pub fn as_str(self) -> &'static str {
        match self {
            Ecosystem::Dpkg => "Dpkg",
            Ecosystem::Apk => "Apk",
            Ecosystem::MavenArchive => "MavenArchive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PackageClass {
    #[serde(rename = "OS")]
    Os,
    Library,
    Application,
}

impl PackageClass {
    pub const ALL: [PackageClass; 3] = [PackageClass::Application, PackageClass::Library, PackageClass::Os];

    pub fn as_str(self) -> &'static str {
        match self {
            PackageClass::Os => "OS",
            PackageClass::Library => "Library",
            PackageClass::Application => "Application",
        }
    }
}

/// Version placeholder for archives without build metadata.
pub const UNKNOWN_VERSION: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackageRecordError {
    #[error("package name is empty")]
    EmptyName,
    #[error("package {0} has an empty version")]
    EmptyVersion(String),
    #[error("package {name}: ecosystem {ecosystem:?} cannot have class {class:?}")]
    ClassMismatch {
        name: String,
        ecosystem: Ecosystem,
        class: PackageClass,
    },
}

/// One installed package found in an image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PackageRecord {
    pub name: String,
    pub version: String,
    pub ecosystem: Ecosystem,
    pub class: PackageClass,
    pub source_path: String,
}

impl PackageRecord {
    pub fn new(
        name: impl Into<String>,
        version: impl Into<String>,
        ecosystem: Ecosystem,
        class: PackageClass,
        source_path: impl Into<String>,
    ) -> Result<Self, PackageRecordError> {
        let record = PackageRecord {
            name: name.into(),
            version: version.into(),
            ecosystem,
            class,
            source_path: source_path.into(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), PackageRecordError> {
        if self.name.is_empty() {
            return Err(PackageRecordError::EmptyName);
        }
        if self.version.is_empty() {
            return Err(PackageRecordError::EmptyVersion(self.name.clone()));
        }
        let ok = match self.ecosystem {
            Ecosystem::Dpkg | Ecosystem::Apk => self.class == PackageClass::Os,
            Ecosystem::MavenArchive => self.class != PackageClass::Os,
        };
        if !ok {
            return Err(PackageRecordError::ClassMismatch {
                name: self.name.clone(),
                ecosystem: self.ecosystem,
                class: self.class,
            });
        }
        Ok(())
    }

    pub fn has_known_version(&self) -> bool {
        self.version != UNKNOWN_VERSION
    }
}

/// Categorical severity. Declaration order is the total order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    #[default]
    Unknown,
    Negligible,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 6] = [
        Severity::Unknown,
        Severity::Negligible,
        Severity::Low,
        Severity::Medium,
        Severity::High,
        Severity::Critical,
    ];

    /// Maps any tool or feed label onto a level. Unrecognised labels become
    /// `Unknown`.
    pub fn normalize(raw: &str) -> Severity {
        match raw.trim().to_ascii_lowercase().as_str() {
            "negligible" => Severity::Negligible,
            "low" => Severity::Low,
            "medium" | "moderate" => Severity::Medium,
            "high" => Severity::High,
            "critical" => Severity::Critical,
            _ => Severity::Unknown,
        }
    }

    /// Like [`Severity::normalize`] but reports whether the label was
    /// recognised. Empty labels and "unknown" count as recognised.
    pub fn normalize_checked(raw: &str) -> (Severity, bool) {
        let sev = Severity::normalize(raw);
        let known = sev != Severity::Unknown || raw.trim().is_empty() || raw.trim().eq_ignore_ascii_case("unknown");
        (sev, known)
    }

    pub fn render(self) -> &'static str {
        match self {
            Severity::Unknown => "Unknown",
            Severity::Negligible => "Negligible",
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
            Severity::Critical => "Critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render())
    }
}

/// Vulnerability identifier, uppercased on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct VulnId(String);

impl VulnId {
    pub fn new(raw: &str) -> Self {
        VulnId(raw.trim().to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for `CVE-YYYY-NNNN` with four or more sequence digits. Anything
    /// else is a vendor advisory id.
    pub fn is_cve(&self) -> bool {
        let mut parts = self.0.splitn(3, '-');
        matches!(
            (parts.next(), parts.next(), parts.next()),
            (Some("CVE"), Some(year), Some(seq))
                if year.len() == 4
                    && year.bytes().all(|b| b.is_ascii_digit())
                    && seq.len() >= 4
                    && seq.bytes().all(|b| b.is_ascii_digit())
        )
    }
}

impl From<String> for VulnId {
    fn from(s: String) -> Self {
        VulnId::new(&s)
    }
}

impl From<VulnId> for String {
    fn from(v: VulnId) -> Self {
        v.0
    }
}

impl fmt::Display for VulnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Fix {
    FixedAvailable { fixed_in_version: String },
    NoFixAvailable,
    Unknown,
}

impl Fix {
    pub fn is_available(&self) -> bool {
        matches!(self, Fix::FixedAvailable { .. })
    }

    pub fn from_fixed_in(fixed_in: Option<&str>) -> Fix {
        match fixed_in.map(str::trim) {
            Some(v) if !v.is_empty() => Fix::FixedAvailable {
                fixed_in_version: v.to_string(),
            },
            _ => Fix::NoFixAvailable,
        }
    }
}

/// One reported vulnerability.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Detection {
    pub image: ImageRef,
    pub package_name: String,
    pub package_version: String,
    pub cve_id: VulnId,
    pub tool_id: String,
    pub severity: Severity,
    pub fix: Fix,
    /// Package class when the reporting tool or matcher knows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<PackageClass>,
}

impl Detection {
    pub fn project(&self, key: JoinKey) -> ProjectedKey {
        ProjectedKey {
            image: self.image.key_name(),
            package: match key {
                JoinKey::CveOnly => None,
                JoinKey::FullTuple => Some((self.package_name.clone(), self.package_version.clone())),
            },
            cve_id: self.cve_id.as_str().to_string(),
        }
    }
}

/// Field projection under which detections from different tools are treated
/// as the same vulnerability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinKey {
    /// `(image, cve_id)`
    #[default]
    CveOnly,
    /// `(image, package_name, package_version, cve_id)`
    FullTuple,
}

impl FromStr for JoinKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cve" | "cve_only" | "cveonly" => Ok(JoinKey::CveOnly),
            "full" | "full_tuple" | "fulltuple" => Ok(JoinKey::FullTuple),
            other => Err(format!("unknown join key {other:?} (expected cve_only or full_tuple)")),
        }
    }
}

/// A detection projected under a [`JoinKey`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProjectedKey {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<(String, String)>,
    pub cve_id: String,
}

impl ProjectedKey {
    pub fn fields(&self) -> Vec<&str> {
        let mut out = vec![self.image.as_str()];
        if let Some((name, version)) = &self.package {
            out.push(name);
            out.push(version);
        }
        out.push(&self.cve_id);
        out
    }
}

impl fmt::Display for ProjectedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.fields().join(", "))
    }
}
