//! Image manifest documents (Docker v2 schema 2 and OCI).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::{Digest, DigestError};

pub const DOCKER_MANIFEST_V2: &str = "application/vnd.docker.distribution.manifest.v2+json";
pub const DOCKER_MANIFEST_LIST: &str = "application/vnd.docker.distribution.manifest.list.v2+json";
pub const OCI_MANIFEST: &str = "application/vnd.oci.image.manifest.v1+json";
pub const OCI_INDEX: &str = "application/vnd.oci.image.index.v1+json";

pub const DOCKER_LAYER_GZIP: &str = "application/vnd.docker.image.rootfs.diff.tar.gzip";
pub const DOCKER_LAYER_TAR: &str = "application/vnd.docker.image.rootfs.diff.tar";
pub const OCI_LAYER_GZIP: &str = "application/vnd.oci.image.layer.v1.tar+gzip";
pub const OCI_LAYER_TAR: &str = "application/vnd.oci.image.layer.v1.tar";
pub const DOCKER_CONFIG: &str = "application/vnd.docker.container.image.v1+json";
pub const OCI_CONFIG: &str = "application/vnd.oci.image.config.v1+json";

/// Accept header value covering every manifest flavour we can read.
pub const MANIFEST_ACCEPT: &str = "application/vnd.oci.image.manifest.v1+json, \
application/vnd.oci.image.index.v1+json, \
application/vnd.docker.distribution.manifest.v2+json, \
application/vnd.docker.distribution.manifest.list.v2+json";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest has neither layers nor a manifest list")]
    Shape,
    #[error("manifest lists no layers")]
    NoLayers,
    #[error(transparent)]
    Digest(#[from] DigestError),
    #[error("unsupported manifest media type {0}")]
    UnsupportedMediaType(String),
}

/// A single-platform image manifest. Layers are in application order, base
/// layer first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub media_type: String,
    pub config_digest: Digest,
    pub layer_digests: Vec<Digest>,
    pub layer_media_types: Vec<String>,
}

impl ImageManifest {
    pub fn layers(&self) -> impl Iterator<Item = (&Digest, &str)> {
        self.layer_digests
            .iter()
            .zip(self.layer_media_types.iter().map(String::as_str))
    }

    /// Every blob the manifest references: config first, then layers.
    pub fn blob_digests(&self) -> Vec<&Digest> {
        std::iter::once(&self.config_digest)
            .chain(self.layer_digests.iter())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Platform {
    pub os: String,
    pub architecture: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

impl Default for Platform {
    fn default() -> Self {
        Platform {
            os: "linux".into(),
            architecture: "amd64".into(),
            variant: None,
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.os, self.architecture)?;
        if let Some(v) = &self.variant {
            write!(f, "/{v}")?;
        }
        Ok(())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('/');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(os), Some(arch), variant, None) if !os.is_empty() && !arch.is_empty() => Ok(Platform {
                os: os.into(),
                architecture: arch.into(),
                variant: variant.map(Into::into),
            }),
            _ => Err(format!("platform {s:?} is not os/arch[/variant]")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub digest: Digest,
    pub media_type: String,
    pub platform: Option<Platform>,
}

/// A parsed manifest response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestDocument {
    Image(ImageManifest),
    Index(Vec<IndexEntry>),
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawDescriptor {
    #[serde(default)]
    media_type: Option<String>,
    digest: String,
    #[serde(default)]
    platform: Option<Platform>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawManifest {
    #[serde(default)]
    media_type: Option<String>,
    #[serde(default)]
    config: Option<RawDescriptor>,
    #[serde(default)]
    layers: Option<Vec<RawDescriptor>>,
    #[serde(default)]
    manifests: Option<Vec<RawDescriptor>>,
}

impl ManifestDocument {
    /// Parses registry manifest bytes. `content_type` is the response header,
    /// used when the document omits `mediaType`.
    pub fn parse(bytes: &[u8], content_type: Option<&str>) -> Result<Self, ManifestError> {
        let raw: RawManifest = serde_json::from_slice(bytes)?;
        let media_type = raw
            .media_type
            .clone()
            .or_else(|| content_type.map(|c| c.split(';').next().unwrap_or(c).trim().to_string()));

        if let Some(entries) = raw.manifests {
            let entries = entries
                .into_iter()
                .map(|d| {
                    Ok(IndexEntry {
                        digest: Digest::parse(&d.digest)?,
                        media_type: d.media_type.unwrap_or_else(|| OCI_MANIFEST.to_string()),
                        platform: d.platform,
                    })
                })
                .collect::<Result<Vec<_>, DigestError>>()?;
            return Ok(ManifestDocument::Index(entries));
        }

        let (config, layers) = match (raw.config, raw.layers) {
            (Some(c), Some(l)) => (c, l),
            _ => return Err(ManifestError::Shape),
        };
        if layers.is_empty() {
            return Err(ManifestError::NoLayers);
        }
        let media_type = media_type.unwrap_or_else(|| OCI_MANIFEST.to_string());
        if media_type != OCI_MANIFEST && media_type != DOCKER_MANIFEST_V2 {
            return Err(ManifestError::UnsupportedMediaType(media_type));
        }
        let default_layer = if media_type == DOCKER_MANIFEST_V2 {
            DOCKER_LAYER_GZIP
        } else {
            OCI_LAYER_GZIP
        };
        let mut layer_digests = Vec::with_capacity(layers.len());
        let mut layer_media_types = Vec::with_capacity(layers.len());
        for layer in layers {
            layer_digests.push(Digest::parse(&layer.digest)?);
            layer_media_types.push(layer.media_type.unwrap_or_else(|| default_layer.to_string()));
        }
        Ok(ManifestDocument::Image(ImageManifest {
            media_type,
            config_digest: Digest::parse(&config.digest)?,
            layer_digests,
            layer_media_types,
        }))
    }
}

/// Picks the index entry for `platform`. A variant on the wanted platform
/// must match exactly; otherwise the first os/arch match wins.
pub fn select_platform<'a>(entries: &'a [IndexEntry], platform: &Platform) -> Option<&'a IndexEntry> {
    entries.iter().find(|e| {
        e.platform.as_ref().is_some_and(|p| {
            p.os == platform.os
                && p.architecture == platform.architecture
                && (platform.variant.is_none() || p.variant == platform.variant)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(c: char) -> String {
        format!("sha256:{}", c.to_string().repeat(64))
    }

    #[test]
    fn parses_docker_manifest() {
        let body = serde_json::json!({
            "schemaVersion": 2,
            "mediaType": DOCKER_MANIFEST_V2,
            "config": {"mediaType": DOCKER_CONFIG, "digest": d('a'), "size": 1},
            "layers": [
                {"mediaType": DOCKER_LAYER_GZIP, "digest": d('b'), "size": 1},
                {"mediaType": DOCKER_LAYER_GZIP, "digest": d('c'), "size": 1}
            ]
        });
        let doc = ManifestDocument::parse(body.to_string().as_bytes(), None).unwrap();
        let ManifestDocument::Image(m) = doc else {
            panic!("expected image")
        };
        assert_eq!(m.layer_digests.len(), 2);
        assert_eq!(m.layer_digests[0].as_str(), d('b'));
        assert_eq!(m.blob_digests().len(), 3);
    }

    #[test]
    fn parses_index_and_selects_platform() {
        let body = serde_json::json!({
            "schemaVersion": 2,
            "mediaType": OCI_INDEX,
            "manifests": [
                {"mediaType": OCI_MANIFEST, "digest": d('1'), "platform": {"os": "linux", "architecture": "arm64", "variant": "v8"}},
                {"mediaType": OCI_MANIFEST, "digest": d('2'), "platform": {"os": "linux", "architecture": "amd64"}}
            ]
        });
        let ManifestDocument::Index(entries) = ManifestDocument::parse(body.to_string().as_bytes(), None).unwrap()
        else {
            panic!("expected index")
        };
        let chosen = select_platform(&entries, &Platform::default()).unwrap();
        assert_eq!(chosen.digest.as_str(), d('2'));
        let arm: Platform = "linux/arm64".parse().unwrap();
        assert_eq!(select_platform(&entries, &arm).unwrap().digest.as_str(), d('1'));
        let s390: Platform = "linux/s390x".parse().unwrap();
        assert!(select_platform(&entries, &s390).is_none());
    }

    #[test]
    fn rejects_empty_layer_list() {
        let body = serde_json::json!({"mediaType": OCI_MANIFEST, "config": {"digest": d('a')}, "layers": []});
        assert!(matches!(
            ManifestDocument::parse(body.to_string().as_bytes(), None),
            Err(ManifestError::NoLayers)
        ));
    }
}
