//! Image inputs: the pull layout written by the registry client, OCI image
//! layouts, and `docker save` tarballs.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, Cursor, Read};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ExtractError;
use crate::digest::Digest;
use crate::manifest::{
    select_platform, ImageManifest, ManifestDocument, Platform, DOCKER_LAYER_TAR, DOCKER_MANIFEST_V2,
};

pub trait BlobStore: Send + Sync {
    fn open_blob(&self, digest: &Digest) -> Result<Box<dyn Read + '_>, ExtractError>;
}

/// `root/blobs/<algorithm>/<hex>`
#[derive(Debug, Clone)]
pub struct DirBlobStore {
    root: PathBuf,
}

impl DirBlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirBlobStore { root: root.into() }
    }

    pub fn blob_path(root: &Path, digest: &Digest) -> PathBuf {
        root.join("blobs").join(digest.algorithm()).join(digest.hex())
    }
}

impl BlobStore for DirBlobStore {
    fn open_blob(&self, digest: &Digest) -> Result<Box<dyn Read + '_>, ExtractError> {
        let path = Self::blob_path(&self.root, digest);
        match File::open(&path) {
            Ok(f) => Ok(Box::new(f)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(ExtractError::MissingBlob(digest.clone())),
            Err(e) => Err(ExtractError::Io(path.display().to_string(), e)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryBlobStore {
    blobs: HashMap<Digest, Vec<u8>>,
}

impl MemoryBlobStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `bytes` under their own digest and returns it.
    pub fn insert(&mut self, bytes: Vec<u8>) -> Digest {
        let d = Digest::of(&bytes);
        self.blobs.insert(d.clone(), bytes);
        d
    }
}

impl BlobStore for MemoryBlobStore {
    fn open_blob(&self, digest: &Digest) -> Result<Box<dyn Read + '_>, ExtractError> {
        self.blobs
            .get(digest)
            .map(|b| Box::new(Cursor::new(b.as_slice())) as Box<dyn Read>)
            .ok_or_else(|| ExtractError::MissingBlob(digest.clone()))
    }
}

/// A manifest plus somewhere to read its blobs from.
pub struct LoadedImage {
    pub manifest: ImageManifest,
    pub blobs: Box<dyn BlobStore>,
    /// Tags recorded in a `docker save` manifest, if any.
    pub repo_tags: Vec<String>,
}

impl std::fmt::Debug for LoadedImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedImage")
            .field("manifest", &self.manifest)
            .field("repo_tags", &self.repo_tags)
            .finish_non_exhaustive()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExtractError + '_ {
    move |e| ExtractError::Io(path.display().to_string(), e)
}

fn layout_err(msg: impl Into<String>) -> ExtractError {
    ExtractError::Layout(msg.into())
}

fn image_manifest(
    bytes: &[u8],
    media_type: Option<&str>,
    lookup: &dyn Fn(&Digest) -> Option<Vec<u8>>,
    platform: &Platform,
) -> Result<ImageManifest, ExtractError> {
    match ManifestDocument::parse(bytes, media_type).map_err(|e| layout_err(e.to_string()))? {
        ManifestDocument::Image(m) => Ok(m),
        ManifestDocument::Index(entries) => {
            // OCI layouts often carry a single untagged entry without a platform.
            let chosen = select_platform(&entries, platform)
                .or_else(|| (entries.len() == 1 && entries[0].platform.is_none()).then(|| &entries[0]))
                .ok_or_else(|| layout_err(format!("no manifest for platform {platform}")))?;
            let inner = lookup(&chosen.digest).ok_or_else(|| ExtractError::MissingBlob(chosen.digest.clone()))?;
            image_manifest(&inner, Some(&chosen.media_type), lookup, platform)
        }
    }
}

/// Loads a directory holding either the pull layout (`manifest.json` plus
/// `blobs/`) or an OCI image layout (`oci-layout`, `index.json`, `blobs/`).
pub fn load_image_dir(dir: &Path, platform: &Platform) -> Result<LoadedImage, ExtractError> {
    let lookup = |d: &Digest| fs::read(DirBlobStore::blob_path(dir, d)).ok();
    let manifest = if dir.join("index.json").is_file() {
        let path = dir.join("index.json");
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        image_manifest(&bytes, None, &lookup, platform)?
    } else {
        let path = dir.join("manifest.json");
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        image_manifest(&bytes, None, &lookup, platform)?
    };
    Ok(LoadedImage {
        manifest,
        blobs: Box::new(DirBlobStore::new(dir)),
        repo_tags: Vec::new(),
    })
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct SaveManifestEntry {
    config: String,
    #[serde(default)]
    repo_tags: Option<Vec<String>>,
    layers: Vec<String>,
}

/// Loads a `docker save` or OCI-layout tarball into memory.
pub fn load_image_tarball(path: &Path, platform: &Platform) -> Result<LoadedImage, ExtractError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader: Box<dyn Read> = Box::new(io::BufReader::new(file));
    let mut head = [0u8; 2];
    {
        let mut f = File::open(path).map_err(io_err(path))?;
        let _ = f.read(&mut head);
    }
    if head == [0x1f, 0x8b] {
        reader = Box::new(flate2::read::GzDecoder::new(reader));
    }
    let corrupt = |e: io::Error| ExtractError::CorruptLayer(format!("{}: {e}", path.display()));
    let mut files: HashMap<String, Vec<u8>> = HashMap::new();
    let mut archive = tar::Archive::new(reader);
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        if entry.header().entry_type() != tar::EntryType::Regular {
            continue;
        }
        let name = entry
            .path()
            .map_err(corrupt)?
            .to_string_lossy()
            .trim_start_matches("./")
            .to_string();
        let mut buf = Vec::new();
        entry.read_to_end(&mut buf).map_err(corrupt)?;
        files.insert(name, buf);
    }

    let mut store = super::MemoryBlobStore::new();
    if files.contains_key("index.json") {
        let lookup = |d: &Digest| files.get(&format!("blobs/{}/{}", d.algorithm(), d.hex())).cloned();
        let manifest = image_manifest(&files["index.json"], None, &lookup, platform)?;
        for d in manifest.blob_digests() {
            let bytes = lookup(d).ok_or_else(|| ExtractError::MissingBlob(d.clone()))?;
            store.insert(bytes);
        }
        return Ok(LoadedImage {
            manifest,
            blobs: Box::new(store),
            repo_tags: Vec::new(),
        });
    }

    let save_manifest = files
        .get("manifest.json")
        .ok_or_else(|| layout_err(format!("{} has neither index.json nor manifest.json", path.display())))?;
    let entries: Vec<SaveManifestEntry> =
        serde_json::from_slice(save_manifest).map_err(|e| layout_err(format!("manifest.json: {e}")))?;
    let entry = entries
        .into_iter()
        .next()
        .ok_or_else(|| layout_err("manifest.json lists no images"))?;
    let take = |name: &str| {
        files
            .get(name)
            .cloned()
            .ok_or_else(|| layout_err(format!("tarball is missing {name}")))
    };
    let config_digest = store.insert(take(&entry.config)?);
    let mut layer_digests = Vec::new();
    for layer in &entry.layers {
        layer_digests.push(store.insert(take(layer)?));
    }
    if layer_digests.is_empty() {
        return Err(layout_err("manifest.json lists no layers"));
    }
    let layer_media_types = vec![DOCKER_LAYER_TAR.to_string(); layer_digests.len()];
    Ok(LoadedImage {
        manifest: ImageManifest {
            media_type: DOCKER_MANIFEST_V2.to_string(),
            config_digest,
            layer_digests,
            layer_media_types,
        },
        blobs: Box::new(store),
        repo_tags: entry.repo_tags.unwrap_or_default(),
    })
}

/// Dispatches on whether `path` is a directory or a tarball.
pub fn load_image(path: &Path, platform: &Platform) -> Result<LoadedImage, ExtractError> {
    if path.is_dir() {
        load_image_dir(path, platform)
    } else {
        load_image_tarball(path, platform)
    }
}
