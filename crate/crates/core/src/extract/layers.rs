use std::io::{self, Read};
use std::sync::Arc;

use flate2::read::GzDecoder;

use super::fs::{normalize_path, FileTree, Node};
use super::{BlobStore, ExtractError};
use crate::manifest::ImageManifest;

pub const WHITEOUT_PREFIX: &str = ".wh.";
pub const OPAQUE_WHITEOUT: &str = ".wh..wh..opq";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    File,
    Dir,
    Symlink,
    /// Hard link to another path; content is copied from the target.
    Hardlink,
    Whiteout,
    OpaqueWhiteout,
}

/// One entry of a layer tar. For whiteouts `path` is the path being removed
/// (or, for opaque whiteouts, the directory being cleared).
#[derive(Debug, Clone)]
pub struct LayerEntry {
    pub path: String,
    pub kind: EntryKind,
    pub content: Option<Arc<[u8]>>,
    pub size: u64,
    pub link_target: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Gzip,
}

/// Compression implied by a layer media type. Unknown or generic types are
/// sniffed from the first bytes.
pub fn compression_for(media_type: &str, head: &[u8]) -> Result<Compression, ExtractError> {
    let sniffed = if head.starts_with(&[0x1f, 0x8b]) {
        Compression::Gzip
    } else {
        Compression::None
    };
    if media_type.ends_with("+zstd") || media_type.ends_with(".zstd") {
        return Err(ExtractError::UnsupportedMediaType(media_type.to_string()));
    }
    if media_type.ends_with("tar.gzip") || media_type.ends_with("tar+gzip") {
        return Ok(Compression::Gzip);
    }
    if media_type.ends_with(".tar") || media_type.ends_with("v1.tar") {
        return Ok(Compression::None);
    }
    if media_type.is_empty() || media_type == "application/octet-stream" || media_type.ends_with("rootfs.diff.tar") {
        return Ok(sniffed);
    }
    if media_type.contains("foreign") || media_type.contains("nondistributable") {
        return Ok(sniffed);
    }
    Err(ExtractError::UnsupportedMediaType(media_type.to_string()))
}

fn classify(path: &str) -> (String, EntryKind) {
    let normalized = normalize_path(path);
    let (dir, base) = match normalized.rfind('/') {
        Some(i) => (&normalized[..i], &normalized[i + 1..]),
        None => ("", normalized.as_str()),
    };
    let dir = if dir.is_empty() { "/" } else { dir };
    if base == OPAQUE_WHITEOUT {
        return (dir.to_string(), EntryKind::OpaqueWhiteout);
    }
    if let Some(target) = base.strip_prefix(WHITEOUT_PREFIX) {
        let target = if dir == "/" {
            format!("/{target}")
        } else {
            format!("{dir}/{target}")
        };
        return (target, EntryKind::Whiteout);
    }
    (normalized, EntryKind::File)
}

/// Decodes one layer tar stream. `retain` decides which regular files keep
/// their bytes.
pub fn read_layer<R: Read>(
    reader: R,
    compression: Compression,
    retain: &dyn Fn(&str) -> bool,
) -> Result<Vec<LayerEntry>, ExtractError> {
    let reader: Box<dyn Read + '_> = match compression {
        Compression::Gzip => Box::new(GzDecoder::new(reader)),
        Compression::None => Box::new(reader),
    };
    let corrupt = |e: io::Error| ExtractError::CorruptLayer(e.to_string());
    let mut archive = tar::Archive::new(reader);
    let mut out = Vec::new();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let raw_path = entry.path().map_err(corrupt)?.to_string_lossy().into_owned();
        let (path, marker) = classify(&raw_path);
        let header_kind = entry.header().entry_type();
        let size = entry.header().size().unwrap_or(0);
        let link_target = entry
            .link_name()
            .map_err(corrupt)?
            .map(|p| p.to_string_lossy().into_owned());
        let kind = match marker {
            EntryKind::Whiteout | EntryKind::OpaqueWhiteout => marker,
            _ => match header_kind {
                tar::EntryType::Directory => EntryKind::Dir,
                tar::EntryType::Symlink => EntryKind::Symlink,
                tar::EntryType::Link => EntryKind::Hardlink,
                tar::EntryType::Regular | tar::EntryType::Continuous => EntryKind::File,
                // Device nodes, fifos and pax extension headers carry no content.
                _ => continue,
            },
        };
        let content = if kind == EntryKind::File && retain(&path) {
            let mut buf = Vec::with_capacity(size as usize);
            entry.read_to_end(&mut buf).map_err(corrupt)?;
            Some(Arc::from(buf))
        } else {
            None
        };
        out.push(LayerEntry {
            path,
            kind,
            content,
            size,
            link_target,
        });
    }
    Ok(out)
}

/// Applies one decoded layer on top of `tree`.
///
/// Whiteouts in a layer only hide content from lower layers, so they are
/// processed before the layer's own additions regardless of tar order.
pub fn apply_layer(tree: &mut FileTree, entries: &[LayerEntry]) {
    for e in entries {
        match e.kind {
            EntryKind::Whiteout => tree.remove_tree(&e.path),
            EntryKind::OpaqueWhiteout => tree.remove_descendants(&e.path),
            _ => {}
        }
    }
    for e in entries {
        let node = match e.kind {
            EntryKind::Whiteout | EntryKind::OpaqueWhiteout => continue,
            EntryKind::Dir => Node::Dir,
            EntryKind::File => Node::File {
                size: e.size,
                content: e.content.clone(),
            },
            EntryKind::Symlink => Node::Symlink(e.link_target.clone().unwrap_or_default()),
            EntryKind::Hardlink => {
                let target = normalize_path(e.link_target.as_deref().unwrap_or_default());
                match tree.get(&target) {
                    Some(n @ Node::File { .. }) => n.clone(),
                    _ => Node::File { size: 0, content: None },
                }
            }
        };
        tree.insert(e.path.clone(), node);
    }
}

/// Flattens the manifest's layers, base first, into a read-only view.
pub fn assemble_filesystem(manifest: &ImageManifest, blobs: &dyn BlobStore) -> Result<FileTree, ExtractError> {
    assemble_filesystem_with(manifest, blobs, &|_| true)
}

/// As [`assemble_filesystem`], keeping file bytes only where `retain` holds.
pub fn assemble_filesystem_with(
    manifest: &ImageManifest,
    blobs: &dyn BlobStore,
    retain: &dyn Fn(&str) -> bool,
) -> Result<FileTree, ExtractError> {
    let mut tree = FileTree::new();
    for (digest, media_type) in manifest.layers() {
        let mut reader = io::BufReader::new(blobs.open_blob(digest)?);
        let head = {
            use io::BufRead;
            reader
                .fill_buf()
                .map_err(|e| ExtractError::CorruptLayer(e.to_string()))?
                .to_vec()
        };
        let compression = compression_for(media_type, &head)?;
        let entries = read_layer(reader, compression, retain)?;
        apply_layer(&mut tree, &entries);
    }
    Ok(tree)
}
