//! Byte-level builders for layer tarballs and Java archives.

use std::io::{Cursor, Write};

use flate2::write::GzEncoder;
use flate2::Compression;
use sha2::{Digest, Sha256};

pub fn sha256_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

enum Item {
    File(String, Vec<u8>),
    Dir(String),
    Symlink(String, String),
    Hardlink(String, String),
}

/// Tar layer builder. Entries are written in insertion order with fixed
/// metadata so output bytes are reproducible.
#[derive(Default)]
pub struct LayerBuilder {
    items: Vec<Item>,
}

impl LayerBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(mut self, path: &str, content: impl Into<Vec<u8>>) -> Self {
        self.items
            .push(Item::File(path.trim_start_matches('/').to_string(), content.into()));
        self
    }

    pub fn dir(mut self, path: &str) -> Self {
        self.items.push(Item::Dir(path.trim_start_matches('/').to_string()));
        self
    }

    pub fn symlink(mut self, path: &str, target: &str) -> Self {
        self.items.push(Item::Symlink(
            path.trim_start_matches('/').to_string(),
            target.to_string(),
        ));
        self
    }

    pub fn hardlink(mut self, path: &str, target: &str) -> Self {
        self.items.push(Item::Hardlink(
            path.trim_start_matches('/').to_string(),
            target.trim_start_matches('/').to_string(),
        ));
        self
    }

    /// `.wh.<name>` marker deleting `path` from lower layers.
    pub fn whiteout(self, path: &str) -> Self {
        let path = path.trim_start_matches('/');
        let (dir, base) = path.rsplit_once('/').map_or(("", path), |(d, b)| (d, b));
        let marker = if dir.is_empty() {
            format!(".wh.{base}")
        } else {
            format!("{dir}/.wh.{base}")
        };
        self.file(&marker, Vec::new())
    }

    /// `.wh..wh..opq` marker hiding everything below `dir` from lower layers.
    pub fn opaque(self, dir: &str) -> Self {
        let dir = dir.trim_start_matches('/').trim_end_matches('/');
        self.file(&format!("{dir}/.wh..wh..opq"), Vec::new())
    }

    pub fn tar(&self) -> Vec<u8> {
        let mut b = tar::Builder::new(Vec::new());
        for item in &self.items {
            let mut h = tar::Header::new_gnu();
            h.set_mtime(0);
            h.set_uid(0);
            h.set_gid(0);
            match item {
                Item::File(p, c) => {
                    h.set_entry_type(tar::EntryType::Regular);
                    h.set_mode(0o644);
                    h.set_size(c.len() as u64);
                    b.append_data(&mut h, p, c.as_slice()).expect("tar file");
                }
                Item::Dir(p) => {
                    h.set_entry_type(tar::EntryType::Directory);
                    h.set_mode(0o755);
                    h.set_size(0);
                    b.append_data(&mut h, format!("{p}/"), std::io::empty())
                        .expect("tar dir");
                }
                Item::Symlink(p, t) => {
                    h.set_entry_type(tar::EntryType::Symlink);
                    h.set_mode(0o777);
                    h.set_size(0);
                    b.append_link(&mut h, p, t).expect("tar symlink");
                }
                Item::Hardlink(p, t) => {
                    h.set_entry_type(tar::EntryType::Link);
                    h.set_mode(0o644);
                    h.set_size(0);
                    b.append_link(&mut h, p, t).expect("tar hardlink");
                }
            }
        }
        b.into_inner().expect("tar finish")
    }

    pub fn tar_gz(&self) -> Vec<u8> {
        gzip(&self.tar())
    }
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("gzip");
    enc.finish().expect("gzip finish")
}

/// Zip archive from `(path, bytes)` entries, stored with a fixed timestamp.
pub fn zip_bytes(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    for (name, data) in entries {
        w.start_file(*name, opts).expect("zip entry");
        w.write_all(data).expect("zip write");
    }
    w.finish().expect("zip finish").into_inner()
}

/// A jar carrying Maven build metadata for `group:artifact:version`.
pub fn jar(group: &str, artifact: &str, version: &str) -> Vec<u8> {
    let props = format!("#Generated by Maven\nversion={version}\ngroupId={group}\nartifactId={artifact}\n");
    let path = format!("META-INF/maven/{group}/{artifact}/pom.properties");
    zip_bytes(&[
        ("META-INF/MANIFEST.MF", b"Manifest-Version: 1.0\r\n\r\n"),
        (&path, props.as_bytes()),
    ])
}

/// A jar with a manifest but no Maven metadata.
pub fn bare_jar() -> Vec<u8> {
    zip_bytes(&[("META-INF/MANIFEST.MF", b"Manifest-Version: 1.0\r\n\r\n")])
}

/// A war bundling the given jars under `WEB-INF/lib/`.
pub fn war(jars: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let names: Vec<String> = jars.iter().map(|(n, _)| format!("WEB-INF/lib/{n}")).collect();
    let entries: Vec<(&str, &[u8])> = names
        .iter()
        .zip(jars)
        .map(|(n, (_, b))| (n.as_str(), b.as_slice()))
        .collect();
    zip_bytes(&entries)
}
