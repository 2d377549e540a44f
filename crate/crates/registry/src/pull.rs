use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest as _, Sha256};
use vetri_core::manifest::{select_platform, ImageManifest, ManifestDocument, MANIFEST_ACCEPT};
use vetri_core::{Digest, ImageRef};

use crate::http::read_body;
use crate::{io_err, pull_scope, RegistryClient, RegistryError};

const MANIFEST_LIMIT: u64 = 4 << 20;
const LOCK_FILE: &str = ".pull.lock";

/// Result of a pull.
#[derive(Debug, Clone)]
pub struct Pulled {
    /// The requested image with the resolved manifest digest filled in.
    pub image: ImageRef,
    pub manifest: ImageManifest,
    pub blobs_fetched: usize,
    pub blobs_reused: usize,
}

fn blob_path(dest: &Path, digest: &Digest) -> PathBuf {
    dest.join("blobs").join(digest.algorithm()).join(digest.hex())
}

fn hash_file(path: &Path) -> std::io::Result<Digest> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(Digest::from_sha256(hasher))
}

/// Writes `bytes` unless the file already holds exactly them.
fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn check_digest(expected: &Digest, actual: Digest) -> Result<(), RegistryError> {
    if *expected != actual {
        return Err(RegistryError::DigestMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

impl RegistryClient {
    /// Fetches a manifest by tag or digest. Returns raw bytes and content type.
    fn fetch_manifest(&self, image: &ImageRef, reference: &str) -> Result<(Vec<u8>, Option<String>), RegistryError> {
        let url = format!(
            "{}/v2/{}/manifests/{reference}",
            self.registry_base(image),
            image.repository
        );
        let mut resp = self.http.get_authed(&url, Some(MANIFEST_ACCEPT), &pull_scope(image))?;
        match resp.status().as_u16() {
            200 => {}
            404 => return Err(RegistryError::NotFound(format!("{}:{reference}", image.repository))),
            s => return Err(RegistryError::Protocol(format!("{url}: HTTP {s}"))),
        }
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let bytes = read_body(&mut resp, MANIFEST_LIMIT)?;
        if let Ok(d) = Digest::parse(reference) {
            check_digest(&d, Digest::of(&bytes))?;
        }
        Ok((bytes, content_type))
    }

    /// Resolves the image to a single-platform manifest.
    pub fn resolve_manifest(&self, image: &ImageRef) -> Result<(ImageManifest, Vec<u8>), RegistryError> {
        let (bytes, ct) = self.fetch_manifest(image, image.reference())?;
        let parse = |b: &[u8], ct: Option<&str>| {
            ManifestDocument::parse(b, ct).map_err(|e| RegistryError::Protocol(format!("manifest: {e}")))
        };
        match parse(&bytes, ct.as_deref())? {
            ManifestDocument::Image(m) => Ok((m, bytes)),
            ManifestDocument::Index(entries) => {
                let entry = select_platform(&entries, &self.config.platform)
                    .ok_or_else(|| RegistryError::NoMatchingPlatform(self.config.platform.to_string()))?;
                let (bytes, ct) = self.fetch_manifest(image, entry.digest.as_str())?;
                match parse(&bytes, ct.as_deref())? {
                    ManifestDocument::Image(m) => Ok((m, bytes)),
                    ManifestDocument::Index(_) => Err(RegistryError::Protocol("nested manifest list".into())),
                }
            }
        }
    }

    /// Streams one blob to disk, hashing as it goes. The file only appears
    /// under its final name once verified.
    fn fetch_blob(&self, image: &ImageRef, digest: &Digest, dest: &Path) -> Result<(), RegistryError> {
        let url = format!("{}/v2/{}/blobs/{digest}", self.registry_base(image), image.repository);
        let mut resp = self.http.get_authed(&url, None, &pull_scope(image))?;
        match resp.status().as_u16() {
            200 => {}
            404 => return Err(RegistryError::NotFound(digest.to_string())),
            s => return Err(RegistryError::Protocol(format!("{url}: HTTP {s}"))),
        }
        let final_path = blob_path(dest, digest);
        let tmp = final_path.with_extension("partial");
        let mut out = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut hasher = Sha256::new();
        let mut reader = resp.body_mut().with_config().limit(u64::MAX).reader();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = reader
                .read(&mut buf)
                .map_err(|e| RegistryError::Network(format!("{url}: {e}")))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            out.write_all(&buf[..n]).map_err(io_err(&tmp))?;
        }
        drop(out);
        if let Err(e) = check_digest(digest, Digest::from_sha256(hasher)) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &final_path).map_err(io_err(&final_path))
    }

    /// Pulls `image` into `dest`. Blobs already present with the right hash
    /// are not fetched again and unchanged files are not rewritten.
    pub fn pull_image(&self, image: &ImageRef, dest: &Path) -> Result<Pulled, RegistryError> {
        fs::create_dir_all(dest).map_err(io_err(dest))?;
        let lock_path = dest.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        if lock.try_lock().is_err() {
            return Err(RegistryError::Locked(dest.display().to_string()));
        }

        let (manifest, manifest_bytes) = self.resolve_manifest(image)?;
        let digests = manifest.blob_digests();
        for d in &digests {
            let dir = blob_path(dest, d);
            let dir = dir.parent().expect("blob path has a parent");
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }

        let mut missing = Vec::new();
        let mut reused = 0;
        for d in digests {
            let path = blob_path(dest, d);
            if path.is_file() && hash_file(&path).is_ok_and(|h| h == *d) {
                reused += 1;
            } else if !missing.contains(&d) {
                missing.push(d);
            }
        }
        let fetched = missing.len();

        let queue = Mutex::new(missing.into_iter());
        let failure: Mutex<Option<RegistryError>> = Mutex::new(None);
        let workers = self.config.parallelism.clamp(1, fetched.max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                    let Some(d) = queue.lock().unwrap().next() else { return };
                    log::debug!("fetching blob {d}");
                    if let Err(e) = self.fetch_blob(image, d, dest) {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }

        write_if_changed(&dest.join("manifest.json"), &manifest_bytes)?;
        let _ = lock.unlock();
        Ok(Pulled {
            image: image.with_digest(Digest::of(&manifest_bytes)),
            manifest,
            blobs_fetched: fetched,
            blobs_reused: reused,
        })
    }
}
