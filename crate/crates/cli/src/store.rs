//! File-backed report store.
//!
//! ```text
//! <root>/
//!   catalog.json
//!   images/<registry>/<repository>:<tag>/        (or @sha256:<hex>)
//!     image.json  manifest.json  blobs/  inventory.json  scan.json
//!     reports/<tool>.json  findings/<project>.json
//!   evaluations/<timestamp>-<config hash>/
//!     evaluation.json  dhr.csv  landscape.csv  coverage.json
//!   landscape/landscape.csv  landscape/coverage.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vetri_core::adapters::{AppFinding, ToolReport};
use vetri_core::extract::Inventory;
use vetri_core::metrics::FeedRef;
use vetri_core::ImageRef;

use crate::error::{CliError, Result, EXIT_LOCKED};

const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Held for the duration of a mutating command.
#[derive(Debug)]
pub struct StoreLock {
    file: File,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

/// What `scan` used, kept next to the builtin report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub tool_id: String,
    pub feeds: Vec<FeedRef>,
    pub skipped_unknown_version: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparator_errors: Vec<String>,
}

fn is_safe_component(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\', '\0'])
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Writes `contents` unless the file already holds exactly them, going
/// through a temporary file so readers never see a half-written file.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if fs::read(path).is_ok_and(|old| old == contents) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Takes the advisory store lock or fails straight away.
    pub fn lock(&self) -> Result<StoreLock> {
        fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        let path = self.root.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock { file }),
            Err(_) => Err(CliError {
                code: EXIT_LOCKED,
                message: format!("store {} is in use by another command", self.root.display()),
            }),
        }
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.root.join("catalog.json")
    }

    pub fn images_root(&self) -> PathBuf {
        self.root.join("images")
    }

    /// `images/<registry>/<repository>:<tag>`, or `@<digest>` when the
    /// reference has a digest and the default tag.
    pub fn image_dir(&self, image: &ImageRef) -> Result<PathBuf> {
        let mut dir = self.images_root();
        if !is_safe_component(&image.registry) {
            return Err(CliError::usage(format!("unusable registry name {:?}", image.registry)));
        }
        dir.push(&image.registry);
        let parts: Vec<&str> = image.repository.split('/').collect();
        if !parts.iter().all(|p| is_safe_component(p)) {
            return Err(CliError::usage(format!(
                "unusable repository name {:?}",
                image.repository
            )));
        }
        let (last, parents) = parts.split_last().expect("split yields one part");
        for p in parents {
            dir.push(p);
        }
        let leaf = match &image.digest {
            Some(d) if image.tag == "latest" => format!("{last}@{d}"),
            _ => format!("{last}:{}", image.tag),
        };
        if !is_safe_component(&image.tag) {
            return Err(CliError::usage(format!("unusable tag {:?}", image.tag)));
        }
        dir.push(leaf);
        Ok(dir)
    }

    /// Every image directory, identified by its `image.json`, in path order.
    pub fn image_dirs(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let mut stack = vec![self.images_root()];
        while let Some(dir) = stack.pop() {
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for entry in rd {
                let entry = entry.map_err(|e| CliError::io(&dir, e))?;
                let path = entry.path();
                if !path.is_dir() {
                    continue;
                }
                if path.join("image.json").is_file() {
                    out.push(path);
                } else if !path.ends_with("blobs") {
                    stack.push(path);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// The stored reference (with digest once pulled), falling back to the
    /// given one for images never seen before.
    pub fn resolve_image(&self, image: &ImageRef) -> Result<(ImageRef, PathBuf)> {
        let dir = self.image_dir(image)?;
        let path = dir.join("image.json");
        if path.is_file() {
            Ok((read_json(&path)?, dir))
        } else {
            Ok((image.clone(), dir))
        }
    }

    pub fn write_image_ref(&self, dir: &Path, image: &ImageRef) -> Result<()> {
        write_file(&dir.join("image.json"), to_json_pretty(image).as_bytes())
    }

    pub fn read_image_ref(&self, dir: &Path) -> Result<ImageRef> {
        read_json(&dir.join("image.json"))
    }

    pub fn inventory_path(dir: &Path) -> PathBuf {
        dir.join("inventory.json")
    }

    pub fn read_inventory(&self, dir: &Path) -> Result<Inventory> {
        let path = Self::inventory_path(dir);
        if !path.is_file() {
            return Err(CliError::usage(format!(
                "{} has no inventory; run extract first",
                dir.display()
            )));
        }
        read_json(&path)
    }

    pub fn report_path(dir: &Path, tool_id: &str) -> Result<PathBuf> {
        if !is_safe_component(tool_id) || tool_id.ends_with(".tmp") {
            return Err(CliError::usage(format!("unusable tool id {tool_id:?}")));
        }
        Ok(dir.join("reports").join(format!("{tool_id}.json")))
    }

    pub fn findings_path(dir: &Path, project_id: &str) -> Result<PathBuf> {
        if !is_safe_component(project_id) {
            return Err(CliError::usage(format!("unusable project id {project_id:?}")));
        }
        Ok(dir.join("findings").join(format!("{project_id}.json")))
    }

    pub fn read_reports(&self, dir: &Path) -> Result<Vec<ToolReport>> {
        json_files(&dir.join("reports"))?.iter().map(|p| read_json(p)).collect()
    }

    pub fn read_findings(&self, dir: &Path) -> Result<Vec<AppFinding>> {
        let mut out = Vec::new();
        for p in json_files(&dir.join("findings"))? {
            out.extend(read_json::<Vec<AppFinding>>(&p)?);
        }
        Ok(out)
    }

    pub fn read_scan_record(&self, dir: &Path) -> Result<Option<ScanRecord>> {
        let path = dir.join("scan.json");
        if path.is_file() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn evaluations_root(&self) -> PathBuf {
        self.root.join("evaluations")
    }

    /// Most recent evaluation directory by name.
    pub fn latest_evaluation(&self) -> Result<Option<PathBuf>> {
        let root = self.evaluations_root();
        let Ok(rd) = fs::read_dir(&root) else { return Ok(None) };
        let mut dirs = Vec::new();
        for e in rd {
            let p = e.map_err(|e| CliError::io(&root, e))?.path();
            if p.join("evaluation.json").is_file() {
                dirs.push(p);
            }
        }
        dirs.sort();
        Ok(dirs.pop())
    }
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let Ok(rd) = fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for e in rd {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_dirs_follow_reference() {
        let s = Store::new("/s");
        let r = ImageRef::parse("127.0.0.1:5000/acme/shop:1.2").unwrap();
        assert_eq!(
            s.image_dir(&r).unwrap(),
            Path::new("/s/images/127.0.0.1:5000/acme/shop:1.2")
        );
        let r = ImageRef::parse("nginx").unwrap();
        assert_eq!(
            s.image_dir(&r).unwrap(),
            Path::new("/s/images/docker.io/library/nginx:latest")
        );
        let d = format!("sha256:{}", "a".repeat(64));
        let r = ImageRef::parse(&format!("acme/shop@{d}")).unwrap();
        assert_eq!(
            s.image_dir(&r).unwrap(),
            Path::new(&format!("/s/images/docker.io/acme/shop@{d}"))
        );
    }

    #[test]
    fn rejects_traversal() {
        let s = Store::new("/s");
        let r = ImageRef::new("docker.io", "acme/../../etc", None, None).unwrap();
        assert!(s.image_dir(&r).is_err());
        assert!(Store::report_path(Path::new("/x"), "../t").is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::new(dir.path());
        let held = s.lock().unwrap();
        assert_eq!(s.lock().unwrap_err().code, EXIT_LOCKED);
        drop(held);
        s.lock().unwrap();
    }
}
