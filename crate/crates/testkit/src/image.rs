//! Hand-built images.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::json;

use crate::build::{bare_jar, jar, sha256_digest, war, LayerBuilder};

pub const DOCKER_MANIFEST_V2: &str = "application/vnd.docker.distribution.manifest.v2+json";
pub const DOCKER_MANIFEST_LIST: &str = "application/vnd.docker.distribution.manifest.list.v2+json";
pub const DOCKER_CONFIG: &str = "application/vnd.docker.container.image.v1+json";
pub const DOCKER_LAYER_GZIP: &str = "application/vnd.docker.image.rootfs.diff.tar.gzip";

/// An image as a registry would serve it: config, gzip layers, manifest.
#[derive(Debug, Clone)]
pub struct FixtureImage {
    pub config: Vec<u8>,
    pub layers: Vec<Vec<u8>>,
    pub manifest: Vec<u8>,
}

impl FixtureImage {
    pub fn from_layers(layers: &[LayerBuilder]) -> Self {
        Self::with_platform(layers, "linux", "amd64")
    }

    pub fn with_platform(layers: &[LayerBuilder], os: &str, arch: &str) -> Self {
        let tars: Vec<Vec<u8>> = layers.iter().map(LayerBuilder::tar).collect();
        let gz: Vec<Vec<u8>> = tars.iter().map(|t| crate::build::gzip(t)).collect();
        let diff_ids: Vec<String> = tars.iter().map(|t| sha256_digest(t)).collect();
        let config = serde_json::to_vec(&json!({
            "architecture": arch,
            "os": os,
            "config": {"Env": ["PATH=/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin"]},
            "rootfs": {"type": "layers", "diff_ids": diff_ids},
        }))
        .expect("config json");
        let manifest = serde_json::to_vec_pretty(&json!({
            "schemaVersion": 2,
            "mediaType": DOCKER_MANIFEST_V2,
            "config": {"mediaType": DOCKER_CONFIG, "size": config.len(), "digest": sha256_digest(&config)},
            "layers": gz.iter().map(|l| json!({
                "mediaType": DOCKER_LAYER_GZIP, "size": l.len(), "digest": sha256_digest(l)
            })).collect::<Vec<_>>(),
        }))
        .expect("manifest json");
        FixtureImage {
            config,
            layers: gz,
            manifest,
        }
    }

    pub fn manifest_digest(&self) -> String {
        sha256_digest(&self.manifest)
    }

    pub fn config_digest(&self) -> String {
        sha256_digest(&self.config)
    }

    pub fn layer_digests(&self) -> Vec<String> {
        self.layers.iter().map(|l| sha256_digest(l)).collect()
    }

    /// Config first, then layers.
    pub fn blobs(&self) -> Vec<(String, Vec<u8>)> {
        std::iter::once(&self.config)
            .chain(&self.layers)
            .map(|b| (sha256_digest(b), b.clone()))
            .collect()
    }

    /// Writes the pulled-image layout: `manifest.json` and `blobs/sha256/<hex>`.
    pub fn write_layout(&self, dest: &Path) -> io::Result<()> {
        let blob_dir = dest.join("blobs").join("sha256");
        fs::create_dir_all(&blob_dir)?;
        fs::write(dest.join("manifest.json"), &self.manifest)?;
        for (digest, bytes) in self.blobs() {
            fs::write(blob_dir.join(&digest["sha256:".len()..]), bytes)?;
        }
        Ok(())
    }
}

/// A manifest list whose entries are `(manifest digest, size, os, arch)`.
pub fn manifest_list(entries: &[(String, usize, &str, &str)]) -> Vec<u8> {
    serde_json::to_vec_pretty(&json!({
        "schemaVersion": 2,
        "mediaType": DOCKER_MANIFEST_LIST,
        "manifests": entries.iter().map(|(d, size, os, arch)| json!({
            "mediaType": DOCKER_MANIFEST_V2, "size": size, "digest": d,
            "platform": {"os": os, "architecture": arch}
        })).collect::<Vec<_>>(),
    }))
    .expect("index json")
}

pub const DPKG_STATUS: &str = "\
Package: base-files
Status: install ok installed
Priority: required
Section: admin
Installed-Size: 333
Maintainer: Santiago Vila <sanvila@debian.org>
Architecture: amd64
Version: 9.9+deb9u9
Description: Debian base system miscellaneous files
 This package contains the basic filesystem hierarchy of a Debian system.

Package: libc6
Status: install ok installed
Priority: optional
Section: libs
Architecture: amd64
Multi-Arch: same
Source: glibc
Version: 2.24-11+deb9u4
Description: GNU C Library: Shared libraries

Package: libssl1.0.2
Status: deinstall ok config-files
Priority: optional
Section: libs
Architecture: amd64
Source: openssl1.0
Version: 1.0.2u-1~deb9u1
Description: Secure Sockets Layer toolkit - shared libraries

Package: curl
Status: install ok installed
Priority: optional
Section: web
Architecture: amd64
Version: 7.52.1-5+deb9u9
Depends: libc6 (>= 2.17), libcurl3 (= 7.52.1-5+deb9u9)
Description: command line tool for transferring data with URL syntax

Package: libcurl3
Status: install ok installed
Priority: optional
Section: libs
Architecture: amd64
Source: curl
Version: 7.52.1-5+deb9u9
Description: easy-to-use client-side URL transfer library (OpenSSL flavour)

Package: openssl
Status: install ok installed
Priority: optional
Section: utils
Architecture: amd64
Version: 1.1.0l-1~deb9u1
Description: Secure Sockets Layer toolkit - cryptographic utility
";

pub const APK_INSTALLED: &str = "\
C:Q1lSrpqkE5mxo+Wp6hBQvYrrxr9Ik=
P:musl
V:1.1.24-r2
A:x86_64
S:377437
T:the musl c library (libc) implementation
o:musl

C:Q1XKtV5jhYlT5oYk2HgGM0eRDGHRk=
P:busybox
V:1.31.1-r9
A:x86_64
T:Size optimized toolbox of many common UNIX utilities

C:Q1Z6xHYJEmyNdGv3F4Dn7FRyGNBhA=
P:zlib
V:1.2.11-r3
A:x86_64
T:A compression/decompression Library
";

/// Selector that marks the fixture's own application archive.
pub const APP_SELECTOR: &str = "com.example:*";

/// The reference three-layer image.
///
/// * layer 1: dpkg status (5 installed, 1 deinstalled), a library jar that
///   layer 3 deletes, some unrelated files
/// * layer 2: apk database (3 records), the mysql connector jar, a war
///   without nested metadata-bearing jars
/// * layer 3: the application jar and a whiteout for the layer-1 jar
pub fn standard_layers() -> Vec<LayerBuilder> {
    vec![
        LayerBuilder::new()
            .dir("etc")
            .file(
                "etc/os-release",
                "PRETTY_NAME=\"Debian GNU/Linux 9 (stretch)\"\nID=debian\n",
            )
            .dir("var/lib/dpkg")
            .file("var/lib/dpkg/status", DPKG_STATUS)
            .dir("opt/app/lib")
            .file(
                "opt/app/lib/commons-collections-3.2.1.jar",
                jar("commons-collections", "commons-collections", "3.2.1"),
            )
            .file("tmp/build.log", "ok\n"),
        LayerBuilder::new()
            .dir("lib/apk/db")
            .file("lib/apk/db/installed", APK_INSTALLED)
            .file(
                "opt/app/lib/mysql-connector-java-5.1.38.jar",
                jar("mysql", "mysql-connector-java", "5.1.38"),
            )
            .symlink("opt/app/lib/mysql.jar", "mysql-connector-java-5.1.38.jar")
            .file("etc/motd", "welcome\n"),
        LayerBuilder::new()
            .file("opt/app/myapp.jar", jar("com.example", "myapp", "1.0.0"))
            .whiteout("opt/app/lib/commons-collections-3.2.1.jar")
            .whiteout("tmp/build.log"),
    ]
}

pub fn standard_image() -> FixtureImage {
    FixtureImage::from_layers(&standard_layers())
}

/// The records the standard image must yield, as
/// `ecosystem name version class source_path`, one per line.
pub const STANDARD_LISTING: &str = include_str!("../data/standard_image_listing.txt");

/// Flattened file listing of the standard image (regular files only).
pub const STANDARD_FILES: &[&str] = &[
    "/etc/motd",
    "/etc/os-release",
    "/lib/apk/db/installed",
    "/opt/app/lib/mysql-connector-java-5.1.38.jar",
    "/opt/app/myapp.jar",
    "/var/lib/dpkg/status",
];

/// A small war without Maven metadata in its nested jar, for warning paths.
pub fn metadata_free_war() -> Vec<u8> {
    war(&[("helper.jar", bare_jar())])
}
