use std::path::Path;

use sha2::{Digest as _, Sha256};
use vetri_core::manifest::Platform;
use vetri_core::ImageRef;
use vetri_registry::{Credentials, RegistryClient, RegistryConfig, RegistryError};
use vetri_testkit::{FixtureImage, LayerBuilder, RegistryBuilder};

fn two_layer_image() -> FixtureImage {
    FixtureImage::from_layers(&[
        LayerBuilder::new().file("etc/os-release", "ID=debian\n"),
        LayerBuilder::new().file("opt/app/readme.txt", "hello\n"),
    ])
}

fn client() -> RegistryClient {
    RegistryClient::new(RegistryConfig {
        backoff: std::time::Duration::from_millis(5),
        ..Default::default()
    })
}

fn image(host: &str, name: &str) -> ImageRef {
    ImageRef::parse(&format!("{host}/{name}")).unwrap()
}

/// Hash computed independently of the client's own verification.
fn file_sha256(path: &Path) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(std::fs::read(path).unwrap())))
}

#[test]
fn pulls_two_layer_image_with_verified_blobs() {
    let img = two_layer_image();
    let reg = RegistryBuilder::new().image("example/app", "1.0", &img).start();
    let dest = tempfile::tempdir().unwrap();
    let pulled = client()
        .pull_image(&image(reg.host(), "example/app:1.0"), dest.path())
        .unwrap();

    assert_eq!(pulled.manifest.layer_digests.len(), 2);
    assert_eq!(pulled.image.digest.as_ref().unwrap().as_str(), img.manifest_digest());
    for (digest, _) in img.blobs() {
        let path = dest
            .path()
            .join("blobs/sha256")
            .join(digest.trim_start_matches("sha256:"));
        assert_eq!(file_sha256(&path), digest);
    }
    assert_eq!(std::fs::read(dest.path().join("manifest.json")).unwrap(), img.manifest);
    assert_eq!(pulled.blobs_fetched, 3);
}

#[test]
fn second_pull_changes_nothing() {
    let img = two_layer_image();
    let reg = RegistryBuilder::new().image("example/app", "1.0", &img).start();
    let dest = tempfile::tempdir().unwrap();
    let c = client();
    let r = image(reg.host(), "example/app:1.0");
    c.pull_image(&r, dest.path()).unwrap();
    let snapshot = tree(dest.path());
    let gets = reg.blob_requests();

    let again = c.pull_image(&r, dest.path()).unwrap();
    assert_eq!(again.blobs_fetched, 0);
    assert_eq!(again.blobs_reused, 3);
    assert_eq!(reg.blob_requests(), gets);
    assert_eq!(tree(dest.path()), snapshot);
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>, std::time::SystemTime)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let meta = std::fs::metadata(&p).unwrap();
                out.push((
                    p.display().to_string(),
                    std::fs::read(&p).unwrap(),
                    meta.modified().unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn tampered_blob_is_rejected() {
    let img = two_layer_image();
    let bad = img.layer_digests()[1].clone();
    let reg = RegistryBuilder::new()
        .image("example/app", "1.0", &img)
        .tamper(&bad)
        .start();
    let dest = tempfile::tempdir().unwrap();
    let err = client()
        .pull_image(&image(reg.host(), "example/app:1.0"), dest.path())
        .unwrap_err();
    assert!(
        matches!(&err, RegistryError::DigestMismatch { expected, .. } if *expected == bad),
        "{err}"
    );
    let stored = dest.path().join("blobs/sha256").join(bad.trim_start_matches("sha256:"));
    assert!(!stored.exists());
    assert!(!dest.path().join("manifest.json").exists());
}

#[test]
fn manifest_list_resolves_to_amd64() {
    let amd = two_layer_image();
    let arm = FixtureImage::with_platform(&[LayerBuilder::new().file("arm", "x")], "linux", "arm64");
    let reg = RegistryBuilder::new()
        .index(
            "example/multi",
            "latest",
            &[(&arm, "linux", "arm64"), (&amd, "linux", "amd64")],
        )
        .start();
    let dest = tempfile::tempdir().unwrap();
    let pulled = client()
        .pull_image(&image(reg.host(), "example/multi"), dest.path())
        .unwrap();
    assert_eq!(pulled.image.digest.unwrap().as_str(), amd.manifest_digest());
}

#[test]
fn arm64_only_list_has_no_matching_platform() {
    let arm = FixtureImage::with_platform(&[LayerBuilder::new().file("arm", "x")], "linux", "arm64");
    let reg = RegistryBuilder::new()
        .index("example/arm", "latest", &[(&arm, "linux", "arm64")])
        .start();
    let dest = tempfile::tempdir().unwrap();
    let err = client()
        .pull_image(&image(reg.host(), "example/arm"), dest.path())
        .unwrap_err();
    assert!(matches!(err, RegistryError::NoMatchingPlatform(_)), "{err}");

    // The platform is configurable.
    let c = RegistryClient::new(RegistryConfig {
        platform: "linux/arm64".parse::<Platform>().unwrap(),
        ..Default::default()
    });
    c.pull_image(&image(reg.host(), "example/arm"), dest.path()).unwrap();
}

#[test]
fn unknown_image_is_not_found() {
    let reg = RegistryBuilder::new()
        .image("example/app", "1.0", &two_layer_image())
        .start();
    let dest = tempfile::tempdir().unwrap();
    let c = client();
    for name in ["example/app:2.0", "example/other:1.0"] {
        let err = c.pull_image(&image(reg.host(), name), dest.path()).unwrap_err();
        assert!(matches!(err, RegistryError::NotFound(_)), "{name}: {err}");
    }
}

#[test]
fn follows_bearer_challenge() {
    let reg = RegistryBuilder::new()
        .image("example/app", "1.0", &two_layer_image())
        .require_token()
        .start();
    let dest = tempfile::tempdir().unwrap();
    client()
        .pull_image(&image(reg.host(), "example/app:1.0"), dest.path())
        .unwrap();
    let token_calls = reg.requests().iter().filter(|r| r.ends_with("/token")).count();
    assert_eq!(token_calls, 1, "token is cached per scope: {:?}", reg.requests());
}

#[test]
fn credentials_are_sent_to_the_token_endpoint() {
    let img = two_layer_image();
    let reg = RegistryBuilder::new()
        .image("example/app", "1.0", &img)
        .credentials("alice", "s3cret")
        .start();
    let r = image(reg.host(), "example/app:1.0");
    let with = |user: &str, token: &str| {
        RegistryClient::new(RegistryConfig {
            credentials: Some(Credentials {
                user: user.into(),
                token: token.into(),
            }),
            ..Default::default()
        })
    };
    let dest = tempfile::tempdir().unwrap();
    with("alice", "s3cret").pull_image(&r, dest.path()).unwrap();

    let dest = tempfile::tempdir().unwrap();
    let err = with("alice", "wrong").pull_image(&r, dest.path()).unwrap_err();
    assert!(matches!(err, RegistryError::Auth(_)), "{err}");
    let err = client().pull_image(&r, dest.path()).unwrap_err();
    assert!(matches!(err, RegistryError::Auth(_)), "{err}");
}

#[test]
fn transient_failures_are_retried() {
    let reg = RegistryBuilder::new()
        .image("example/app", "1.0", &two_layer_image())
        .fail_next(2)
        .start();
    let dest = tempfile::tempdir().unwrap();
    client()
        .pull_image(&image(reg.host(), "example/app:1.0"), dest.path())
        .unwrap();

    reg.fail_next(3);
    let dest = tempfile::tempdir().unwrap();
    let err = client()
        .pull_image(&image(reg.host(), "example/app:1.0"), dest.path())
        .unwrap_err();
    assert!(
        matches!(err, RegistryError::Network(_) | RegistryError::Protocol(_)),
        "{err}"
    );
}

#[test]
fn many_layers_fetch_in_parallel() {
    let layers: Vec<LayerBuilder> = (0..12)
        .map(|i| LayerBuilder::new().file(&format!("f{i}"), vec![i as u8; 1000]))
        .collect();
    let img = FixtureImage::from_layers(&layers);
    let reg = RegistryBuilder::new().image("example/wide", "1", &img).start();
    let dest = tempfile::tempdir().unwrap();
    let c = RegistryClient::new(RegistryConfig {
        parallelism: 4,
        ..Default::default()
    });
    let pulled = c.pull_image(&image(reg.host(), "example/wide:1"), dest.path()).unwrap();
    assert_eq!(pulled.manifest.layer_digests.len(), 12);
    for (digest, _) in img.blobs() {
        let path = dest
            .path()
            .join("blobs/sha256")
            .join(digest.trim_start_matches("sha256:"));
        assert_eq!(file_sha256(&path), digest);
    }
}

#[test]
fn pulled_layout_loads_for_extraction() {
    let img = vetri_testkit::standard_image();
    let reg = RegistryBuilder::new().image("example/std", "1.0", &img).start();
    let dest = tempfile::tempdir().unwrap();
    client()
        .pull_image(&image(reg.host(), "example/std:1.0"), dest.path())
        .unwrap();
    let loaded = vetri_core::extract::load_image_dir(dest.path(), &Platform::default()).unwrap();
    assert_eq!(loaded.manifest.layer_digests.len(), 3);
}
