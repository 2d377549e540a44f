use std::collections::BTreeMap;

use proptest::prelude::*;
use vetri_core::extract::{
    assemble_filesystem, build_inventory, CoordinatePattern, ExtractWarning, Extraction, FileTree, MemoryBlobStore,
};
use vetri_core::manifest::{ImageManifest, ManifestDocument};
use vetri_core::{ImageRef, PackageClass};
use vetri_testkit::{overlay, FixtureImage, LayerBuilder};

fn load(image: &FixtureImage) -> (ImageManifest, MemoryBlobStore) {
    let mut store = MemoryBlobStore::new();
    for (_, bytes) in image.blobs() {
        store.insert(bytes);
    }
    let manifest = match ManifestDocument::parse(&image.manifest, None).unwrap() {
        ManifestDocument::Image(m) => m,
        other => panic!("expected image manifest, got {other:?}"),
    };
    (manifest, store)
}

fn flatten(image: &FixtureImage) -> FileTree {
    let (m, store) = load(image);
    assemble_filesystem(&m, &store).unwrap()
}

fn inventory_of(image: &FixtureImage) -> Extraction {
    let tree = flatten(image);
    build_inventory(
        ImageRef::parse("example/app:1.0").unwrap(),
        &tree,
        &[CoordinatePattern::new(vetri_testkit::APP_SELECTOR)],
    )
    .unwrap()
}

#[test]
fn standard_image_yields_listed_records() {
    let ex = inventory_of(&vetri_testkit::standard_image());
    let mut got: Vec<String> = ex
        .inventory
        .packages
        .iter()
        .map(|p| {
            format!(
                "{} {} {} {} {}",
                p.ecosystem.as_str(),
                p.name,
                p.version,
                p.class.as_str(),
                p.source_path
            )
        })
        .collect();
    let mut want: Vec<String> = vetri_testkit::STANDARD_LISTING
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    got.sort();
    want.sort();
    assert_eq!(want.len(), 10);
    assert_eq!(got, want);
    assert!(ex.warnings.is_empty(), "{:?}", ex.warnings);

    let count = |c| ex.inventory.packages.iter().filter(|p| p.class == c).count();
    assert_eq!(
        (
            count(PackageClass::Os),
            count(PackageClass::Library),
            count(PackageClass::Application)
        ),
        (8, 1, 1)
    );
}

#[test]
fn standard_image_file_listing() {
    let tree = flatten(&vetri_testkit::standard_image());
    let files: Vec<&str> = tree.files().map(|(p, _)| p).collect();
    assert_eq!(files, vetri_testkit::STANDARD_FILES);
    // The symlink survives and resolves to the jar next to it.
    assert_eq!(
        tree.resolve("/opt/app/lib/mysql.jar").as_deref(),
        Some("/opt/app/lib/mysql-connector-java-5.1.38.jar")
    );
}

#[test]
fn inventory_serialization_is_stable() {
    let a = inventory_of(&vetri_testkit::standard_image()).inventory;
    let mut b = inventory_of(&vetri_testkit::standard_image()).inventory;
    b.extracted_at = a.extracted_at;
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn scratch_image_is_empty() {
    let img = FixtureImage::from_layers(&[LayerBuilder::new().file("hello", "hi")]);
    let ex = inventory_of(&img);
    assert!(ex.inventory.packages.is_empty());
    assert!(ex.warnings.is_empty());
}

#[test]
fn rpm_only_image_warns() {
    let img = FixtureImage::from_layers(&[LayerBuilder::new().file("var/lib/rpm/Packages", vec![0u8; 16])]);
    let ex = inventory_of(&img);
    assert!(ex.inventory.packages.is_empty());
    assert!(matches!(ex.warnings[..], [ExtractWarning::UnsupportedEcosystem { .. }]));
}

#[test]
fn truncated_archive_is_skipped_with_warning() {
    let mut jar = vetri_testkit::jar("org.x", "y", "1.0");
    jar.truncate(jar.len() / 2);
    let img = FixtureImage::from_layers(&[LayerBuilder::new()
        .file("app/broken.jar", jar)
        .file("app/ok.jar", vetri_testkit::jar("org.x", "z", "2.0"))]);
    let ex = inventory_of(&img);
    assert_eq!(ex.inventory.packages.len(), 1);
    assert!(matches!(ex.warnings[..], [ExtractWarning::CorruptArchive { .. }]));
}

#[test]
fn nested_war_jars_are_found() {
    let war = vetri_testkit::war(&[(
        "guava-19.0.jar",
        vetri_testkit::jar("com.google.guava", "guava", "19.0"),
    )]);
    let img = FixtureImage::from_layers(&[LayerBuilder::new().file("srv/app.war", war)]);
    let ex = inventory_of(&img);
    let p = &ex.inventory.packages;
    assert_eq!(p.len(), 2, "{p:?}");
    let guava = p.iter().find(|r| r.name == "com.google.guava:guava").unwrap();
    assert_eq!(guava.source_path, "/srv/app.war!/WEB-INF/lib/guava-19.0.jar");
    // The outer war has no metadata of its own.
    assert!(p.iter().any(|r| r.name == "app" && r.version == "unknown"));
}

#[test]
fn adding_an_archive_never_shrinks_the_inventory() {
    let mut layers = vetri_testkit::standard_layers();
    let before = inventory_of(&FixtureImage::from_layers(&layers))
        .inventory
        .packages
        .len();
    layers.push(LayerBuilder::new().file("opt/extra/x.jar", vetri_testkit::jar("org.extra", "x", "0.1")));
    let after = inventory_of(&FixtureImage::from_layers(&layers))
        .inventory
        .packages
        .len();
    assert_eq!(after, before + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // Random layer stacks checked against a plain map model of the overlay rules.
    #[test]
    fn overlay_matches_model(stack in overlay::stack()) {
        let tree = flatten(&overlay::build(&stack));
        let got: BTreeMap<String, u8> = tree
            .files()
            .filter(|(p, _)| !p.rsplit('/').next().unwrap().starts_with(".wh."))
            .map(|(p, c)| (p.trim_start_matches('/').to_string(), c[0]))
            .collect();
        prop_assert_eq!(&got, &overlay::model(&stack));

        // Whited-out paths stay gone unless some layer at or above re-adds them.
        for abs in overlay::expected_absent(&stack) {
            prop_assert!(!tree.contains(&abs), "{} survived its whiteout", abs);
        }
        prop_assert!(tree.paths().all(|p| !p.rsplit('/').next().unwrap().starts_with(".wh.")));
    }
}
