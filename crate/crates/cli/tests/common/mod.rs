#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vetri_testkit::{data_path, FixtureRegistry, RegistryBuilder};

pub const REPO: &str = "example/app";

pub struct Run {
    pub code: i32,
    pub stdout: String,
}

pub fn vetri(store: &Path, args: &[&str]) -> Run {
    let mut argv = vec!["vetri".to_string(), "--store".to_string(), store.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let mut out = Vec::new();
    let code = vetri_cli::run_with(argv, &mut out);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
    }
}

#[track_caller]
pub fn ok(store: &Path, args: &[&str]) -> String {
    let r = vetri(store, args);
    assert_eq!(r.code, 0, "vetri {args:?} failed: {}", r.stdout);
    r.stdout
}

pub fn registry() -> FixtureRegistry {
    RegistryBuilder::new()
        .image(REPO, "1.0", &vetri_testkit::standard_image())
        .require_token()
        .start()
}

pub fn image_ref(reg: &FixtureRegistry) -> String {
    format!("{}/{REPO}:1.0", reg.host())
}

pub fn data(name: &str) -> String {
    data_path(name).display().to_string()
}

/// pull, extract, scan, ingest clair and anchore, ingest one static-analysis
/// project; returns the image reference.
pub fn prepare(store: &Path, reg: &FixtureRegistry) -> String {
    let image = image_ref(reg);
    ok(store, &["pull", &image]);
    ok(
        store,
        &["extract", &image, "--app-selector", vetri_testkit::APP_SELECTOR],
    );
    ok(store, &["scan", &image, "--feed", &data("feed.json")]);
    ok(
        store,
        &["ingest", &image, &data("clair_report.json"), "--format", "clair"],
    );
    ok(
        store,
        &["ingest", &image, &data("anchore_report.json"), "--format", "anchore"],
    );
    ok(
        store,
        &[
            "ingest",
            &image,
            &data("spotbugs_shop.xml"),
            "--format",
            "spotbugs",
            "--project",
            "shop",
        ],
    );
    image
}

/// Runs evaluate and returns the evaluation directory.
pub fn evaluate(store: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["evaluate"];
    args.extend_from_slice(extra);
    PathBuf::from(ok(store, &args).trim())
}

/// (tool, hits, misses, "n/d") rows of an evaluation.json.
pub fn dhr_rows(evaluation_json: &str) -> Vec<(String, u64, u64, String)> {
    let v: serde_json::Value = serde_json::from_str(evaluation_json).unwrap();
    v["tools"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            (
                t["tool_id"].as_str().unwrap().to_string(),
                t["hits"].as_u64().unwrap(),
                t["misses"].as_u64().unwrap(),
                t["dhr_exact"].as_str().unwrap_or("undefined").to_string(),
            )
        })
        .collect()
}

/// Hand-computed rows for the fixture image, feed and reports.
pub fn oracle_rows() -> Vec<(String, u64, u64, String)> {
    [
        ("anchore", 5, 3, "5/8"),
        ("builtin", 6, 2, "3/4"),
        ("clair", 2, 6, "1/4"),
    ]
    .iter()
    .map(|(t, h, m, r)| (t.to_string(), *h, *m, r.to_string()))
    .collect()
}
