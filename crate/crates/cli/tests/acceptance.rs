//! Acceptance checks. Each test prints one `PASS`/`FAIL` line to stderr and
//! then asserts.

mod common;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};
use vetri_core::adapters::{
    ingest_report, ingest_static_analysis, IngestOptions, StaticAnalysisOptions, ToolFormat, ToolReport,
};
use vetri_core::extract::{assemble_filesystem, build_inventory, CoordinatePattern, FileTree, MemoryBlobStore};
use vetri_core::manifest::ManifestDocument;
use vetri_core::metrics::{
    coverage_report, detection_miss, detection_miss_pairwise, dhr, evaluate, filter_detections, landscape, ratio_value,
    EvaluationConfig, ImageEvidence,
};
use vetri_core::version::compare_versions;
use vetri_core::{Detection, Ecosystem, Fix, ImageRef, JoinKey, PackageClass, Severity, VulnId};
use vetri_testkit::oracle::{apk_version, dpkg_version, maven_version, parse_table, DPKG_ORACLE, MAVEN_ORACLE};
use vetri_testkit::{data_path, overlay, FixtureImage};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs `body`, prints the verdict line and fails the test on error or when
/// the time budget is exceeded.
fn criterion(n: u8, name: &str, budget: Duration, body: impl FnOnce() -> Check) {
    let start = Instant::now();
    let mut outcome = body();
    let elapsed = start.elapsed();
    if outcome.is_ok() && elapsed > budget {
        outcome = Err(format!("took {elapsed:?}, budget {budget:?}"));
    }
    let line = match &outcome {
        Ok(()) => format!("criterion {n} {name}: PASS ({elapsed:.2?})\n"),
        Err(e) => format!("criterion {n} {name}: FAIL ({elapsed:.2?}): {e}\n"),
    };
    // Written to the stderr handle directly so the line shows without --nocapture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = outcome {
        panic!("criterion {n} {name}: {e}");
    }
}

fn image() -> ImageRef {
    ImageRef::parse("example/app:1.0").unwrap()
}

fn detection(tool: &str, cve: &str, package: &str, severity: Severity, fix: Fix) -> Detection {
    Detection {
        image: image(),
        package_name: package.into(),
        package_version: "1.0".into(),
        cve_id: VulnId::new(cve),
        tool_id: tool.into(),
        severity,
        fix,
        class_hint: None,
    }
}

fn report(tool: &str, detections: Vec<Detection>) -> ToolReport {
    ToolReport {
        tool_id: tool.into(),
        image: image(),
        detections,
        raw_source: format!("{tool}.json").into(),
        ingested_at: vetri_core::now_utc(),
    }
}

fn fixed() -> Fix {
    Fix::FixedAvailable {
        fixed_in_version: "2.0".into(),
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

#[test]
fn criterion_1_metric_arithmetic() {
    criterion(1, "metric arithmetic", Duration::from_secs(1), || {
        let r = dhr(13149, 6864).map_err(|e| e.to_string())?;
        ensure((ratio_value(&r) - 0.6570).abs() <= 1e-4, || {
            format!("dhr = {}", ratio_value(&r))
        })?;
        ensure(13149 + 6864 == 20013, || "hits + misses".into())?;

        // 1137 Low, then 1039 of the rest without a fix.
        let detections: Vec<Detection> = (0..14533)
            .map(|i| {
                let (severity, fix) = if i < 1137 {
                    (Severity::Low, fixed())
                } else if i < 1137 + 1039 {
                    (
                        Severity::High,
                        if i % 2 == 0 { Fix::NoFixAvailable } else { Fix::Unknown },
                    )
                } else {
                    (Severity::Medium, fixed())
                };
                detection("t", &format!("CVE-2019-{:05}", i), "pkg", severity, fix)
            })
            .collect();
        let reports = [report("t", detections)];
        let mut config = EvaluationConfig {
            tool_ids: vec!["t".into()],
            min_severity: Severity::Medium,
            fixed_only: false,
            ..Default::default()
        };
        let sev = &filter_detections(&reports, &config).map_err(|e| e.to_string())?["t"];
        ensure(
            sev.detections.len() == 13396 && sev.dropped.below_severity == 1137,
            || {
                format!(
                    "severity filter kept {} and dropped {:?}",
                    sev.detections.len(),
                    sev.dropped
                )
            },
        )?;
        config.fixed_only = true;
        let fix = &filter_detections(&reports, &config).map_err(|e| e.to_string())?["t"];
        ensure(fix.detections.len() == 12357 && fix.dropped.no_fix == 1039, || {
            format!("fix filter kept {} and dropped {:?}", fix.detections.len(), fix.dropped)
        })
    });
}

fn key_sets() -> impl Strategy<Value = BTreeMap<String, BTreeSet<u8>>> {
    proptest::collection::vec(proptest::collection::btree_set(0u8..50, 0..50), 1..=5).prop_map(|sets| {
        sets.into_iter()
            .enumerate()
            .map(|(i, s)| (format!("t{i}"), s))
            .collect()
    })
}

#[test]
fn criterion_2_detection_miss() {
    criterion(2, "detection miss", Duration::from_secs(5), || {
        let tool = |t: &str, cves: &[&str]| {
            report(
                t,
                cves.iter()
                    .map(|c| detection(t, c, "pkg", Severity::High, fixed()))
                    .collect(),
            )
        };
        let reports = [tool("A", &["v1", "v2"]), tool("B", &["v2", "v3"]), tool("C", &["v3"])];
        let config = EvaluationConfig {
            tool_ids: vec!["A".into(), "B".into(), "C".into()],
            ..Default::default()
        };
        let ev = evaluate(&reports, &config).map_err(|e| e.to_string())?;
        let want = [
            ("A", vec!["V3"], (2, 3)),
            ("B", vec!["V1"], (2, 3)),
            ("C", vec!["V1", "V2"], (1, 3)),
        ];
        for ((name, misses, (n, d)), t) in want.iter().zip(&ev.tools) {
            let got: Vec<&str> = t.miss_set.iter().map(|k| k.cve_id.as_str()).collect();
            ensure(t.tool_id == *name && got == *misses, || {
                format!("{}: miss set {got:?}", t.tool_id)
            })?;
            let r = t.dhr.ok_or_else(|| format!("{name}: undefined dhr"))?;
            ensure((*r.numer(), *r.denom()) == (*n, *d), || format!("{name}: dhr {r}"))?;
        }

        runner(200)
            .run(&key_sets(), |sets| {
                for t in sets.keys() {
                    prop_assert_eq!(detection_miss(t, &sets), detection_miss_pairwise(t, &sets));
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
    });
}

const PACKAGES: &[&str] = &["curl", "openssl", "zlib1g"];

fn random_reports() -> impl Strategy<Value = Vec<ToolReport>> {
    let det = (0..PACKAGES.len(), 0u32..15, 0u8..2).prop_map(|(p, c, v)| {
        let mut d = detection("", &format!("CVE-2019-{:04}", c), PACKAGES[p], Severity::High, fixed());
        d.package_version = format!("1.{v}");
        d
    });
    proptest::collection::vec(proptest::collection::vec(det, 0..30), 1..=5).prop_map(|tools| {
        tools
            .into_iter()
            .enumerate()
            .map(|(i, mut ds)| {
                let t = format!("t{i}");
                ds.iter_mut().for_each(|d| d.tool_id = t.clone());
                report(&t, ds)
            })
            .collect()
    })
}

#[test]
fn criterion_3_union_identity() {
    criterion(3, "union identity", Duration::from_secs(10), || {
        runner(100)
            .run(&random_reports(), |reports| {
                let tool_ids = reports.iter().map(|r| r.tool_id.clone()).collect();
                for join_key in [JoinKey::CveOnly, JoinKey::FullTuple] {
                    let config = EvaluationConfig {
                        join_key,
                        tool_ids: Vec::clone(&tool_ids),
                        ..Default::default()
                    };
                    let ev = evaluate(&reports, &config).unwrap();
                    let union: BTreeSet<_> = reports
                        .iter()
                        .flat_map(|r| &r.detections)
                        .map(|d| d.project(join_key))
                        .collect();
                    prop_assert_eq!(ev.union_size, union.len());
                    for t in &ev.tools {
                        prop_assert_eq!(
                            t.hits + t.miss_set.len(),
                            union.len(),
                            "{} under {:?}",
                            &t.tool_id,
                            join_key
                        );
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
    });
}

fn table_failures(text: &str, eco: Ecosystem) -> Vec<String> {
    parse_table(text)
        .iter()
        .filter_map(|(a, b, want)| match compare_versions(a, b, eco) {
            Ok(got) if got == *want => None,
            other => Some(format!("{a} vs {b}: {other:?}, want {want:?}")),
        })
        .collect()
}

fn laws(eco: Ecosystem, (a, b, c): (String, String, String)) -> Result<(), TestCaseError> {
    let cmp = |x: &str, y: &str| compare_versions(x, y, eco).unwrap();
    prop_assert_eq!(cmp(&a, &a), Ordering::Equal);
    prop_assert_eq!(cmp(&a, &b), cmp(&b, &a).reverse());
    if cmp(&a, &b) != Ordering::Greater && cmp(&b, &c) != Ordering::Greater {
        prop_assert_ne!(cmp(&a, &c), Ordering::Greater, "{} <= {} <= {}", a, b, c);
    }
    Ok(())
}

#[test]
fn criterion_4_version_ordering() {
    criterion(4, "version ordering", Duration::from_secs(10), || {
        let rows = (parse_table(DPKG_ORACLE).len(), parse_table(MAVEN_ORACLE).len());
        ensure(rows == (40, 20), || format!("table sizes {rows:?}"))?;
        let mut failures = table_failures(DPKG_ORACLE, Ecosystem::Dpkg);
        failures.extend(table_failures(MAVEN_ORACLE, Ecosystem::MavenArchive));
        ensure(failures.is_empty(), || failures.join("; "))?;
        for (eco, pattern) in [
            (Ecosystem::Dpkg, dpkg_version()),
            (Ecosystem::Apk, apk_version()),
            (Ecosystem::MavenArchive, maven_version()),
        ] {
            runner(1000)
                .run(&(pattern, pattern, pattern), |triple| laws(eco, triple))
                .map_err(|e| format!("{eco:?}: {e}"))?;
        }
        Ok(())
    });
}

fn flatten(image: &FixtureImage) -> FileTree {
    let mut blobs = MemoryBlobStore::new();
    for (_, bytes) in image.blobs() {
        blobs.insert(bytes);
    }
    let ManifestDocument::Image(m) = ManifestDocument::parse(&image.manifest, None).unwrap() else {
        panic!("fixture is not an image manifest");
    };
    assemble_filesystem(&m, &blobs).unwrap()
}

fn standard_inventory() -> vetri_core::extract::Inventory {
    let tree = flatten(&vetri_testkit::standard_image());
    build_inventory(image(), &tree, &[CoordinatePattern::new(vetri_testkit::APP_SELECTOR)])
        .unwrap()
        .inventory
}

#[test]
fn criterion_5_extraction_fidelity() {
    criterion(5, "extraction fidelity", Duration::from_secs(30), || {
        let inventory = standard_inventory();
        let mut got: Vec<String> = inventory
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
        ensure(got.len() == 10 && got == want, || format!("records {got:#?}"))?;
        let count = |c| inventory.packages.iter().filter(|p| p.class == c).count();
        let classes = (
            count(PackageClass::Os),
            count(PackageClass::Library),
            count(PackageClass::Application),
        );
        ensure(classes == (8, 1, 1), || format!("class split {classes:?}"))?;

        runner(100)
            .run(&overlay::stack(), |stack| {
                let tree = flatten(&overlay::build(&stack));
                let files: BTreeMap<String, u8> = tree
                    .files()
                    .map(|(p, c)| (p.trim_start_matches('/').to_string(), c[0]))
                    .collect();
                prop_assert_eq!(&files, &overlay::model(&stack));
                for abs in overlay::expected_absent(&stack) {
                    prop_assert!(!tree.contains(&abs), "{} survived its whiteout", abs);
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
    });
}

#[test]
fn criterion_6_pipeline_determinism() {
    criterion(6, "pipeline determinism", Duration::from_secs(60), || {
        let reg = common::registry();
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let store = tempfile::tempdir().unwrap();
            common::prepare(store.path(), &reg);
            let dir = common::evaluate(store.path(), &[]);
            outputs.push(std::fs::read(dir.join("evaluation.json")).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || {
            "evaluation.json differs between runs".into()
        })?;
        let rows = common::dhr_rows(std::str::from_utf8(&outputs[0]).unwrap());
        ensure(rows == common::oracle_rows(), || format!("rows {rows:?}"))
    });
}

#[test]
fn criterion_7_landscape_and_coverage() {
    criterion(
        7,
        "landscape additivity and coverage gap",
        Duration::from_secs(5),
        || {
            let inventory = standard_inventory();
            let anchore = ingest_report(
                ToolFormat::Anchore,
                &data_path("anchore_report.json"),
                "anchore",
                &image(),
                IngestOptions::default(),
            )
            .map_err(|e| e.to_string())?
            .report;
            let findings = ingest_static_analysis(
                &data_path("spotbugs_shop.xml"),
                "shop",
                &StaticAnalysisOptions::default(),
            )
            .map_err(|e| e.to_string())?
            .findings;
            ensure(!findings.is_empty(), || "no static-analysis findings".into())?;

            let cov = coverage_report(&inventory, &anchore.detections, &findings).map_err(|e| e.to_string())?;
            ensure(cov.application.detections == 0, || {
                format!("application detections {}", cov.application.detections)
            })?;
            ensure(cov.library.detections + cov.os.detections > 0, || {
                "no Library/OS detections".into()
            })?;
            ensure(cov.uncovered.contains(&PackageClass::Application), || {
                format!("uncovered {:?}", cov.uncovered)
            })?;
            ensure(cov.note.is_some(), || "no coverage note".into())?;

            let evidence = ImageEvidence {
                image: "example/app:1.0",
                detections: &anchore.detections,
                app_findings: &findings,
                inventory: Some(&inventory),
            };
            let l = landscape(&[evidence]);
            ensure(l.v_c == l.v_app + l.v_lib + l.v_os && l.v_app == findings.len(), || {
                format!("fixture landscape {l:?}")
            })?;

            let mut vectors = vec![(0usize, 0usize, 0usize)];
            let mut rng = runner(1);
            let strategy = (0usize..30, 0usize..30, 0usize..30);
            while vectors.len() < 20 {
                vectors.push(strategy.new_tree(&mut rng).unwrap().current());
            }
            for (app, lib, os) in vectors {
                // Application vulnerabilities come partly from findings and partly
                // from detections a tool classed as Application.
                let from_findings = app.min(findings.len());
                let mut detections = Vec::new();
                for (class, n) in [
                    (PackageClass::Application, app - from_findings),
                    (PackageClass::Library, lib),
                    (PackageClass::Os, os),
                ] {
                    for i in 0..n {
                        let mut d = detection(
                            "t",
                            &format!("CVE-2019-{i:04}"),
                            class.as_str(),
                            Severity::High,
                            fixed(),
                        );
                        d.class_hint = Some(class);
                        detections.push(d);
                    }
                }
                let l = landscape(&[ImageEvidence {
                    image: "example/app:1.0",
                    detections: &detections,
                    app_findings: &findings[..from_findings],
                    inventory: None,
                }]);
                ensure(
                    (l.v_app, l.v_lib, l.v_os, l.v_c) == (app, lib, os, app + lib + os),
                    || format!("counts ({app}, {lib}, {os}) gave {l:?}"),
                )?;
            }
            Ok(())
        },
    );
}
