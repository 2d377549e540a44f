use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use vetri_core::adapters::ToolReport;
use vetri_core::metrics::{
    detection_miss, detection_miss_pairwise, dhr, evaluate, filter_detections, landscape, EvaluationConfig,
    ImageEvidence, LandscapeSummary,
};
use vetri_core::{Detection, Fix, ImageRef, JoinKey, PackageClass, Severity, VulnId};

const IMAGES: &[&str] = &["a/one:1", "a/two:2"];
const PACKAGES: &[&str] = &["curl", "libcurl3", "openssl"];
const SEVERITIES: [Severity; 5] = [
    Severity::Unknown,
    Severity::Low,
    Severity::Medium,
    Severity::High,
    Severity::Critical,
];

fn detection() -> impl Strategy<Value = Detection> {
    (
        0..IMAGES.len(),
        0..PACKAGES.len(),
        0u32..12,
        0..SEVERITIES.len(),
        0u8..3,
    )
        .prop_map(|(i, p, c, s, f)| Detection {
            image: ImageRef::parse(IMAGES[i]).unwrap(),
            package_name: PACKAGES[p].into(),
            package_version: "1.0".into(),
            cve_id: VulnId::new(&format!("CVE-2019-{:04}", c + 1)),
            tool_id: String::new(),
            severity: SEVERITIES[s],
            fix: match f {
                0 => Fix::FixedAvailable {
                    fixed_in_version: "2.0".into(),
                },
                1 => Fix::NoFixAvailable,
                _ => Fix::Unknown,
            },
            class_hint: None,
        })
}

fn reports() -> impl Strategy<Value = Vec<ToolReport>> {
    proptest::collection::vec(proptest::collection::vec(detection(), 0..25), 1..5).prop_map(|tools| {
        tools
            .into_iter()
            .enumerate()
            .map(|(i, mut ds)| {
                let tool = format!("t{i}");
                for d in &mut ds {
                    d.tool_id = tool.clone();
                }
                ToolReport {
                    tool_id: tool,
                    image: ImageRef::parse(IMAGES[0]).unwrap(),
                    detections: ds,
                    raw_source: "r.json".into(),
                    ingested_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
                }
            })
            .collect()
    })
}

fn config(reports: &[ToolReport], join_key: JoinKey) -> EvaluationConfig {
    EvaluationConfig {
        join_key,
        tool_ids: reports.iter().map(|r| r.tool_id.clone()).collect(),
        ..Default::default()
    }
}

fn key_sets() -> impl Strategy<Value = BTreeMap<String, BTreeSet<u8>>> {
    proptest::collection::vec(proptest::collection::btree_set(0u8..50, 0..50), 1..=5).prop_map(|sets| {
        sets.into_iter()
            .enumerate()
            .map(|(i, s)| (format!("t{i}"), s))
            .collect()
    })
}

proptest! {
    #[test]
    fn set_difference_equals_pairwise_join(sets in key_sets()) {
        for tool in sets.keys() {
            prop_assert_eq!(detection_miss(tool, &sets), detection_miss_pairwise(tool, &sets));
        }
    }

    #[test]
    fn union_identity(reports in reports()) {
        for key in [JoinKey::CveOnly, JoinKey::FullTuple] {
            let ev = evaluate(&reports, &config(&reports, key)).unwrap();
            for t in &ev.tools {
                prop_assert_eq!(t.hits + t.misses, ev.union_size);
                for (image, hm) in &t.per_image {
                    prop_assert_eq!(hm.hits + hm.misses, ev.per_image[image].union_size);
                }
            }
        }
    }

    #[test]
    fn dhr_bounds(reports in reports()) {
        let ev = evaluate(&reports, &config(&reports, JoinKey::CveOnly)).unwrap();
        for t in &ev.tools {
            match &t.dhr {
                None => prop_assert_eq!(ev.union_size, 0),
                Some(r) => {
                    prop_assert!(*r.numer() <= *r.denom());
                    prop_assert_eq!(*r.numer() == *r.denom(), t.miss_set.is_empty());
                    prop_assert_eq!(*r.numer() == 0, t.hits == 0 && ev.union_size > 0);
                }
            }
        }
    }

    #[test]
    fn filters_only_contract(reports in reports(), lo in 0..SEVERITIES.len(), hi in 0..SEVERITIES.len()) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let mut base = config(&reports, JoinKey::FullTuple);
        base.min_severity = SEVERITIES[lo];
        base.fixed_only = false;
        let mut stricter = base.clone();
        stricter.min_severity = SEVERITIES[hi];
        let mut fixed = base.clone();
        fixed.fixed_only = true;
        let a = filter_detections(&reports, &base).unwrap();
        for narrower in [filter_detections(&reports, &stricter).unwrap(), filter_detections(&reports, &fixed).unwrap()] {
            for (tool, set) in &narrower {
                let wide: BTreeSet<&Detection> = a[tool].detections.iter().collect();
                prop_assert!(set.detections.iter().all(|d| wide.contains(d)));
            }
        }
    }

    #[test]
    fn coarser_key_never_misses_more(reports in reports()) {
        let cve = evaluate(&reports, &config(&reports, JoinKey::CveOnly)).unwrap();
        let full = evaluate(&reports, &config(&reports, JoinKey::FullTuple)).unwrap();
        for (c, f) in cve.tools.iter().zip(&full.tools) {
            prop_assert!(c.misses <= f.misses);
        }
    }

    #[test]
    fn landscape_is_additive(app in 0usize..40, lib in 0usize..40, os in 0usize..40) {
        let l = LandscapeSummary::from_counts(app, lib, os);
        prop_assert!(l.is_additive());
        prop_assert_eq!(l.v_c, app + lib + os);
    }

    #[test]
    fn landscape_from_detections_is_additive(ds in proptest::collection::vec(detection(), 0..30), hints in proptest::collection::vec(0u8..4, 30)) {
        let mut ds = ds;
        for (d, h) in ds.iter_mut().zip(&hints) {
            d.class_hint = match h {
                0 => Some(PackageClass::Os),
                1 => Some(PackageClass::Library),
                2 => Some(PackageClass::Application),
                _ => None,
            };
        }
        let l = landscape(&[ImageEvidence { image: IMAGES[0], detections: &ds, app_findings: &[], inventory: None }]);
        prop_assert!(l.is_additive());
        prop_assert_eq!(l.v_c + l.unclassified, ds.len());
    }
}

#[test]
fn hit_ratio_arithmetic() {
    let r = dhr(13149, 6864).unwrap();
    assert_eq!(*r.denom(), 20013 / num_gcd(13149, 20013));
    let v = *r.numer() as f64 / *r.denom() as f64;
    assert!((v - 0.6570).abs() < 1e-4, "{v}");
}

fn num_gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        num_gcd(b, a % b)
    }
}
