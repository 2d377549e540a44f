//! Cross-tool quality metrics: filters, detection miss, DHR, coverage and the
//! vulnerability landscape.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::adapters::{AppFinding, ToolReport};
use crate::extract::Inventory;
use crate::model::{Detection, ImageRef, JoinKey, PackageClass, ProjectedKey, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("tool {0:?} is configured but has no report")]
    UnknownTool(String),
    #[error("no tools configured")]
    NoTools,
    #[error("tool {0:?} is configured twice")]
    DuplicateTool(String),
    #[error("ratio is undefined: no hits and no misses")]
    UndefinedRatio,
    #[error("detection for {detection} does not belong to inventory of {inventory}")]
    ImageMismatch { inventory: String, detection: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub join_key: JoinKey,
    /// Detections strictly below this are dropped.
    pub min_severity: Severity,
    pub fixed_only: bool,
    pub tool_ids: Vec<String>,
    /// Empty means every image.
    #[serde(default)]
    pub image_scope: Vec<ImageRef>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            join_key: JoinKey::CveOnly,
            min_severity: Severity::Medium,
            fixed_only: true,
            tool_ids: Vec::new(),
            image_scope: Vec::new(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.tool_ids.is_empty() {
            return Err(MetricsError::NoTools);
        }
        let mut seen = BTreeSet::new();
        for t in &self.tool_ids {
            if !seen.insert(t) {
                return Err(MetricsError::DuplicateTool(t.clone()));
            }
        }
        Ok(())
    }

    /// Short stable hash of the configuration, for naming output directories.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..6])
    }

    fn in_scope(&self, image: &ImageRef) -> bool {
        self.image_scope.is_empty() || self.image_scope.iter().any(|s| same_image(s, image))
    }
}

/// Digest identity when both sides have one, otherwise registry/repo/tag.
pub fn same_image(a: &ImageRef, b: &ImageRef) -> bool {
    match (&a.digest, &b.digest) {
        (Some(x), Some(y)) => x == y,
        _ => a.registry == b.registry && a.repository == b.repository && a.tag == b.tag,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub out_of_scope: usize,
    pub below_severity: usize,
    pub no_fix: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.out_of_scope + self.below_severity + self.no_fix
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilteredSet {
    pub detections: Vec<Detection>,
    pub dropped: DropCounts,
}

fn filter_into(out: &mut FilteredSet, detections: &[Detection], config: &EvaluationConfig) {
    for d in detections {
        if !config.in_scope(&d.image) {
            out.dropped.out_of_scope += 1;
        } else if d.severity < config.min_severity {
            out.dropped.below_severity += 1;
        } else if config.fixed_only && !d.fix.is_available() {
            out.dropped.no_fix += 1;
        } else {
            out.detections.push(d.clone());
        }
    }
}

/// Applies scope, severity and fix filters, in that order, to every
/// configured tool. Reports of tools not in the config are ignored; one tool
/// may have several reports (one per image).
pub fn filter_detections(
    reports: &[ToolReport],
    config: &EvaluationConfig,
) -> Result<BTreeMap<String, FilteredSet>, MetricsError> {
    config.validate()?;
    let mut out = BTreeMap::new();
    for tool in &config.tool_ids {
        let mut set = FilteredSet::default();
        let mut found = false;
        for r in reports.iter().filter(|r| &r.tool_id == tool) {
            found = true;
            filter_into(&mut set, &r.detections, config);
        }
        if !found {
            return Err(MetricsError::UnknownTool(tool.clone()));
        }
        out.insert(tool.clone(), set);
    }
    Ok(out)
}

/// `miss(t)`: everything any other tool found that `t` did not.
pub fn detection_miss<K: Ord + Clone>(tool_id: &str, sets: &BTreeMap<String, BTreeSet<K>>) -> BTreeSet<K> {
    let own = sets.get(tool_id);
    sets.iter()
        .filter(|(t, _)| t.as_str() != tool_id)
        .flat_map(|(_, s)| s.iter())
        .filter(|k| own.is_none_or(|o| !o.contains(*k)))
        .cloned()
        .collect()
}

/// Literal pairwise form: for every other tool, right-outer-join its
/// detections against `tool_id`'s and accumulate the unmatched rows. Kept as
/// a reference for [`detection_miss`].
pub fn detection_miss_pairwise<K: Ord + Clone>(tool_id: &str, sets: &BTreeMap<String, BTreeSet<K>>) -> BTreeSet<K> {
    let own: Vec<&K> = sets.get(tool_id).map(|s| s.iter().collect()).unwrap_or_default();
    let mut missed: Vec<K> = Vec::new();
    for (other, theirs) in sets {
        if other == tool_id {
            continue;
        }
        for v in theirs {
            let matched = own.contains(&v);
            if !matched && !missed.contains(v) {
                missed.push(v.clone());
            }
        }
    }
    missed.into_iter().collect()
}

/// Detection hit ratio `hits / (hits + misses)`, exact.
pub fn dhr(hits: u64, misses: u64) -> Result<Ratio<u64>, MetricsError> {
    let total = hits + misses;
    if total == 0 {
        return Err(MetricsError::UndefinedRatio);
    }
    Ok(Ratio::new(hits, total))
}

pub fn ratio_value(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitMiss {
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolEvaluation {
    pub tool_id: String,
    pub hits: usize,
    pub misses: usize,
    #[serde(serialize_with = "ser_dhr")]
    pub dhr: Option<Ratio<u64>>,
    pub miss_set: BTreeSet<ProjectedKey>,
    pub per_image: BTreeMap<String, HitMiss>,
    pub dropped: DropCounts,
}

fn ser_dhr<S: Serializer>(r: &Option<Ratio<u64>>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_f64(ratio_value(r)),
        None => s.serialize_none(),
    }
}

impl ToolEvaluation {
    pub fn dhr_percent(&self) -> Option<f64> {
        self.dhr.as_ref().map(|r| ratio_value(r) * 100.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImageUnion {
    pub union_size: usize,
    pub tools: BTreeMap<String, HitMiss>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evaluation {
    pub config: EvaluationConfig,
    pub tools: Vec<ToolEvaluation>,
    pub union_size: usize,
    pub per_image: BTreeMap<String, ImageUnion>,
    /// Feeds behind any matcher report in the evaluation; filled by callers.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub feeds: Vec<FeedRef>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeedRef {
    pub feed_id: String,
    pub content_hash: String,
}

pub const SINGLE_TOOL_WARNING: &str = "single-tool evaluation is vacuous";

/// Filters, projects, computes every tool's miss set and its DHR.
pub fn evaluate(reports: &[ToolReport], config: &EvaluationConfig) -> Result<Evaluation, MetricsError> {
    let filtered = filter_detections(reports, config)?;
    let sets: BTreeMap<String, BTreeSet<ProjectedKey>> = filtered
        .iter()
        .map(|(t, f)| {
            (
                t.clone(),
                f.detections.iter().map(|d| d.project(config.join_key)).collect(),
            )
        })
        .collect();
    let union: BTreeSet<&ProjectedKey> = sets.values().flatten().collect();

    let mut per_image: BTreeMap<String, ImageUnion> = BTreeMap::new();
    for k in &union {
        per_image.entry(k.image.clone()).or_default().union_size += 1;
    }

    let mut tools = Vec::with_capacity(config.tool_ids.len());
    for tool in &config.tool_ids {
        let own = &sets[tool];
        let miss_set = detection_miss(tool, &sets);
        let mut breakdown: BTreeMap<String, HitMiss> =
            per_image.keys().map(|i| (i.clone(), HitMiss::default())).collect();
        for k in own {
            breakdown.get_mut(&k.image).expect("own key is in union").hits += 1;
        }
        for k in &miss_set {
            breakdown.get_mut(&k.image).expect("missed key is in union").misses += 1;
        }
        for (image, hm) in &breakdown {
            per_image.get_mut(image).expect("image").tools.insert(tool.clone(), *hm);
        }
        let (hits, misses) = (own.len(), miss_set.len());
        debug_assert_eq!(hits + misses, union.len());
        tools.push(ToolEvaluation {
            tool_id: tool.clone(),
            hits,
            misses,
            dhr: dhr(hits as u64, misses as u64).ok(),
            miss_set,
            per_image: breakdown,
            dropped: filtered[tool].dropped,
        });
    }

    let mut warnings = Vec::new();
    if config.tool_ids.len() == 1 {
        warnings.push(SINGLE_TOOL_WARNING.to_string());
    }
    for t in &tools {
        if t.dhr.is_none() {
            warnings.push(format!("{}: DHR undefined (no detections by any tool)", t.tool_id));
        }
    }
    Ok(Evaluation {
        config: config.clone(),
        union_size: union.len(),
        tools,
        per_image,
        feeds: Vec::new(),
        warnings,
    })
}

impl Evaluation {
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("evaluation serializes");
        // The exact ratio is rendered as "n/d" alongside the float.
        if let Some(rows) = v.get_mut("tools").and_then(|t| t.as_array_mut()) {
            for (row, t) in rows.iter_mut().zip(&self.tools) {
                row["dhr_exact"] = match &t.dhr {
                    Some(r) => format!("{}/{}", r.numer(), r.denom()).into(),
                    None => serde_json::Value::Null,
                };
            }
        }
        let mut s = serde_json::to_string_pretty(&v).expect("json");
        s.push('\n');
        s
    }

    /// `tool,detectionhits,detectionmiss,dhr,dhrp`
    pub fn dhr_csv(&self) -> String {
        let mut s = String::from("tool,detectionhits,detectionmiss,dhr,dhrp\n");
        for t in &self.tools {
            match &t.dhr {
                Some(r) => {
                    let v = ratio_value(r);
                    writeln!(s, "{},{},{},{:.4},{:.2}", t.tool_id, t.hits, t.misses, v, v * 100.0)
                }
                None => writeln!(s, "{},{},{},undefined,undefined", t.tool_id, t.hits, t.misses),
            }
            .expect("write to string");
        }
        s
    }
}

fn class_of(d: &Detection, inventory: Option<&Inventory>) -> Option<PackageClass> {
    d.class_hint.or_else(|| {
        inventory?
            .packages
            .iter()
            .find(|p| p.name == d.package_name)
            .map(|p| p.class)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCoverage {
    pub inventory_packages: usize,
    pub vulnerable_packages: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub image: String,
    pub application: ClassCoverage,
    pub library: ClassCoverage,
    pub os: ClassCoverage,
    pub unclassified_detections: usize,
    /// Classes present in the image that no tool detection covers.
    pub uncovered: Vec<PackageClass>,
    /// Static-analysis findings standing in for the uncovered application class.
    pub app_findings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CoverageReport {
    pub fn class(&self, class: PackageClass) -> &ClassCoverage {
        match class {
            PackageClass::Application => &self.application,
            PackageClass::Library => &self.library,
            PackageClass::Os => &self.os,
        }
    }

    fn class_mut(&mut self, class: PackageClass) -> &mut ClassCoverage {
        match class {
            PackageClass::Application => &mut self.application,
            PackageClass::Library => &mut self.library,
            PackageClass::Os => &mut self.os,
        }
    }
}

/// Per-class counts of inventory packages, vulnerable packages and
/// detections (all tools together) for one image.
pub fn coverage_report(
    inventory: &Inventory,
    detections: &[Detection],
    app_findings: &[AppFinding],
) -> Result<CoverageReport, MetricsError> {
    let mut rep = CoverageReport {
        image: inventory.image.key_name(),
        application: ClassCoverage::default(),
        library: ClassCoverage::default(),
        os: ClassCoverage::default(),
        unclassified_detections: 0,
        uncovered: Vec::new(),
        app_findings: app_findings.len(),
        note: None,
    };
    for p in &inventory.packages {
        rep.class_mut(p.class).inventory_packages += 1;
    }
    let mut vulnerable: BTreeSet<(PackageClass, &str, &str)> = BTreeSet::new();
    for d in detections {
        if !same_image(&d.image, &inventory.image) {
            return Err(MetricsError::ImageMismatch {
                inventory: inventory.image.to_string(),
                detection: d.image.to_string(),
            });
        }
        match class_of(d, Some(inventory)) {
            Some(c) => {
                rep.class_mut(c).detections += 1;
                vulnerable.insert((c, &d.package_name, &d.package_version));
            }
            None => rep.unclassified_detections += 1,
        }
    }
    for (c, _, _) in &vulnerable {
        rep.class_mut(*c).vulnerable_packages += 1;
    }
    for c in PackageClass::ALL {
        let cov = rep.class(c);
        let present = cov.inventory_packages > 0 || (c == PackageClass::Application && !app_findings.is_empty());
        if present && cov.detections == 0 {
            rep.uncovered.push(c);
        }
    }
    if rep.uncovered.contains(&PackageClass::Application) && !app_findings.is_empty() {
        rep.note = Some(format!(
            "application class not covered by any tool; {} static-analysis finding(s) present",
            app_findings.len()
        ));
    }
    Ok(rep)
}

/// Inputs for one image of a landscape: one tool's filtered detections, the
/// static-analysis findings and, for class lookup, the inventory.
#[derive(Debug, Clone, Copy)]
pub struct ImageEvidence<'a> {
    pub image: &'a str,
    pub detections: &'a [Detection],
    pub app_findings: &'a [AppFinding],
    pub inventory: Option<&'a Inventory>,
}

/// One row per image: non-OS vulnerabilities split into application and
/// dependencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub image: String,
    pub application: usize,
    pub dependencies: usize,
    pub total: usize,
    pub os: usize,
    /// Most detections on a single non-OS package.
    pub highest: usize,
    pub most_vulnerable_package: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub v_app: usize,
    pub v_lib: usize,
    pub v_os: usize,
    pub v_c: usize,
    /// Detections whose class could not be determined; not part of `v_c`.
    #[serde(default)]
    pub unclassified: usize,
    #[serde(default)]
    pub rows: Vec<LandscapeRow>,
}

impl LandscapeSummary {
    pub fn from_counts(v_app: usize, v_lib: usize, v_os: usize) -> Self {
        LandscapeSummary {
            v_app,
            v_lib,
            v_os,
            v_c: v_app + v_lib + v_os,
            ..Default::default()
        }
    }

    pub fn is_additive(&self) -> bool {
        self.v_c == self.v_app + self.v_lib + self.v_os
            && self.rows.iter().all(|r| r.total == r.application + r.dependencies)
    }
}

/// `V_c = V_app + V_lib + V_os`. Application vulnerabilities are the
/// static-analysis findings plus any detection a tool classed as
/// Application.
pub fn landscape(images: &[ImageEvidence]) -> LandscapeSummary {
    let mut sum = LandscapeSummary::default();
    for ev in images {
        let mut row = LandscapeRow {
            image: ev.image.to_string(),
            application: ev.app_findings.len(),
            dependencies: 0,
            total: 0,
            os: 0,
            highest: 0,
            most_vulnerable_package: None,
        };
        let mut per_package: BTreeMap<&str, usize> = BTreeMap::new();
        for d in ev.detections {
            match class_of(d, ev.inventory) {
                Some(PackageClass::Os) => row.os += 1,
                Some(c) => {
                    if c == PackageClass::Application {
                        row.application += 1;
                    } else {
                        row.dependencies += 1;
                    }
                    *per_package.entry(&d.package_name).or_default() += 1;
                }
                None => sum.unclassified += 1,
            }
        }
        // Ties go to the alphabetically first package.
        if let Some((name, n)) = per_package
            .iter()
            .fold(None::<(&str, usize)>, |best, (k, v)| match best {
                Some((_, bn)) if bn >= *v => best,
                _ => Some((k, *v)),
            })
        {
            row.highest = n;
            row.most_vulnerable_package = Some(name.to_string());
        }
        row.total = row.application + row.dependencies;
        sum.v_app += row.application;
        sum.v_lib += row.dependencies;
        sum.v_os += row.os;
        sum.rows.push(row);
    }
    sum.v_c = sum.v_app + sum.v_lib + sum.v_os;
    debug_assert!(sum.is_additive());
    sum
}

/// `tool,v_app,v_lib,v_os,v_c`
pub fn landscape_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a LandscapeSummary)>) -> String {
    let mut s = String::from("tool,v_app,v_lib,v_os,v_c\n");
    for (tool, l) in rows {
        writeln!(s, "{tool},{},{},{},{}", l.v_app, l.v_lib, l.v_os, l.v_c).expect("write to string");
    }
    s
}
