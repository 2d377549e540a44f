//! Vulnerability feeds and the built-in reference matcher.
//!
//! Feeds are loaded into immutable [`FeedSnapshot`]s whose `content_hash`
//! covers the canonical serialization of their entries. Two input formats are
//! understood: the canonical feed JSON and a subset of the NVD CVE JSON feeds
//! (1.1 data feeds and 2.0 API pages).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::extract::Inventory;
use crate::model::{Detection, Ecosystem, Fix, Severity, VulnId};
use crate::version::{compare_versions, MalformedVersion};

#[derive(Debug, thiserror::Error)]
pub enum FeedError {
    #[error("feed parse error{}: {message}", item.map(|i| format!(" at item {i}")).unwrap_or_default())]
    Parse { item: Option<usize>, message: String },
    #[error("unsupported feed schema version: {0}")]
    SchemaVersion(String),
    #[error("invalid feed entry {index}: {message}")]
    InvalidEntry { index: usize, message: String },
    #[error("content hash mismatch: file says {declared}, entries hash to {actual}")]
    HashMismatch { declared: String, actual: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedFormat {
    CanonicalJson,
    NvdJsonSubset,
}

impl FromStr for FeedFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "canonical" | "canonical_json" => Ok(FeedFormat::CanonicalJson),
            "nvd" | "nvd_json" | "nvd_json_subset" => Ok(FeedFormat::NvdJsonSubset),
            other => Err(format!("unknown feed format {other:?} (expected canonical or nvd)")),
        }
    }
}

/// Half-open version interval `[min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionRange {
    pub min: String,
    pub max: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VulnEntry {
    pub cve_id: VulnId,
    pub ecosystem: Ecosystem,
    /// Exact package name, or `group:artifact` for archives.
    pub package_selector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_below: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_range: Option<VersionRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_in: Option<String>,
    pub severity: Severity,
    #[serde(default)]
    pub description: String,
}

impl VulnEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.package_selector.is_empty() {
            return Err("empty package_selector".into());
        }
        if self.affected_below.is_none() && self.affected_range.is_none() {
            return Err("neither affected_below nor affected_range is set".into());
        }
        let cmp = |a: &str, b: &str| compare_versions(a, b, self.ecosystem).map_err(|e| e.to_string());
        if let Some(r) = &self.affected_range {
            if cmp(&r.min, &r.max)? == Ordering::Greater {
                return Err(format!("affected_range min {} exceeds max {}", r.min, r.max));
            }
        }
        if let Some(fixed) = &self.fixed_in {
            let upper = [
                self.affected_below.as_deref(),
                self.affected_range.as_ref().map(|r| r.max.as_str()),
            ];
            for bound in upper.into_iter().flatten() {
                if cmp(fixed, bound)? == Ordering::Less {
                    return Err(format!("fixed_in {fixed} is below affected bound {bound}"));
                }
            }
        }
        Ok(())
    }

    /// Whether `version` falls in the affected set. The upper bounds are
    /// strict: a package at exactly `affected_below` is not vulnerable.
    pub fn affects(&self, version: &str) -> Result<bool, MalformedVersion> {
        if let Some(below) = &self.affected_below {
            if compare_versions(version, below, self.ecosystem)? == Ordering::Less {
                return Ok(true);
            }
        }
        if let Some(r) = &self.affected_range {
            let above_min = compare_versions(version, &r.min, self.ecosystem)? != Ordering::Less;
            let below_max = compare_versions(version, &r.max, self.ecosystem)? == Ordering::Less;
            if above_min && below_max {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// An immutable, content-hashed feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedSnapshot {
    pub feed_id: String,
    pub fetched_at: DateTime<Utc>,
    pub entries: Vec<VulnEntry>,
    pub content_hash: String,
}

impl FeedSnapshot {
    pub fn new(feed_id: impl Into<String>, fetched_at: DateTime<Utc>, entries: Vec<VulnEntry>) -> Self {
        let content_hash = Self::hash_entries(&entries);
        FeedSnapshot {
            feed_id: feed_id.into(),
            fetched_at,
            entries,
            content_hash,
        }
    }

    /// sha256 over the compact JSON serialization of `entries`.
    pub fn hash_entries(entries: &[VulnEntry]) -> String {
        let bytes = serde_json::to_vec(entries).expect("entries serialize");
        crate::digest::sha256_digest(&bytes)
    }

    pub fn verify(&self) -> bool {
        Self::hash_entries(&self.entries) == self.content_hash
    }

    /// Canonical feed JSON, including the content hash.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }
}

/// What loading a feed produced besides the snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedLoadReport {
    /// Items (or CPE matches) that could not be mapped onto a package selector.
    pub dropped: usize,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct CanonicalFeed {
    feed_id: String,
    fetched_at: DateTime<Utc>,
    entries: Vec<Value>,
    #[serde(default)]
    content_hash: Option<String>,
}

/// Maps NVD `vendor:product` CPE pairs onto package selectors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeMapping {
    map: BTreeMap<String, Vec<CpeTarget>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeTarget {
    pub ecosystem: Ecosystem,
    pub selector: String,
}

impl CpeMapping {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A small table of well-known products.
    pub fn builtin() -> Self {
        use Ecosystem::*;
        let mut m = CpeMapping::empty();
        m.insert("oracle:mysql_connector/j", MavenArchive, "mysql:mysql-connector-java");
        m.insert("oracle:connector/j", MavenArchive, "mysql:mysql-connector-java");
        m.insert(
            "fasterxml:jackson-databind",
            MavenArchive,
            "com.fasterxml.jackson.core:jackson-databind",
        );
        m.insert("apache:log4j", MavenArchive, "org.apache.logging.log4j:log4j-core");
        m.insert("apache:struts", MavenArchive, "org.apache.struts:struts2-core");
        m.insert(
            "apache:commons_collections",
            MavenArchive,
            "commons-collections:commons-collections",
        );
        m.insert(
            "apache:tomcat",
            MavenArchive,
            "org.apache.tomcat.embed:tomcat-embed-core",
        );
        m.insert(
            "vmware:spring_framework",
            MavenArchive,
            "org.springframework:spring-core",
        );
        m.insert(
            "pivotal_software:spring_framework",
            MavenArchive,
            "org.springframework:spring-core",
        );
        for (cpe, name) in [
            ("haxx:curl", "curl"),
            ("haxx:libcurl", "libcurl"),
            ("openssl:openssl", "openssl"),
            ("gnu:coreutils", "coreutils"),
            ("gnu:glibc", "libc6"),
            ("gnu:bash", "bash"),
            ("busybox:busybox", "busybox"),
            ("madler:zlib", "zlib"),
        ] {
            m.insert(cpe, Dpkg, name);
            m.insert(cpe, Apk, name);
        }
        m
    }

    pub fn insert(&mut self, vendor_product: &str, ecosystem: Ecosystem, selector: &str) {
        self.map
            .entry(vendor_product.to_ascii_lowercase())
            .or_default()
            .push(CpeTarget {
                ecosystem,
                selector: selector.to_string(),
            });
    }

    /// Adds every mapping from `other`, keeping existing ones.
    pub fn extend(&mut self, other: CpeMapping) {
        for (k, targets) in other.map {
            let slot = self.map.entry(k).or_default();
            for t in targets {
                if !slot.contains(&t) {
                    slot.push(t);
                }
            }
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FeedError> {
        let map: BTreeMap<String, Vec<CpeTarget>> = serde_json::from_slice(bytes).map_err(|e| FeedError::Parse {
            item: None,
            message: format!("cpe mapping: {e}"),
        })?;
        Ok(CpeMapping {
            map: map.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect(),
        })
    }

    pub fn lookup(&self, vendor: &str, product: &str) -> &[CpeTarget] {
        self.map
            .get(&format!("{vendor}:{product}").to_ascii_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Splits a CPE 2.3 formatted string, honouring backslash escapes.
fn cpe_fields(cpe: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = cpe.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            ':' => out.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn parse_err(item: Option<usize>, message: impl Into<String>) -> FeedError {
    FeedError::Parse {
        item,
        message: message.into(),
    }
}

struct NvdItem<'a> {
    id: &'a str,
    description: String,
    severity: Severity,
    matches: Vec<&'a Value>,
}

fn collect_nodes<'a>(node: &'a Value, match_key: &str, out: &mut Vec<&'a Value>) {
    if let Some(ms) = node.get(match_key).and_then(Value::as_array) {
        out.extend(ms.iter());
    }
    if let Some(children) = node.get("children").and_then(Value::as_array) {
        for c in children {
            collect_nodes(c, match_key, out);
        }
    }
}

fn nvd11_item(index: usize, item: &Value) -> Result<NvdItem<'_>, FeedError> {
    let id = item
        .pointer("/cve/CVE_data_meta/ID")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(Some(index), "missing cve.CVE_data_meta.ID"))?;
    let description = item
        .pointer("/cve/description/description_data/0/value")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let severity = item
        .pointer("/impact/baseMetricV3/cvssV3/baseSeverity")
        .or_else(|| item.pointer("/impact/baseMetricV2/severity"))
        .and_then(Value::as_str)
        .map(Severity::normalize)
        .unwrap_or_default();
    let mut matches = Vec::new();
    if let Some(nodes) = item.pointer("/configurations/nodes").and_then(Value::as_array) {
        for n in nodes {
            collect_nodes(n, "cpe_match", &mut matches);
        }
    }
    Ok(NvdItem {
        id,
        description,
        severity,
        matches,
    })
}

fn nvd20_item(index: usize, item: &Value) -> Result<NvdItem<'_>, FeedError> {
    let cve = item
        .get("cve")
        .ok_or_else(|| parse_err(Some(index), "missing cve object"))?;
    let id = cve
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(Some(index), "missing cve.id"))?;
    let description = cve
        .get("descriptions")
        .and_then(Value::as_array)
        .and_then(|ds| {
            ds.iter()
                .find(|d| d.get("lang").and_then(Value::as_str) == Some("en"))
                .or_else(|| ds.first())
        })
        .and_then(|d| d.get("value"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let severity = ["cvssMetricV31", "cvssMetricV30"]
        .iter()
        .find_map(|k| cve.pointer(&format!("/metrics/{k}/0/cvssData/baseSeverity")))
        .or_else(|| cve.pointer("/metrics/cvssMetricV2/0/baseSeverity"))
        .and_then(Value::as_str)
        .map(Severity::normalize)
        .unwrap_or_default();
    let mut matches = Vec::new();
    if let Some(configs) = cve.get("configurations").and_then(Value::as_array) {
        for c in configs {
            if let Some(nodes) = c.get("nodes").and_then(Value::as_array) {
                for n in nodes {
                    collect_nodes(n, "cpeMatch", &mut matches);
                }
            }
        }
    }
    Ok(NvdItem {
        id,
        description,
        severity,
        matches,
    })
}

fn nvd_entries(doc: &Value, mapping: &CpeMapping, report: &mut FeedLoadReport) -> Result<Vec<VulnEntry>, FeedError> {
    let (items, is_v2): (&Vec<Value>, bool) = if let Some(items) = doc.get("CVE_Items").and_then(Value::as_array) {
        let version = doc.get("CVE_data_version").and_then(Value::as_str).unwrap_or("4.0");
        if version != "4.0" {
            return Err(FeedError::SchemaVersion(format!("CVE_data_version {version}")));
        }
        (items, false)
    } else if let Some(items) = doc.get("vulnerabilities").and_then(Value::as_array) {
        let version = doc.get("version").and_then(Value::as_str).unwrap_or("2.0");
        if !version.starts_with("2.") {
            return Err(FeedError::SchemaVersion(format!("NVD API version {version}")));
        }
        (items, true)
    } else {
        return Err(FeedError::SchemaVersion(
            "document has neither CVE_Items nor vulnerabilities".into(),
        ));
    };

    let mut entries = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let parsed = if is_v2 {
            nvd20_item(index, item)?
        } else {
            nvd11_item(index, item)?
        };
        let mut mapped_any = false;
        for m in &parsed.matches {
            if m.get("vulnerable").and_then(Value::as_bool) == Some(false) {
                continue;
            }
            let uri = m
                .get("cpe23Uri")
                .or_else(|| m.get("criteria"))
                .and_then(Value::as_str)
                .unwrap_or_default();
            let fields = cpe_fields(uri);
            if fields.len() < 6 {
                continue;
            }
            let (vendor, product, exact) = (&fields[3], &fields[4], &fields[5]);
            let targets = mapping.lookup(vendor, product);
            if targets.is_empty() {
                continue;
            }
            let s = |k: &str| m.get(k).and_then(Value::as_str).map(str::to_string);
            let end_excl = s("versionEndExcluding");
            let start_incl = s("versionStartIncluding");
            let (affected_below, affected_range) = match (start_incl, end_excl) {
                (Some(min), Some(max)) => (None, Some(VersionRange { min, max })),
                (None, Some(max)) => (Some(max), None),
                _ => {
                    let why = if s("versionEndIncluding").is_some() {
                        "inclusive upper bound"
                    } else if exact != "*" && exact != "-" {
                        "exact-version match"
                    } else {
                        "no upper bound"
                    };
                    report
                        .warnings
                        .push(format!("{}: {vendor}:{product} skipped ({why})", parsed.id));
                    continue;
                }
            };
            let fixed_in = affected_range
                .as_ref()
                .map(|r| r.max.clone())
                .or_else(|| affected_below.clone());
            for t in targets {
                entries.push(VulnEntry {
                    cve_id: VulnId::new(parsed.id),
                    ecosystem: t.ecosystem,
                    package_selector: t.selector.clone(),
                    affected_below: affected_below.clone(),
                    affected_range: affected_range.clone(),
                    fixed_in: fixed_in.clone(),
                    severity: parsed.severity,
                    description: parsed.description.clone(),
                });
                mapped_any = true;
            }
        }
        if !mapped_any {
            report.dropped += 1;
            report
                .warnings
                .push(format!("{}: no mappable package selector", parsed.id));
        }
    }
    Ok(entries)
}

/// Parses feed bytes. `feed_id` names NVD feeds, which carry no id of their
/// own; canonical feeds use the id stored in the file.
pub fn load_feed_bytes(
    bytes: &[u8],
    format: FeedFormat,
    feed_id: &str,
    mapping: &CpeMapping,
) -> Result<(FeedSnapshot, FeedLoadReport), FeedError> {
    let mut report = FeedLoadReport::default();
    match format {
        FeedFormat::CanonicalJson => {
            let raw: CanonicalFeed = serde_json::from_slice(bytes).map_err(|e| parse_err(None, e.to_string()))?;
            let mut entries = Vec::with_capacity(raw.entries.len());
            for (index, value) in raw.entries.into_iter().enumerate() {
                let entry: VulnEntry =
                    serde_json::from_value(value).map_err(|e| parse_err(Some(index), e.to_string()))?;
                entry
                    .validate()
                    .map_err(|message| FeedError::InvalidEntry { index, message })?;
                entries.push(entry);
            }
            let snapshot = FeedSnapshot::new(raw.feed_id, raw.fetched_at, entries);
            if let Some(declared) = raw.content_hash {
                if declared != snapshot.content_hash {
                    return Err(FeedError::HashMismatch {
                        declared,
                        actual: snapshot.content_hash,
                    });
                }
            }
            Ok((snapshot, report))
        }
        FeedFormat::NvdJsonSubset => {
            let doc: Value = serde_json::from_slice(bytes).map_err(|e| parse_err(None, e.to_string()))?;
            let mut entries = nvd_entries(&doc, mapping, &mut report)?;
            let mut valid = Vec::with_capacity(entries.len());
            for (index, e) in entries.drain(..).enumerate() {
                match e.validate() {
                    Ok(()) => valid.push(e),
                    Err(message) => {
                        report.dropped += 1;
                        report.warnings.push(format!("{} (entry {index}): {message}", e.cve_id));
                    }
                }
            }
            let fetched_at = doc
                .get("CVE_data_timestamp")
                .or_else(|| doc.get("timestamp"))
                .and_then(Value::as_str)
                .and_then(parse_nvd_time)
                .unwrap_or_else(crate::now_utc);
            Ok((FeedSnapshot::new(feed_id, fetched_at, valid), report))
        }
    }
}

fn parse_nvd_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            let s = s.trim_end_matches('Z');
            ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
                .iter()
                .find_map(|f| chrono::NaiveDateTime::parse_from_str(s, f).ok())
                .map(|n| n.and_utc())
        })
}

pub fn load_feed_file(
    path: &Path,
    format: FeedFormat,
    mapping: &CpeMapping,
) -> Result<(FeedSnapshot, FeedLoadReport), FeedError> {
    let bytes = std::fs::read(path).map_err(|e| FeedError::Io(path.display().to_string(), e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("feed");
    load_feed_bytes(&bytes, format, stem, mapping)
}

/// Result of matching one inventory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Sorted and free of duplicates.
    pub detections: Vec<Detection>,
    /// Packages skipped because their version is unknown.
    pub skipped_unknown_version: usize,
    /// (package, cve, reason) triples the comparator could not decide.
    pub comparator_errors: Vec<String>,
}

/// The built-in scanner: reports a vulnerability for every package whose
/// ecosystem and name equal an entry's and whose version is affected.
pub fn match_inventory(inv: &Inventory, feeds: &[FeedSnapshot], tool_id: &str) -> MatchOutcome {
    let mut index: HashMap<(Ecosystem, &str), Vec<&VulnEntry>> = HashMap::new();
    for feed in feeds {
        for e in &feed.entries {
            index
                .entry((e.ecosystem, e.package_selector.as_str()))
                .or_default()
                .push(e);
        }
    }
    let mut out = MatchOutcome::default();
    let mut found = BTreeSet::new();
    for pkg in &inv.packages {
        if !pkg.has_known_version() {
            out.skipped_unknown_version += 1;
            continue;
        }
        let Some(candidates) = index.get(&(pkg.ecosystem, pkg.name.as_str())) else {
            continue;
        };
        for entry in candidates {
            match entry.affects(&pkg.version) {
                Ok(true) => {
                    found.insert(Detection {
                        image: inv.image.clone(),
                        package_name: pkg.name.clone(),
                        package_version: pkg.version.clone(),
                        cve_id: entry.cve_id.clone(),
                        tool_id: tool_id.to_string(),
                        severity: entry.severity,
                        fix: Fix::from_fixed_in(entry.fixed_in.as_deref()),
                        class_hint: Some(pkg.class),
                    });
                }
                Ok(false) => {}
                Err(e) => {
                    log::warn!("skipping {} {} against {}: {e}", pkg.name, pkg.version, entry.cve_id);
                    out.comparator_errors
                        .push(format!("{} {} / {}: {e}", pkg.name, pkg.version, entry.cve_id));
                }
            }
        }
    }
    out.detections = found.into_iter().collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImageRef, PackageClass, PackageRecord};

    fn entry(cve: &str, eco: Ecosystem, sel: &str, below: &str) -> VulnEntry {
        VulnEntry {
            cve_id: VulnId::new(cve),
            ecosystem: eco,
            package_selector: sel.into(),
            affected_below: Some(below.into()),
            affected_range: None,
            fixed_in: Some(below.into()),
            severity: Severity::High,
            description: String::new(),
        }
    }

    fn inventory(pkgs: &[(&str, &str, Ecosystem)]) -> Inventory {
        let packages = pkgs
            .iter()
            .map(|(n, v, e)| PackageRecord {
                name: n.to_string(),
                version: v.to_string(),
                ecosystem: *e,
                class: if *e == Ecosystem::MavenArchive {
                    PackageClass::Library
                } else {
                    PackageClass::Os
                },
                source_path: "/x".into(),
            })
            .collect();
        Inventory::new(ImageRef::parse("a/b:1.0").unwrap(), packages)
    }

    fn ts() -> DateTime<Utc> {
        DateTime::from_timestamp(0, 0).unwrap()
    }

    #[test]
    fn strict_boundary_and_exact_selector() {
        let feed = FeedSnapshot::new(
            "f",
            ts(),
            vec![entry(
                "CVE-2019-2692",
                Ecosystem::MavenArchive,
                "mysql:mysql-connector-java",
                "5.1.49",
            )],
        );
        let inv = inventory(&[
            ("mysql:mysql-connector-java", "5.1.38", Ecosystem::MavenArchive),
            ("mysql:mysql-connector-java-extra", "5.1.38", Ecosystem::MavenArchive),
        ]);
        let out = match_inventory(&inv, std::slice::from_ref(&feed), "builtin");
        assert_eq!(out.detections.len(), 1);
        assert_eq!(
            out.detections[0].fix,
            Fix::FixedAvailable {
                fixed_in_version: "5.1.49".into()
            }
        );
        assert_eq!(out.detections[0].class_hint, Some(PackageClass::Library));

        let at_bound = inventory(&[("mysql:mysql-connector-java", "5.1.49", Ecosystem::MavenArchive)]);
        assert!(match_inventory(&at_bound, &[feed], "builtin").detections.is_empty());
        assert!(match_inventory(&inv, &[], "builtin").detections.is_empty());
    }

    #[test]
    fn range_and_unknown_versions() {
        let mut e = entry("CVE-2020-1", Ecosystem::Dpkg, "curl", "1");
        e.affected_below = None;
        e.affected_range = Some(VersionRange {
            min: "7.50".into(),
            max: "7.60".into(),
        });
        e.fixed_in = None;
        let feed = FeedSnapshot::new("f", ts(), vec![e]);
        let inv = inventory(&[("curl", "7.47", Ecosystem::Dpkg)]);
        assert!(match_inventory(&inv, std::slice::from_ref(&feed), "t")
            .detections
            .is_empty());
        let inv = inventory(&[
            ("curl", "7.55", Ecosystem::Dpkg),
            ("lib", "unknown", Ecosystem::MavenArchive),
        ]);
        let out = match_inventory(&inv, &[feed], "t");
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.detections[0].fix, Fix::NoFixAvailable);
        assert_eq!(out.skipped_unknown_version, 1);
    }

    #[test]
    fn entry_validation() {
        let mut e = entry("CVE-1", Ecosystem::Dpkg, "x", "2.0");
        assert!(e.validate().is_ok());
        e.fixed_in = Some("1.0".into());
        assert!(e.validate().is_err());
        e.fixed_in = None;
        e.affected_below = None;
        assert!(e.validate().is_err());
    }

    #[test]
    fn canonical_round_trip_and_tamper_check() {
        let snap = FeedSnapshot::new(
            "demo",
            ts(),
            vec![
                entry("CVE-1", Ecosystem::Dpkg, "a", "1"),
                entry("CVE-2", Ecosystem::Apk, "b", "2"),
            ],
        );
        let json = snap.to_json();
        let (back, _) = load_feed_bytes(json.as_bytes(), FeedFormat::CanonicalJson, "", &CpeMapping::empty()).unwrap();
        assert_eq!(back, snap);
        let tampered = json.replace("\"a\"", "\"z\"");
        assert!(matches!(
            load_feed_bytes(tampered.as_bytes(), FeedFormat::CanonicalJson, "", &CpeMapping::empty()),
            Err(FeedError::HashMismatch { .. })
        ));
        assert!(matches!(
            load_feed_bytes(b"{not json", FeedFormat::CanonicalJson, "", &CpeMapping::empty()),
            Err(FeedError::Parse { item: None, .. })
        ));
    }

    #[test]
    fn cpe_escapes() {
        let f = cpe_fields(r"cpe:2.3:a:oracle:mysql_connector\/j:*:*:*:*:*:*:*:*");
        assert_eq!(f[3], "oracle");
        assert_eq!(f[4], "mysql_connector/j");
    }
}
