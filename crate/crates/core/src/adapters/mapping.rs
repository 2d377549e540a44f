use std::path::Path;

use serde_json::Value;

use super::{finish, read_file, AdapterError, IngestOptions, IngestStats, Ingested};
use crate::model::{Detection, Fix, ImageRef, PackageClass, Severity, VulnId};

/// Where a family's JSON keeps its records, and which package class the
/// location implies.
#[derive(Debug, Clone, Copy)]
pub struct RecordSource {
    /// JSON pointer to an array of records; `""` means the document itself.
    pub pointer: &'static str,
    pub class: Option<PackageClass>,
}

/// Field table for one scanner family. Each field lists candidate keys, the
/// first present one wins.
#[derive(Debug, Clone, Copy)]
pub struct FieldMapping {
    pub family: &'static str,
    pub sources: &'static [RecordSource],
    pub package_name: &'static [&'static str],
    pub package_version: &'static [&'static str],
    pub vuln_id: &'static [&'static str],
    pub severity: &'static [&'static str],
    pub fixed_in: &'static [&'static str],
    /// Values of the fix field meaning "no fix".
    pub no_fix_values: &'static [&'static str],
    /// Per-record field naming the package type, and the types that are OS
    /// packages. Other types are libraries.
    pub type_field: Option<&'static str>,
    pub os_types: &'static [&'static str],
    /// Document-level pointer holding an os / non-os marker.
    pub partition_pointer: Option<&'static str>,
    pub default_class: Option<PackageClass>,
}

/// clair-scanner: `{"image", "unapproved", "vulnerabilities": [{featurename,
/// featureversion, vulnerability, namespace, severity, fixedby}]}`. Clair
/// only reports OS packages.
pub const CLAIR_MAPPING: FieldMapping = FieldMapping {
    family: "clair",
    sources: &[RecordSource {
        pointer: "/vulnerabilities",
        class: None,
    }],
    package_name: &["featurename", "FeatureName"],
    package_version: &["featureversion", "FeatureVersion"],
    vuln_id: &["vulnerability", "Vulnerability"],
    severity: &["severity", "Severity"],
    fixed_in: &["fixedby", "FixedBy"],
    no_fix_values: &[""],
    type_field: None,
    os_types: &[],
    partition_pointer: None,
    default_class: Some(PackageClass::Os),
};

/// anchore-cli `image vuln <img> all|os|non-os --json`, either as a single
/// `vulnerabilities` list or split into `os` / `non-os` sections.
pub const ANCHORE_MAPPING: FieldMapping = FieldMapping {
    family: "anchore",
    sources: &[
        RecordSource {
            pointer: "/vulnerabilities",
            class: None,
        },
        RecordSource {
            pointer: "/os/vulnerabilities",
            class: Some(PackageClass::Os),
        },
        RecordSource {
            pointer: "/non-os/vulnerabilities",
            class: Some(PackageClass::Library),
        },
        RecordSource {
            pointer: "/non_os/vulnerabilities",
            class: Some(PackageClass::Library),
        },
    ],
    package_name: &["package_name"],
    package_version: &["package_version"],
    vuln_id: &["vuln"],
    severity: &["severity"],
    fixed_in: &["fix"],
    no_fix_values: &["None", "none", ""],
    type_field: Some("package_type"),
    os_types: &["dpkg", "apkg", "apk", "rpm", "os"],
    partition_pointer: Some("/vulnerability_type"),
    default_class: None,
};

fn first<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

fn text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn partition_class(marker: &str) -> Option<PackageClass> {
    match marker.to_ascii_lowercase().as_str() {
        "os" => Some(PackageClass::Os),
        "non-os" | "non_os" | "nonos" => Some(PackageClass::Library),
        _ => None,
    }
}

impl FieldMapping {
    fn record(
        &self,
        value: &Value,
        source_class: Option<PackageClass>,
        doc_class: Option<PackageClass>,
        index: usize,
        stats: &mut IngestStats,
    ) -> Result<Detection, String> {
        let obj = value.as_object().ok_or("record is not an object")?;
        let need = |keys: &[&str], what: &str| {
            text(first(obj, keys))
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| format!("missing {what} ({})", keys[0]))
        };
        let package_name = need(self.package_name, "package name")?;
        let package_version = need(self.package_version, "package version")?;
        let vuln = need(self.vuln_id, "vulnerability id")?;
        let raw_sev = text(first(obj, self.severity)).unwrap_or_default();
        let (severity, known) = Severity::normalize_checked(&raw_sev);
        if !known {
            stats.warnings.push(format!(
                "record {index}: unknown severity {raw_sev:?} mapped to Unknown"
            ));
        }
        let fix = match text(first(obj, self.fixed_in)) {
            None => Fix::Unknown,
            Some(f) if self.no_fix_values.contains(&f.trim()) => Fix::NoFixAvailable,
            Some(f) => Fix::FixedAvailable {
                fixed_in_version: f.trim().to_string(),
            },
        };
        let type_class = self
            .type_field
            .and_then(|k| obj.get(k))
            .and_then(Value::as_str)
            .map(|t| {
                if self.os_types.contains(&t.to_ascii_lowercase().as_str()) {
                    PackageClass::Os
                } else {
                    PackageClass::Library
                }
            });
        Ok(Detection {
            image: ImageRef::new("", "placeholder", None, None).expect("static ref"),
            package_name,
            package_version,
            cve_id: VulnId::new(&vuln),
            tool_id: String::new(),
            severity,
            fix,
            class_hint: source_class.or(type_class).or(doc_class).or(self.default_class),
        })
    }
}

pub fn ingest_mapped_bytes(
    mapping: &FieldMapping,
    bytes: &[u8],
    path: &Path,
    tool_id: &str,
    image: &ImageRef,
    options: IngestOptions,
) -> Result<Ingested, AdapterError> {
    let parse = |message: String| AdapterError::Parse {
        path: path.display().to_string(),
        message,
    };
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| parse(e.to_string()))?;
    let doc_class = mapping
        .partition_pointer
        .and_then(|p| doc.pointer(p))
        .and_then(Value::as_str)
        .and_then(partition_class);

    let mut lists: Vec<(&Vec<Value>, Option<PackageClass>)> = Vec::new();
    if let Some(arr) = doc.as_array() {
        lists.push((arr, None));
    }
    for src in mapping.sources {
        match doc.pointer(src.pointer) {
            Some(Value::Array(arr)) => lists.push((arr, src.class)),
            Some(Value::Null) | None => {}
            Some(_) => return Err(parse(format!("{} is not an array", src.pointer))),
        }
    }
    if lists.is_empty() {
        return Err(parse(format!("no {} vulnerability list found", mapping.family)));
    }

    let mut stats = IngestStats::default();
    let mut candidates = Vec::new();
    let mut bad = Vec::new();
    let mut index = 0;
    for (records, class) in lists {
        for v in records {
            stats.raw_records += 1;
            match mapping.record(v, class, doc_class, index, &mut stats) {
                Ok(d) => candidates.push(d),
                Err(m) => bad.push((index, m)),
            }
            index += 1;
        }
    }
    if !bad.is_empty() {
        if !options.lenient {
            return Err(AdapterError::Schema {
                path: path.display().to_string(),
                records: bad,
            });
        }
        stats.rejected = bad.len();
        stats
            .warnings
            .extend(bad.into_iter().map(|(i, m)| format!("record {i} rejected: {m}")));
    }
    Ok(finish(tool_id, image, path, candidates, stats))
}

/// clair-scanner JSON; the tool id is always `clair`.
pub fn ingest_clair_style(path: &Path, image: &ImageRef) -> Result<Ingested, AdapterError> {
    let bytes = read_file(path)?;
    ingest_mapped_bytes(&CLAIR_MAPPING, &bytes, path, "clair", image, IngestOptions::default())
}

/// anchore vulnerability JSON; the tool id is always `anchore`.
pub fn ingest_anchore_style(path: &Path, image: &ImageRef) -> Result<Ingested, AdapterError> {
    let bytes = read_file(path)?;
    ingest_mapped_bytes(
        &ANCHORE_MAPPING,
        &bytes,
        path,
        "anchore",
        image,
        IngestOptions::default(),
    )
}
