use std::path::Path;

use serde_json::Value;

use super::{finish, read_file, AdapterError, IngestOptions, IngestStats, Ingested, ToolReport};
use crate::model::{Detection, Fix, ImageRef, PackageClass, Severity, VulnId};

fn required_str<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a str, String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(Value::String(_)) => Err(format!("{key} is empty")),
        Some(_) => Err(format!("{key} is not a string")),
        None => Err(format!("missing {key}")),
    }
}

fn record(value: &Value, stats: &mut IngestStats, index: usize) -> Result<Detection, String> {
    let obj = value.as_object().ok_or("record is not an object")?;
    let cve_id = required_str(obj, "cve_id")?;
    let package_name = required_str(obj, "package_name")?;
    let package_version = required_str(obj, "package_version")?;
    let severity = match obj.get("severity") {
        None | Some(Value::Null) => Severity::Unknown,
        Some(Value::String(s)) => {
            let (sev, known) = Severity::normalize_checked(s);
            if !known {
                stats.warnings.push(format!("record {index}: unknown severity {s:?}"));
            }
            sev
        }
        Some(_) => return Err("severity is not a string".into()),
    };
    let fix = match obj.get("fix") {
        None | Some(Value::Null) => Fix::Unknown,
        Some(v) => serde_json::from_value::<Fix>(v.clone()).map_err(|e| format!("fix: {e}"))?,
    };
    let class_hint = match obj.get("class_hint") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value::<PackageClass>(v.clone()).map_err(|e| format!("class_hint: {e}"))?),
    };
    Ok(Detection {
        // Stamped from the report by `finish`.
        image: ImageRef::new("", "placeholder", None, None).expect("static ref"),
        package_name: package_name.to_string(),
        package_version: package_version.to_string(),
        cve_id: VulnId::new(cve_id),
        tool_id: String::new(),
        severity,
        fix,
        class_hint,
    })
}

/// Ingests the canonical interchange format: a JSON array of detection
/// objects. `image` and `tool_id` inside records are ignored in favour of the
/// report's.
pub fn ingest_generic_bytes(
    bytes: &[u8],
    path: &Path,
    tool_id: &str,
    image: &ImageRef,
    options: IngestOptions,
) -> Result<Ingested, AdapterError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| AdapterError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let records = doc.as_array().ok_or_else(|| AdapterError::Parse {
        path: path.display().to_string(),
        message: "generic report must be a JSON array".into(),
    })?;
    let mut stats = IngestStats {
        raw_records: records.len(),
        ..Default::default()
    };
    let mut candidates = Vec::with_capacity(records.len());
    let mut bad = Vec::new();
    for (i, v) in records.iter().enumerate() {
        match record(v, &mut stats, i) {
            Ok(d) => candidates.push(d),
            Err(m) => bad.push((i, m)),
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

pub fn ingest_generic(
    path: &Path,
    tool_id: &str,
    image: &ImageRef,
    options: IngestOptions,
) -> Result<Ingested, AdapterError> {
    let bytes = read_file(path)?;
    ingest_generic_bytes(&bytes, path, tool_id, image, options)
}

/// Renders a report's detections in the generic interchange format.
pub fn render_generic(report: &ToolReport) -> String {
    let mut s = serde_json::to_string_pretty(&report.detections).expect("detections serialize");
    s.push('\n');
    s
}
