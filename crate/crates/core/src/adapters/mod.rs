//! Normalisation of external evidence into detections and app findings.
//!
//! Third-party scanner JSON goes through a [`FieldMapping`] table, one per
//! tool family, so adding a tool means adding a table rather than code.

mod generic;
mod mapping;
mod spotbugs;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{Detection, ImageRef, JoinKey};

pub use generic::{ingest_generic, ingest_generic_bytes, render_generic};
pub use mapping::{
    ingest_anchore_style, ingest_clair_style, ingest_mapped_bytes, FieldMapping, RecordSource, ANCHORE_MAPPING,
    CLAIR_MAPPING,
};
pub use spotbugs::{
    default_app_severity, ingest_static_analysis, ingest_static_analysis_str, AppFinding, FindingLocation,
    StaticAnalysisOptions, StaticAnalysisOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: schema violations in {}", describe(.records))]
    Schema {
        path: String,
        records: Vec<(usize, String)>,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

fn describe(records: &[(usize, String)]) -> String {
    records
        .iter()
        .map(|(i, m)| format!("record {i} ({m})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl AdapterError {
    /// Indices of the rejected records for schema errors.
    pub fn record_indices(&self) -> Vec<usize> {
        match self {
            AdapterError::Schema { records, .. } => records.iter().map(|(i, _)| *i).collect(),
            _ => Vec::new(),
        }
    }
}

/// Tool families the CLI can select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolFormat {
    Generic,
    Clair,
    Anchore,
}

impl std::str::FromStr for ToolFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(ToolFormat::Generic),
            "clair" | "clair-scanner" | "clair_style" => Ok(ToolFormat::Clair),
            "anchore" | "anchore-engine" | "anchore_style" => Ok(ToolFormat::Anchore),
            other => Err(format!(
                "unknown report format {other:?} (expected generic, clair or anchore)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Skip records that violate the schema instead of failing the whole file.
    pub lenient: bool,
}

/// Normalised report of one tool on one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolReport {
    pub tool_id: String,
    pub image: ImageRef,
    pub detections: Vec<Detection>,
    pub raw_source: PathBuf,
    pub ingested_at: DateTime<Utc>,
}

impl ToolReport {
    /// Checks that every detection carries this report's tool and image.
    pub fn is_stamped(&self) -> bool {
        self.detections
            .iter()
            .all(|d| d.tool_id == self.tool_id && d.image == self.image)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Record accounting for one ingest: `raw_records = kept + collapsed + rejected`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub raw_records: usize,
    pub kept: usize,
    pub collapsed: usize,
    pub rejected: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl fmt::Display for IngestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} records: {} kept, {} duplicates collapsed, {} rejected",
            self.raw_records, self.kept, self.collapsed, self.rejected
        )
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub report: ToolReport,
    pub stats: IngestStats,
}

/// Stamps, de-duplicates under the full tuple and assembles the report.
fn finish(
    tool_id: &str,
    image: &ImageRef,
    path: &Path,
    candidates: Vec<Detection>,
    mut stats: IngestStats,
) -> Ingested {
    let mut seen = HashSet::new();
    let mut detections = Vec::with_capacity(candidates.len());
    for mut d in candidates {
        d.tool_id = tool_id.to_string();
        d.image = image.clone();
        if seen.insert(d.project(JoinKey::FullTuple)) {
            detections.push(d);
        } else {
            stats.collapsed += 1;
        }
    }
    stats.kept = detections.len();
    debug_assert_eq!(stats.raw_records, stats.kept + stats.collapsed + stats.rejected);
    Ingested {
        report: ToolReport {
            tool_id: tool_id.to_string(),
            image: image.clone(),
            detections,
            raw_source: path.to_path_buf(),
            ingested_at: crate::now_utc(),
        },
        stats,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, AdapterError> {
    std::fs::read(path).map_err(|e| AdapterError::Io(path.display().to_string(), e))
}

/// Dispatches on `format`.
pub fn ingest_report(
    format: ToolFormat,
    path: &Path,
    tool_id: &str,
    image: &ImageRef,
    options: IngestOptions,
) -> Result<Ingested, AdapterError> {
    match format {
        ToolFormat::Generic => ingest_generic(path, tool_id, image, options),
        ToolFormat::Clair => {
            let bytes = read_file(path)?;
            ingest_mapped_bytes(&CLAIR_MAPPING, &bytes, path, tool_id, image, options)
        }
        ToolFormat::Anchore => {
            let bytes = read_file(path)?;
            ingest_mapped_bytes(&ANCHORE_MAPPING, &bytes, path, tool_id, image, options)
        }
    }
}
