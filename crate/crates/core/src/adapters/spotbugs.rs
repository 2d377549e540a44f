use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, AdapterError};
use crate::model::Severity;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FindingLocation {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
}

/// A security bug found by static analysis of application code. These have
/// no CVE identity and never become detections.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AppFinding {
    pub project_id: String,
    pub bug_kind: String,
    pub location: FindingLocation,
    pub severity: Severity,
}

#[derive(Debug, Clone, Default)]
pub struct StaticAnalysisOptions {
    /// Accepted bug kinds; `None` accepts every SECURITY kind.
    pub allowlist: Option<BTreeSet<String>>,
    /// Per-kind severity, overriding [`default_app_severity`].
    pub severities: BTreeMap<String, Severity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaticAnalysisOutcome {
    pub findings: Vec<AppFinding>,
    pub dropped_non_security: usize,
    pub dropped_not_allowlisted: usize,
}

impl StaticAnalysisOutcome {
    pub fn counts_by_kind(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for f in &self.findings {
            *m.entry(f.bug_kind.as_str()).or_insert(0) += 1;
        }
        m
    }
}

const INJECTION_MARKERS: &[&str] = &[
    "INJECTION",
    "SQL",
    "XSS",
    "HRS",
    "RESPONSE_SPLITTING",
    "CRLF",
    "COMMAND",
    "LDAP",
    "XPATH",
    "XXE",
];

/// High for injection-like kinds, Medium for everything else.
pub fn default_app_severity(bug_kind: &str) -> Severity {
    let k = bug_kind.to_ascii_uppercase();
    if INJECTION_MARKERS.iter().any(|m| k.contains(m)) {
        Severity::High
    } else {
        Severity::Medium
    }
}

fn location(bug: roxmltree::Node) -> FindingLocation {
    let class_elem = bug.children().find(|n| n.has_tag_name("Class"));
    let class = class_elem
        .and_then(|c| c.attribute("classname"))
        .unwrap_or_default()
        .to_string();
    // The primary source line is the direct child, falling back to the class's.
    let line_elem = bug
        .children()
        .find(|n| n.has_tag_name("SourceLine"))
        .or_else(|| class_elem.and_then(|c| c.children().find(|n| n.has_tag_name("SourceLine"))));
    let file = line_elem
        .and_then(|l| l.attribute("sourcepath").or(l.attribute("sourcefile")))
        .map(str::to_string);
    let line = line_elem
        .and_then(|l| l.attribute("start"))
        .and_then(|s| s.parse().ok());
    let class = if class.is_empty() {
        line_elem
            .and_then(|l| l.attribute("classname"))
            .unwrap_or_default()
            .to_string()
    } else {
        class
    };
    FindingLocation { class, file, line }
}

pub fn ingest_static_analysis_str(
    xml: &str,
    path: &Path,
    project_id: &str,
    options: &StaticAnalysisOptions,
) -> Result<StaticAnalysisOutcome, AdapterError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| AdapterError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = StaticAnalysisOutcome::default();
    for bug in doc.descendants().filter(|n| n.has_tag_name("BugInstance")) {
        let Some(kind) = bug.attribute("type") else {
            return Err(AdapterError::Parse {
                path: path.display().to_string(),
                message: format!("BugInstance at byte {} has no type", bug.range().start),
            });
        };
        if bug.attribute("category") != Some("SECURITY") {
            out.dropped_non_security += 1;
            continue;
        }
        if options.allowlist.as_ref().is_some_and(|a| !a.contains(kind)) {
            out.dropped_not_allowlisted += 1;
            continue;
        }
        let severity = options
            .severities
            .get(kind)
            .copied()
            .unwrap_or_else(|| default_app_severity(kind));
        out.findings.push(AppFinding {
            project_id: project_id.to_string(),
            bug_kind: kind.to_string(),
            location: location(bug),
            severity,
        });
    }
    Ok(out)
}

/// Reads a SpotBugs XML report (with the security plugin's categories).
pub fn ingest_static_analysis(
    path: &Path,
    project_id: &str,
    options: &StaticAnalysisOptions,
) -> Result<StaticAnalysisOutcome, AdapterError> {
    let bytes = read_file(path)?;
    let xml = String::from_utf8(bytes).map_err(|e| AdapterError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ingest_static_analysis_str(&xml, path, project_id, options)
}
