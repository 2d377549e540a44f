use super::ParseError;
use crate::model::{Ecosystem, PackageClass, PackageRecord};

pub const DPKG_STATUS: &str = "/var/lib/dpkg/status";
pub const DPKG_STATUS_DIR: &str = "/var/lib/dpkg/status.d";

/// Parses `/var/lib/dpkg/status`. Only stanzas whose `Status` state word is
/// `installed` produce records.
pub fn parse_dpkg_status(content: &str) -> Result<Vec<PackageRecord>, ParseError> {
    parse_stanzas(content, DPKG_STATUS, false)
}

/// Parses one file from `status.d/`, as written by distroless-style images.
/// Stanzas there may omit `Status` and are then treated as installed.
pub fn parse_dpkg_status_d(content: &str, source_path: &str) -> Result<Vec<PackageRecord>, ParseError> {
    parse_stanzas(content, source_path, true)
}

fn is_installed(status: &str) -> bool {
    // "want flag state", e.g. "install ok installed"
    status.split_whitespace().last() == Some("installed")
}

fn parse_stanzas(
    content: &str,
    source_path: &str,
    missing_status_installed: bool,
) -> Result<Vec<PackageRecord>, ParseError> {
    let mut out = Vec::new();
    let mut stanza_index = 0;
    let mut fields: Vec<(&str, &str)> = Vec::new();
    let mut first_line = 0;

    let mut flush = |fields: &mut Vec<(&str, &str)>, index: usize, line: usize| -> Result<(), ParseError> {
        if fields.is_empty() {
            return Ok(());
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| *v)
        };
        let installed = match get("Status") {
            Some(s) => is_installed(s),
            None => missing_status_installed,
        };
        if installed {
            let err = |message: &str| ParseError {
                database: source_path.to_string(),
                record: index,
                line,
                message: message.to_string(),
            };
            let name = get("Package")
                .filter(|v| !v.is_empty())
                .ok_or_else(|| err("installed stanza has no Package field"))?;
            let version = get("Version")
                .filter(|v| !v.is_empty())
                .ok_or_else(|| err("installed stanza has no Version field"))?;
            out.push(PackageRecord {
                name: name.to_string(),
                version: version.to_string(),
                ecosystem: Ecosystem::Dpkg,
                class: PackageClass::Os,
                source_path: source_path.to_string(),
            });
        }
        fields.clear();
        Ok(())
    };

    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            if !fields.is_empty() {
                flush(&mut fields, stanza_index, first_line)?;
                stanza_index += 1;
            }
            continue;
        }
        if line.starts_with([' ', '\t']) {
            if fields.is_empty() {
                return Err(ParseError {
                    database: source_path.to_string(),
                    record: stanza_index,
                    line: lineno + 1,
                    message: "continuation line before any field".into(),
                });
            }
            continue;
        }
        if fields.is_empty() {
            first_line = lineno + 1;
        }
        match line.split_once(':') {
            Some((key, value)) => fields.push((key.trim(), value.trim())),
            None => {
                return Err(ParseError {
                    database: source_path.to_string(),
                    record: stanza_index,
                    line: lineno + 1,
                    message: format!("field line without colon: {line:?}"),
                })
            }
        }
    }
    flush(&mut fields, stanza_index, first_line)?;
    Ok(out)
}
