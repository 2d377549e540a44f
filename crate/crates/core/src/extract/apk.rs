use super::ParseError;
use crate::model::{Ecosystem, PackageClass, PackageRecord};

pub const APK_INSTALLED: &str = "/lib/apk/db/installed";

/// Parses the Alpine installed database: `K:value` lines, one record per
/// blank-line separated block. `P` and `V` are mandatory.
pub fn parse_apk_installed(content: &str) -> Result<Vec<PackageRecord>, ParseError> {
    let mut out = Vec::new();
    let mut record = 0;
    let mut name: Option<&str> = None;
    let mut version: Option<&str> = None;
    let mut started = false;
    let mut start_line = 0;

    let finish = |name: Option<&str>, version: Option<&str>, record: usize, line: usize| {
        let err = |message: &str| ParseError {
            database: APK_INSTALLED.to_string(),
            record,
            line,
            message: message.to_string(),
        };
        let name = name
            .filter(|n| !n.is_empty())
            .ok_or_else(|| err("record has no P: line"))?;
        let version = version
            .filter(|v| !v.is_empty())
            .ok_or_else(|| err("record has no V: line"))?;
        Ok::<_, ParseError>(PackageRecord {
            name: name.to_string(),
            version: version.to_string(),
            ecosystem: Ecosystem::Apk,
            class: PackageClass::Os,
            source_path: APK_INSTALLED.to_string(),
        })
    };

    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if started {
                out.push(finish(name, version, record, start_line)?);
                record += 1;
                name = None;
                version = None;
                started = false;
            }
            continue;
        }
        let bytes = line.as_bytes();
        if bytes.len() < 2 || bytes[1] != b':' {
            return Err(ParseError {
                database: APK_INSTALLED.to_string(),
                record,
                line: lineno + 1,
                message: format!("expected K:value, got {line:?}"),
            });
        }
        if !started {
            started = true;
            start_line = lineno + 1;
        }
        let value = &line[2..];
        match bytes[0] {
            b'P' => name = Some(value),
            b'V' => version = Some(value),
            _ => {}
        }
    }
    if started {
        out.push(finish(name, version, record, start_line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let recs = parse_apk_installed("P:busybox\nV:1.31.1-r9\n\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(
            (recs[0].name.as_str(), recs[0].version.as_str()),
            ("busybox", "1.31.1-r9")
        );
        assert_eq!((recs[0].ecosystem, recs[0].class), (Ecosystem::Apk, PackageClass::Os));
    }

    #[test]
    fn missing_version_is_error() {
        let err = parse_apk_installed("P:a\nV:1\n\nC:Q1abc\nP:b\nA:x86_64\n").unwrap_err();
        assert_eq!(err.record, 1);
        assert!(err.message.contains("V:"));
    }

    #[test]
    fn records_in_file_order() {
        let recs =
            parse_apk_installed("C:Q1x\nP:musl\nV:1.1.24-r2\nT:the musl c library\n\nP:zlib\nV:1.2.11-r3").unwrap();
        assert_eq!(
            recs.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(),
            ["musl", "zlib"]
        );
    }

    #[test]
    fn junk_line() {
        assert!(parse_apk_installed("P:a\nnonsense\n").is_err());
        assert!(parse_apk_installed("").unwrap().is_empty());
    }
}
