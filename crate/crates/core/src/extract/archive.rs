use std::io::{Cursor, Read};

use super::{ExtractWarning, FileTree};
use crate::model::{Ecosystem, PackageClass, PackageRecord, UNKNOWN_VERSION};

/// A `group:artifact` pattern. `*` matches any run of characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinatePattern(String);

impl CoordinatePattern {
    pub fn new(pattern: impl Into<String>) -> Self {
        CoordinatePattern(pattern.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, coordinate: &str) -> bool {
        glob_match(self.0.as_bytes(), coordinate.as_bytes())
    }
}

fn glob_match(pattern: &[u8], text: &[u8]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pattern.len() && pattern[p] == b'*' {
            star = Some((p, t));
            p += 1;
        } else if p < pattern.len() && pattern[p] == text[t] {
            p += 1;
            t += 1;
        } else if let Some((sp, st)) = star {
            p = sp + 1;
            t = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(|&c| c == b'*')
}

pub fn is_archive_path(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    lower.ends_with(".jar") || lower.ends_with(".war") || lower.ends_with(".ear")
}

fn is_container_archive(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    lower.ends_with(".war") || lower.ends_with(".ear")
}

fn parse_properties(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with('!'))
        .filter_map(|l| {
            let i = l.find(['=', ':'])?;
            Some((l[..i].trim().to_string(), l[i + 1..].trim().to_string()))
        })
        .collect()
}

fn is_pom_properties(name: &str) -> bool {
    // META-INF/maven/<group>/<artifact>/pom.properties
    let parts: Vec<&str> = name.split('/').collect();
    parts.len() == 5 && parts[0] == "META-INF" && parts[1] == "maven" && parts[4] == "pom.properties"
}

fn file_stem(path: &str) -> &str {
    let base = path.rsplit(['/', '!']).next().unwrap_or(path);
    match base.rfind('.') {
        Some(i) if i > 0 => &base[..i],
        _ => base,
    }
}

fn classify(name: &str, selectors: &[CoordinatePattern]) -> PackageClass {
    if selectors.iter().any(|s| s.matches(name)) {
        PackageClass::Application
    } else {
        PackageClass::Library
    }
}

/// Reads one archive's embedded build metadata. Nested archives are read
/// when `depth` is 0 and the outer archive is a war or ear.
fn scan_archive(
    bytes: &[u8],
    source_path: &str,
    depth: usize,
    selectors: &[CoordinatePattern],
    out: &mut Vec<PackageRecord>,
    warnings: &mut Vec<ExtractWarning>,
) {
    let mut zip = match zip::ZipArchive::new(Cursor::new(bytes)) {
        Ok(z) => z,
        Err(e) => {
            warnings.push(ExtractWarning::CorruptArchive {
                path: source_path.to_string(),
                reason: e.to_string(),
            });
            return;
        }
    };
    let mut found = Vec::new();
    let mut nested = Vec::new();
    for i in 0..zip.len() {
        let mut entry = match zip.by_index(i) {
            Ok(e) => e,
            Err(e) => {
                warnings.push(ExtractWarning::CorruptArchive {
                    path: source_path.to_string(),
                    reason: e.to_string(),
                });
                return;
            }
        };
        let name = entry.name().to_string();
        let wanted_nested =
            depth == 0 && is_container_archive(source_path) && is_archive_path(&name) && entry.is_file();
        if !is_pom_properties(&name) && !wanted_nested {
            continue;
        }
        let mut buf = Vec::new();
        if let Err(e) = entry.read_to_end(&mut buf) {
            warnings.push(ExtractWarning::CorruptArchive {
                path: source_path.to_string(),
                reason: e.to_string(),
            });
            return;
        }
        if wanted_nested {
            nested.push((name, buf));
        } else {
            let props = parse_properties(&String::from_utf8_lossy(&buf));
            let get = |k: &str| props.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
            if let (Some(g), Some(a), Some(v)) = (get("groupId"), get("artifactId"), get("version")) {
                if !g.is_empty() && !a.is_empty() && !v.is_empty() {
                    found.push((format!("{g}:{a}"), v));
                }
            }
        }
    }

    if found.is_empty() {
        warnings.push(ExtractWarning::MissingMetadata {
            path: source_path.to_string(),
        });
        let stem = file_stem(source_path);
        found.push((
            if stem.is_empty() {
                source_path.to_string()
            } else {
                stem.to_string()
            },
            UNKNOWN_VERSION.to_string(),
        ));
    }
    for (name, version) in found {
        let class = classify(&name, selectors);
        out.push(PackageRecord {
            name,
            version,
            ecosystem: Ecosystem::MavenArchive,
            class,
            source_path: source_path.to_string(),
        });
    }
    for (name, buf) in nested {
        let nested_path = format!("{source_path}!/{name}");
        scan_archive(&buf, &nested_path, depth + 1, selectors, out, warnings);
    }
}

/// Finds `.jar`, `.war` and `.ear` files in the view and reads their
/// `pom.properties`. Unreadable archives are skipped with a warning.
pub fn extract_archive_packages(
    fs: &FileTree,
    app_selectors: &[CoordinatePattern],
) -> (Vec<PackageRecord>, Vec<ExtractWarning>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (path, bytes) in fs.files() {
        if is_archive_path(path) {
            scan_archive(bytes, path, 0, app_selectors, &mut out, &mut warnings);
        }
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn globbing() {
        let p = CoordinatePattern::new("com.example:*");
        assert!(p.matches("com.example:myapp"));
        assert!(!p.matches("org.example:myapp"));
        assert!(CoordinatePattern::new("com.example:myapp").matches("com.example:myapp"));
        assert!(!CoordinatePattern::new("com.example:myapp").matches("com.example:myapp2"));
        assert!(CoordinatePattern::new("*:app-*").matches("x.y:app-core"));
    }

    #[test]
    fn properties_and_paths() {
        let props = parse_properties("#Generated\ngroupId=mysql\nartifactId = mysql-connector-java\nversion=5.1.38\n");
        assert_eq!(props.len(), 3);
        assert_eq!(props[1], ("artifactId".into(), "mysql-connector-java".into()));
        assert!(is_pom_properties(
            "META-INF/maven/mysql/mysql-connector-java/pom.properties"
        ));
        assert!(!is_pom_properties("META-INF/maven/pom.properties"));
        assert_eq!(file_stem("/app/lib/foo-1.2.jar"), "foo-1.2");
        assert_eq!(file_stem("/app/x.war!/WEB-INF/lib/bar.jar"), "bar");
    }
}
