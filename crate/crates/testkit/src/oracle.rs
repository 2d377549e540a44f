//! Version-ordering tables: `left right Less|Equal|Greater` per line.

use std::cmp::Ordering;

/// Generated with `dpkg --compare-versions`.
pub const DPKG_ORACLE: &str = include_str!("../data/dpkg_oracle.txt");
/// Tokenized by hand following the Maven ComparableVersion rules.
pub const MAVEN_ORACLE: &str = include_str!("../data/maven_oracle.txt");

pub fn parse_table(text: &str) -> Vec<(String, String, Ordering)> {
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 3, "bad table line {l:?}");
            let ord = match f[2] {
                "Less" => Ordering::Less,
                "Equal" => Ordering::Equal,
                "Greater" => Ordering::Greater,
                other => panic!("bad ordering {other}"),
            };
            (f[0].to_string(), f[1].to_string(), ord)
        })
        .collect()
}

pub fn dpkg_version() -> &'static str {
    "([0-9]:)?[0-9]{1,3}([.+~][0-9a-z]{1,3}){0,3}(-[0-9a-z]{1,3}([.+~][0-9a-z]{1,2}){0,2})?"
}

pub fn apk_version() -> &'static str {
    "[0-9]{1,2}(\\.[0-9]{1,2}){0,3}[a-z]?(_(alpha|beta|pre|rc)[0-9]?)?(-r[0-9]{1,2})?"
}

pub fn maven_version() -> &'static str {
    "[0-9]{1,3}(\\.[0-9]{1,3}){0,3}([-.](alpha|beta|m|rc|cr|snapshot|sp|ga|final|foo|bar)[0-9]{0,2})?"
}
