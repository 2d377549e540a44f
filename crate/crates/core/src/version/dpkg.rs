use std::cmp::Ordering;

use super::MalformedVersion;
use crate::model::Ecosystem;

/// `[epoch:]upstream[-revision]`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebianVersion<'a> {
    pub epoch: u64,
    pub upstream: &'a str,
    pub revision: &'a str,
}

impl<'a> DebianVersion<'a> {
    pub fn parse(s: &'a str) -> Result<Self, MalformedVersion> {
        let bad = |reason| MalformedVersion {
            ecosystem: Ecosystem::Dpkg,
            version: s.to_string(),
            reason,
        };
        let s_trim = s.trim();
        if s_trim.is_empty() {
            return Err(bad("empty version"));
        }
        let (epoch, rest) = match s_trim.split_once(':') {
            Some((e, rest)) => {
                if e.is_empty() || !e.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad("epoch must be a non-empty run of digits"));
                }
                let epoch = e.parse::<u64>().map_err(|_| bad("epoch out of range"))?;
                (epoch, rest)
            }
            None => (0, s_trim),
        };
        let (upstream, revision) = match rest.rfind('-') {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            None => (rest, ""),
        };
        if upstream.is_empty() {
            return Err(bad("empty upstream version"));
        }
        Ok(DebianVersion {
            epoch,
            upstream,
            revision,
        })
    }
}

impl Ord for DebianVersion<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.epoch
            .cmp(&other.epoch)
            .then_with(|| verrevcmp(self.upstream, other.upstream))
            .then_with(|| verrevcmp(self.revision, other.revision))
    }
}

impl PartialOrd for DebianVersion<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn compare_dpkg(a: &str, b: &str) -> Result<Ordering, MalformedVersion> {
    Ok(DebianVersion::parse(a)?.cmp(&DebianVersion::parse(b)?))
}

// Weight of a byte in the non-digit phase; end of string weighs 0.
fn order(c: Option<u8>) -> i32 {
    match c {
        None => 0,
        Some(c) if c.is_ascii_digit() => 0,
        Some(c) if c.is_ascii_alphabetic() => c as i32,
        Some(b'~') => -1,
        Some(c) => c as i32 + 256,
    }
}

/// Alternating non-digit / digit segment comparison.
pub(super) fn verrevcmp(a: &str, b: &str) -> Ordering {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    let digit_at = |s: &[u8], k: usize| s.get(k).is_some_and(u8::is_ascii_digit);

    while i < a.len() || j < b.len() {
        while (i < a.len() && !digit_at(a, i)) || (j < b.len() && !digit_at(b, j)) {
            let ac = order(a.get(i).copied());
            let bc = order(b.get(j).copied());
            if ac != bc {
                return ac.cmp(&bc);
            }
            i += 1;
            j += 1;
        }
        while a.get(i) == Some(&b'0') {
            i += 1;
        }
        while b.get(j) == Some(&b'0') {
            j += 1;
        }
        let mut first_diff = Ordering::Equal;
        while digit_at(a, i) && digit_at(b, j) {
            if first_diff == Ordering::Equal {
                first_diff = a[i].cmp(&b[j]);
            }
            i += 1;
            j += 1;
        }
        if digit_at(a, i) {
            return Ordering::Greater;
        }
        if digit_at(b, j) {
            return Ordering::Less;
        }
        if first_diff != Ordering::Equal {
            return first_diff;
        }
    }
    Ordering::Equal
}

fn split_apk(s: &str) -> Result<(String, u64), MalformedVersion> {
    let s = s.trim();
    if s.is_empty() {
        return Err(MalformedVersion {
            ecosystem: Ecosystem::Apk,
            version: s.to_string(),
            reason: "empty version",
        });
    }
    let (upstream, release) = match s.rfind("-r") {
        Some(i) if i + 2 < s.len() && s[i + 2..].bytes().all(|b| b.is_ascii_digit()) => {
            let release = s[i + 2..].parse::<u64>().map_err(|_| MalformedVersion {
                ecosystem: Ecosystem::Apk,
                version: s.to_string(),
                reason: "release number out of range",
            })?;
            (&s[..i], release)
        }
        _ => (s, 0),
    };
    // Pre-release suffixes sort below the bare release; their names are
    // already in apk's order (alpha < beta < pre < rc).
    let mut upstream = upstream.to_string();
    for suffix in ["_alpha", "_beta", "_pre", "_rc"] {
        upstream = upstream.replace(suffix, &format!("~{}", &suffix[1..]));
    }
    Ok((upstream, release))
}

/// Alpine ordering: segment comparison of the upstream part, then the
/// numeric `-rN` release.
pub fn compare_apk(a: &str, b: &str) -> Result<Ordering, MalformedVersion> {
    let (ua, ra) = split_apk(a)?;
    let (ub, rb) = split_apk(b)?;
    Ok(verrevcmp(&ua, &ub).then(ra.cmp(&rb)))
}
