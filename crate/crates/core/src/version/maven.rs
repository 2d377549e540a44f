use std::cmp::Ordering;

use super::MalformedVersion;
use crate::model::Ecosystem;

/// One token of an archive version, in ascending order of variants:
/// pre-release qualifiers, the release point (also numeric zero and padding),
/// service packs, unknown qualifiers, then positive numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MavenToken {
    /// alpha = 0, beta = 1, milestone = 2, rc = 3, snapshot = 4
    PreRelease(u8),
    Release,
    ServicePack,
    Other(String),
    /// Decimal digits without leading zeros, never "0".
    Number(String),
}

impl MavenToken {
    fn rank(&self) -> u8 {
        match self {
            MavenToken::PreRelease(_) => 0,
            MavenToken::Release => 1,
            MavenToken::ServicePack => 2,
            MavenToken::Other(_) => 3,
            MavenToken::Number(_) => 4,
        }
    }
}

impl Ord for MavenToken {
    fn cmp(&self, other: &Self) -> Ordering {
        use MavenToken::*;
        match (self, other) {
            (PreRelease(a), PreRelease(b)) => a.cmp(b),
            (Other(a), Other(b)) => a.cmp(b),
            (Number(a), Number(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for MavenToken {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn qualifier(word: &str, followed_by_digit: bool) -> MavenToken {
    match word {
        "alpha" => MavenToken::PreRelease(0),
        "beta" => MavenToken::PreRelease(1),
        "milestone" => MavenToken::PreRelease(2),
        "a" if followed_by_digit => MavenToken::PreRelease(0),
        "b" if followed_by_digit => MavenToken::PreRelease(1),
        "m" if followed_by_digit => MavenToken::PreRelease(2),
        "rc" | "cr" => MavenToken::PreRelease(3),
        "snapshot" => MavenToken::PreRelease(4),
        "" | "ga" | "final" | "release" => MavenToken::Release,
        "sp" => MavenToken::ServicePack,
        other => MavenToken::Other(other.to_string()),
    }
}

/// Splits on `.`, `-` and `_` and at digit/letter transitions, then drops
/// trailing release-equivalent tokens.
pub fn tokenize(version: &str) -> Vec<MavenToken> {
    let lower = version.trim().to_ascii_lowercase();
    let mut raw: Vec<String> = Vec::new();
    for part in lower.split(['.', '-', '_']) {
        let mut current = String::new();
        let mut current_digit = None;
        for c in part.chars() {
            let is_digit = c.is_ascii_digit();
            if current_digit.is_some_and(|d| d != is_digit) {
                raw.push(std::mem::take(&mut current));
            }
            current.push(c);
            current_digit = Some(is_digit);
        }
        raw.push(current);
    }

    let mut tokens: Vec<MavenToken> = raw
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
                let digits = t.trim_start_matches('0');
                if digits.is_empty() {
                    MavenToken::Release
                } else {
                    MavenToken::Number(digits.to_string())
                }
            } else {
                let next_digit = raw
                    .get(i + 1)
                    .is_some_and(|n| n.bytes().next().is_some_and(|b| b.is_ascii_digit()));
                qualifier(t, next_digit)
            }
        })
        .collect();
    while tokens.last() == Some(&MavenToken::Release) {
        tokens.pop();
    }
    tokens
}

pub fn compare_maven(a: &str, b: &str) -> Result<Ordering, MalformedVersion> {
    for v in [a, b] {
        if v.trim().is_empty() {
            return Err(MalformedVersion {
                ecosystem: Ecosystem::MavenArchive,
                version: v.to_string(),
                reason: "empty version",
            });
        }
    }
    let (ta, tb) = (tokenize(a), tokenize(b));
    let len = ta.len().max(tb.len());
    let pad = MavenToken::Release;
    for i in 0..len {
        let x = ta.get(i).unwrap_or(&pad);
        let y = tb.get(i).unwrap_or(&pad);
        match x.cmp(y) {
            Ordering::Equal => continue,
            other => return Ok(other),
        }
    }
    Ok(Ordering::Equal)
}
