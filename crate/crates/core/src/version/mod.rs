//! Version ordering per package ecosystem.

mod dpkg;
mod maven;

use std::cmp::Ordering;

use crate::model::Ecosystem;

pub use dpkg::{compare_apk, compare_dpkg, DebianVersion};
pub use maven::{compare_maven, tokenize as tokenize_maven, MavenToken};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed {ecosystem:?} version {version:?}: {reason}")]
pub struct MalformedVersion {
    pub ecosystem: Ecosystem,
    pub version: String,
    pub reason: &'static str,
}

/// Orders two version strings under the rules of `ecosystem`.
pub fn compare_versions(a: &str, b: &str, ecosystem: Ecosystem) -> Result<Ordering, MalformedVersion> {
    match ecosystem {
        Ecosystem::Dpkg => compare_dpkg(a, b),
        Ecosystem::Apk => compare_apk(a, b),
        Ecosystem::MavenArchive => compare_maven(a, b),
    }
}
