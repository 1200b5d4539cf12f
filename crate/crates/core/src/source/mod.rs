//! Enumerating dataset files from a local directory or an S3-compatible
//! object store, and choosing partial subsets of them.

mod local;
pub mod path;
pub mod pattern;
mod s3;
mod select;
pub mod sigv4;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use s3::{S3Credentials, ACCESS_KEY_ENV, SECRET_KEY_ENV};
pub use select::{select_partial, PartialSelector};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid source locator: {0}")]
    InvalidLocator(String),
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("source {0} contains no files")]
    EmptySource(String),
    #[error("selector reduced {0} entries to none")]
    SelectorMatchesNothing(usize),
    #[error("entry {path} changed since listing: {reason}")]
    EntryChanged { path: String, reason: String },
    #[error("invalid glob {pattern:?}: {source}")]
    InvalidGlob {
        pattern: String,
        #[source]
        source: globset::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Local,
    S3,
}

/// Where the dataset files live.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceLocator {
    pub kind: SourceKind,
    /// Filesystem path for `Local`, `s3://bucket[/prefix]` for `S3`.
    pub root: String,
    /// Base URL of an S3-compatible endpoint; AWS when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Never sign requests, even when credentials are in the environment.
    #[serde(default)]
    pub anonymous: bool,
    /// Include files whose path has a segment starting with '.'.
    #[serde(default)]
    pub include_hidden: bool,
}

impl SourceLocator {
    pub fn local(root: impl Into<String>) -> Self {
        Self {
            kind: SourceKind::Local,
            root: root.into(),
            endpoint: None,
            region: None,
            anonymous: false,
            include_hidden: false,
        }
    }

    pub fn s3(root: impl Into<String>, endpoint: Option<String>) -> Self {
        Self {
            kind: SourceKind::S3,
            root: root.into(),
            endpoint,
            region: None,
            anonymous: true,
            include_hidden: false,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        match self.kind {
            SourceKind::Local => {
                if self.root.is_empty() {
                    return Err(SourceError::InvalidLocator("empty local root".into()));
                }
                if self.root.starts_with("s3://") {
                    return Err(SourceError::InvalidLocator(format!(
                        "local source root {:?} looks like an S3 URI",
                        self.root
                    )));
                }
                if self.endpoint.is_some() {
                    return Err(SourceError::InvalidLocator(
                        "endpoint is only valid for S3 sources".into(),
                    ));
                }
            }
            SourceKind::S3 => {
                s3::parse_s3_uri(&self.root)?;
            }
        }
        if let Some(endpoint) = &self.endpoint {
            let parsed = url::Url::parse(endpoint).map_err(|e| {
                SourceError::InvalidLocator(format!("endpoint {endpoint:?}: {e}"))
            })?;
            if !matches!(parsed.scheme(), "http" | "https") || parsed.host().is_none() {
                return Err(SourceError::InvalidLocator(format!(
                    "endpoint {endpoint:?} is not an absolute http(s) URL"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SourceLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.endpoint) {
            (SourceKind::S3, Some(ep)) => write!(f, "{} @ {}", self.root, ep),
            _ => f.write_str(&self.root),
        }
    }
}

/// One enumerated file or object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub relative_path: String,
    pub size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_modified: Option<DateTime<Utc>>,
}

impl SourceEntry {
    pub fn new(relative_path: impl Into<String>, size_bytes: u64) -> Self {
        Self {
            relative_path: relative_path.into(),
            size_bytes,
            etag: None,
            last_modified: None,
        }
    }
}

/// Entries sorted byte-wise by relative path, without duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInventory {
    pub locator: SourceLocator,
    entries: Vec<SourceEntry>,
    total_bytes: u64,
}

impl SourceInventory {
    /// Sorts the entries and drops duplicate paths (first occurrence wins).
    pub fn new(locator: SourceLocator, mut entries: Vec<SourceEntry>) -> Self {
        entries.sort_by(|a, b| a.relative_path.as_bytes().cmp(b.relative_path.as_bytes()));
        entries.dedup_by(|b, a| a.relative_path == b.relative_path);
        let total_bytes = entries.iter().map(|e| e.size_bytes).sum();
        Self {
            locator,
            entries,
            total_bytes,
        }
    }

    pub fn entries(&self) -> &[SourceEntry] {
        &self.entries
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// An opened source; cheap to share between fetch workers.
pub struct Source {
    locator: SourceLocator,
    backend: Backend,
}

enum Backend {
    Local(local::LocalSource),
    S3(s3::S3Source),
}

impl Source {
    pub fn open(locator: &SourceLocator) -> Result<Self, SourceError> {
        Self::open_with_retry(locator, RetryPolicy::source_default())
    }

    pub fn open_with_retry(locator: &SourceLocator, retry: RetryPolicy) -> Result<Self, SourceError> {
        locator.validate()?;
        let backend = match locator.kind {
            SourceKind::Local => Backend::Local(local::LocalSource::new(locator)),
            SourceKind::S3 => Backend::S3(s3::S3Source::new(locator, retry)?),
        };
        Ok(Self {
            locator: locator.clone(),
            backend,
        })
    }

    pub fn locator(&self) -> &SourceLocator {
        &self.locator
    }

    /// Every regular file under the root, sorted; hidden files excluded unless
    /// the locator asks for them.
    pub fn list(&self) -> Result<SourceInventory, SourceError> {
        let mut entries = match &self.backend {
            Backend::Local(l) => l.list()?,
            Backend::S3(s) => s.list()?,
        };
        if !self.locator.include_hidden {
            entries.retain(|e| !path::is_hidden(&e.relative_path));
        }
        if entries.is_empty() {
            return Err(SourceError::EmptySource(self.locator.to_string()));
        }
        Ok(SourceInventory::new(self.locator.clone(), entries))
    }

    /// Bytes of one listed entry. Fails with `EntryChanged` if the size or
    /// etag no longer matches what the listing reported.
    pub fn fetch(&self, entry: &SourceEntry) -> Result<Vec<u8>, SourceError> {
        let bytes = match &self.backend {
            Backend::Local(l) => l.fetch(entry)?,
            Backend::S3(s) => s.fetch(entry)?,
        };
        if bytes.len() as u64 != entry.size_bytes {
            return Err(SourceError::EntryChanged {
                path: entry.relative_path.clone(),
                reason: format!("expected {} bytes, got {}", entry.size_bytes, bytes.len()),
            });
        }
        Ok(bytes)
    }
}

pub fn list_source(locator: &SourceLocator) -> Result<SourceInventory, SourceError> {
    Source::open(locator)?.list()
}

pub fn fetch_entry(locator: &SourceLocator, entry: &SourceEntry) -> Result<Vec<u8>, SourceError> {
    Source::open(locator)?.fetch(entry)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locator_invariants() {
        assert!(SourceLocator::local("/data").validate().is_ok());
        assert!(SourceLocator::local("").validate().is_err());
        assert!(SourceLocator::s3("s3://bucket/prefix", None).validate().is_ok());
        assert!(SourceLocator::s3("s3:///prefix", None).validate().is_err());
        assert!(SourceLocator::s3("bucket/prefix", None).validate().is_err());
        let bad_ep = SourceLocator::s3("s3://b", Some("ftp://host".into()));
        assert!(bad_ep.validate().is_err());
        let rel_ep = SourceLocator::s3("s3://b", Some("localhost:9000".into()));
        assert!(rel_ep.validate().is_err());
        assert!(SourceLocator::s3("s3://b", Some("http://127.0.0.1:9000".into()))
            .validate()
            .is_ok());
    }

    #[test]
    fn inventory_sorts_bytewise_and_totals() {
        let inv = SourceInventory::new(
            SourceLocator::local("/x"),
            vec![
                SourceEntry::new("b", 2),
                SourceEntry::new("B", 3),
                SourceEntry::new("a", 5),
                SourceEntry::new("a", 7),
            ],
        );
        let paths: Vec<_> = inv.entries().iter().map(|e| e.relative_path.as_str()).collect();
        assert_eq!(paths, ["B", "a", "b"]);
        assert_eq!(inv.total_bytes(), 10);
    }
}
