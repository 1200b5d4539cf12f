//! Per-image annotations: harvesting from IDR tables, OMERO and user tables,
//! merging them with provenance, and writing per-split CSV manifests.

mod manifest;
mod merge;
mod omero;
mod table;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{
    build_manifest, parse_manifest, serialize_manifest, ImageKey, ManifestRow, SplitManifest,
    FILE_NAME_COLUMN, MANIFEST_FILE_NAME,
};
pub use merge::{merge, AnnotatedValue, MergedAnnotations};
pub use omero::{harvest_omero, OmeroFailure, OmeroHarvest, OmeroOptions};
pub use table::{harvest_idr, harvest_table, harvest_user, HarvestedTable};

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("key column {0:?} not found in table header")]
    MissingKeyColumn(String),
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("metadata source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("duplicate file_name {0:?} in manifest")]
    DuplicateFileName(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnotationSource {
    #[serde(rename = "IDR")]
    Idr,
    #[serde(rename = "OMERO")]
    Omero,
    #[serde(rename = "USER")]
    User,
}

impl fmt::Display for AnnotationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationSource::Idr => "IDR",
            AnnotationSource::Omero => "OMERO",
            AnnotationSource::User => "USER",
        })
    }
}

/// Key-value annotations for a set of images, all from one source.
///
/// Column names are sanitized on insertion; rows keep insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationTable {
    pub source: AnnotationSource,
    rows: IndexMap<String, IndexMap<String, String>>,
}

impl AnnotationTable {
    pub fn new(source: AnnotationSource) -> Self {
        Self {
            source,
            rows: IndexMap::new(),
        }
    }

    /// Replace the row for `key` with the given raw column/value pairs;
    /// returns true if a row for `key` already existed.
    ///
    /// Raw names are sanitized and made unique within the row.
    pub fn insert_row<K, V>(&mut self, key: impl Into<String>, pairs: impl IntoIterator<Item = (K, V)>) -> bool
    where
        K: AsRef<str>,
        V: Into<String>,
    {
        let pairs: Vec<(K, V)> = pairs.into_iter().collect();
        let names = unique_columns(pairs.iter().map(|(k, _)| k.as_ref()));
        let row: IndexMap<String, String> = names
            .into_iter()
            .zip(pairs)
            .map(|(name, (_, v))| (name, v.into()))
            .collect();
        self.rows.insert(key.into(), row).is_some()
    }

    /// Insert a row whose column names are already sanitized and unique.
    pub(crate) fn insert_sanitized_row(&mut self, key: String, row: IndexMap<String, String>) -> bool {
        debug_assert!(row.keys().all(|k| sanitize_column(k) == *k));
        self.rows.insert(key, row).is_some()
    }

    pub fn rows(&self) -> &IndexMap<String, IndexMap<String, String>> {
        &self.rows
    }

    pub fn get(&self, key: &str, column: &str) -> Option<&str> {
        self.rows.get(key)?.get(column).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Lowercase ASCII `[a-z0-9_]`, runs of other characters collapsed to one
/// '_', no leading/trailing '_', never empty, never starting with a digit.
pub fn sanitize_column(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }
    if out.is_empty() {
        return "column".to_string();
    }
    if out.as_bytes()[0].is_ascii_digit() {
        out.insert_str(0, "c_");
    }
    out
}

/// Sanitize a sequence of raw names, resolving collisions with `_2`, `_3`, …
/// in first-appearance order.
pub fn unique_columns<'a>(raws: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let raws: Vec<&str> = raws.into_iter().collect();
    let base: Vec<String> = raws.iter().map(|r| sanitize_column(r)).collect();
    let mut taken: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(base.len());
    for (i, name) in base.iter().enumerate() {
        // Suffixes never take a name that another raw column sanitizes to.
        let candidate = if taken.contains(name) || base[..i].contains(name) {
            let mut n = 2;
            loop {
                let c = format!("{name}_{n}");
                if !taken.contains(&c) && !base.contains(&c) {
                    break c;
                }
                n += 1;
            }
        } else {
            name.clone()
        };
        taken.insert(candidate.clone());
        out.push(candidate);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize_column("Image Name"), "image_name");
        assert_eq!(sanitize_column("Gene"), "gene");
        assert_eq!(sanitize_column("  Gene  Symbol (HGNC) "), "gene_symbol_hgnc");
        assert_eq!(sanitize_column("3D"), "c_3d");
        assert_eq!(sanitize_column("---"), "column");
        assert_eq!(sanitize_column("Ωmega"), "mega");
        assert_eq!(sanitize_column("snake_case_ok"), "snake_case_ok");
    }

    #[test]
    fn collisions_get_numbered_suffixes() {
        assert_eq!(unique_columns(["Gene", "gene", "GENE"]), ["gene", "gene_2", "gene_3"]);
        // A raw "gene_2" later in the list keeps its own name.
        assert_eq!(unique_columns(["Gene", "gene", "gene_2"]), ["gene", "gene_3", "gene_2"]);
    }

    #[test]
    fn insert_row_sanitizes() {
        let mut t = AnnotationTable::new(AnnotationSource::User);
        assert!(!t.insert_row("a", [("Cell Line", "HeLa"), ("cell-line", "x")]));
        assert_eq!(t.get("a", "cell_line"), Some("HeLa"));
        assert_eq!(t.get("a", "cell_line_2"), Some("x"));
        assert!(t.insert_row("a", [("k", "v")]));
        assert_eq!(t.rows()["a"].len(), 1);
    }

    proptest! {
        #[test]
        fn sanitize_is_idempotent_and_valid(raw in "\\PC{0,24}") {
            let once = sanitize_column(&raw);
            prop_assert_eq!(sanitize_column(&once), once.clone());
            prop_assert!(!once.is_empty());
            prop_assert!(once.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'));
            prop_assert!(!once.as_bytes()[0].is_ascii_digit());
        }

        #[test]
        fn unique_columns_are_unique(raws in proptest::collection::vec("[A-Ca-c _2]{0,4}", 0..12)) {
            let out = unique_columns(raws.iter().map(String::as_str));
            let set: std::collections::HashSet<_> = out.iter().collect();
            prop_assert_eq!(set.len(), out.len());
            for name in &out {
                prop_assert_eq!(&sanitize_column(name), name);
            }
        }
    }
}
