//! Per-split `metadata.csv` manifests.
//!
//! Output is RFC 4180 CSV in UTF-8 with LF line endings. A field is quoted
//! when it contains a comma, a double quote, CR or LF; quotes inside quoted
//! fields are doubled.

use std::collections::HashSet;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::{MergedAnnotations, MetadataError};
use crate::image::ImageRecord;
use crate::source::path;

pub const FILE_NAME_COLUMN: &str = "file_name";
pub const MANIFEST_FILE_NAME: &str = "metadata.csv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub file_name: String,
    /// Aligned with `SplitManifest::header[1..]`.
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub split: String,
    pub header: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl SplitManifest {
    /// Checks the header/row shape and file_name uniqueness.
    pub fn validate(&self) -> Result<(), MetadataError> {
        if self.header.first().map(String::as_str) != Some(FILE_NAME_COLUMN) {
            return Err(MetadataError::MalformedManifest(format!(
                "first header column must be {FILE_NAME_COLUMN:?}"
            )));
        }
        let mut seen = HashSet::new();
        for row in &self.rows {
            if row.values.len() + 1 != self.header.len() {
                return Err(MetadataError::MalformedManifest(format!(
                    "row {:?} has {} fields, header has {}",
                    row.file_name,
                    row.values.len() + 1,
                    self.header.len()
                )));
            }
            if !seen.insert(row.file_name.as_str()) {
                return Err(MetadataError::DuplicateFileName(row.file_name.clone()));
            }
        }
        Ok(())
    }

    /// Annotation columns, i.e. the header without `file_name`.
    pub fn columns(&self) -> &[String] {
        &self.header[1..]
    }

    /// Values of one annotation column across all rows.
    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r.values[index].as_str())
    }
}

/// How a converted image finds its annotation row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKey {
    /// Source file name without extension, e.g. `plate1_A1`.
    #[default]
    Stem,
    /// Source file name with extension, e.g. `plate1_A1.tif`.
    FileName,
    /// Source path relative to the source root.
    SourcePath,
}

impl ImageKey {
    pub fn key_for(self, img: &ImageRecord) -> String {
        match self {
            ImageKey::Stem => path::strip_extension(path::basename(&img.source_path)).to_string(),
            ImageKey::FileName => path::basename(&img.source_path).to_string(),
            ImageKey::SourcePath => img.source_path.clone(),
        }
    }
}

/// One row per image, sorted by file name (relative to the split directory).
///
/// Annotation columns appear in merged-column order, restricted to columns
/// with at least one value in this split; structure columns recorded by the
/// converter follow. A merged value takes precedence over a structure value
/// of the same name.
pub fn build_manifest<F>(
    split: &str,
    converted: &[&ImageRecord],
    merged: &MergedAnnotations,
    key_fn: F,
) -> Result<SplitManifest, MetadataError>
where
    F: Fn(&ImageRecord) -> String,
{
    if converted.is_empty() {
        return Err(MetadataError::InvalidInput(format!("split {split:?} has no images")));
    }
    let prefix = format!("{split}/");
    let mut images: Vec<(String, String, &ImageRecord)> = converted
        .iter()
        .map(|img| {
            let file_name = img
                .relative_path
                .strip_prefix(&prefix)
                .unwrap_or(&img.relative_path)
                .to_string();
            (file_name, key_fn(img), *img)
        })
        .collect();
    images.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    for pair in images.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(MetadataError::DuplicateFileName(pair[0].0.clone()));
        }
    }

    let mut columns: IndexSet<String> = merged
        .columns
        .iter()
        .filter(|c| images.iter().any(|(_, key, _)| merged.get(key, c).is_some()))
        .cloned()
        .collect();
    for (_, _, img) in &images {
        for name in img.derived.keys() {
            columns.insert(name.clone());
        }
    }

    let rows = images
        .iter()
        .map(|(file_name, key, img)| ManifestRow {
            file_name: file_name.clone(),
            values: columns
                .iter()
                .map(|c| {
                    merged
                        .get(key, c)
                        .map(|v| v.value.clone())
                        .or_else(|| img.derived.get(c).cloned())
                        .unwrap_or_default()
                })
                .collect(),
        })
        .collect();

    let mut header = vec![FILE_NAME_COLUMN.to_string()];
    header.extend(columns);
    let manifest = SplitManifest {
        split: split.to_string(),
        header,
        rows,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn write_field(out: &mut Vec<u8>, field: &str) {
    if field.contains([',', '"', '\n', '\r']) {
        out.push(b'"');
        for b in field.bytes() {
            if b == b'"' {
                out.push(b'"');
            }
            out.push(b);
        }
        out.push(b'"');
    } else {
        out.extend_from_slice(field.as_bytes());
    }
}

fn write_record<'a>(out: &mut Vec<u8>, fields: impl Iterator<Item = &'a str>) {
    for (i, f) in fields.enumerate() {
        if i > 0 {
            out.push(b',');
        }
        write_field(out, f);
    }
    out.push(b'\n');
}

pub fn serialize_manifest(m: &SplitManifest) -> Vec<u8> {
    let mut out = Vec::new();
    write_record(&mut out, m.header.iter().map(String::as_str));
    for row in &m.rows {
        write_record(
            &mut out,
            std::iter::once(row.file_name.as_str()).chain(row.values.iter().map(String::as_str)),
        );
    }
    out
}

/// Parse manifest bytes written by [`serialize_manifest`] (or any RFC 4180
/// writer) and check the manifest invariants.
pub fn parse_manifest(split: &str, bytes: &[u8]) -> Result<SplitManifest, MetadataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(bytes);
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(r) => r
            .map_err(|e| MetadataError::MalformedManifest(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect(),
        None => return Err(MetadataError::MalformedManifest("empty manifest".into())),
    };
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| MetadataError::MalformedManifest(e.to_string()))?;
        let mut fields = record.iter().map(str::to_string);
        let file_name = fields.next().unwrap_or_default();
        rows.push(ManifestRow {
            file_name,
            values: fields.collect(),
        });
    }
    let manifest = SplitManifest {
        split: split.to_string(),
        header,
        rows,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::{merge, AnnotationSource, AnnotationTable};
    use indexmap::IndexMap;
    use proptest::prelude::*;

    fn image(path: &str, source: &str) -> ImageRecord {
        ImageRecord {
            relative_path: path.into(),
            format: crate::image::ImageFormat::Png16,
            width: 1,
            height: 1,
            size_bytes: 0,
            sha256: [0; 32],
            source_path: source.into(),
            derived: IndexMap::new(),
        }
    }

    #[test]
    fn annotated_and_unannotated_rows() {
        let mut t = AnnotationTable::new(AnnotationSource::Idr);
        t.insert_row("a", [("gene", "KIF11")]);
        let merged = merge(&[t]);
        let b = image("train/b.png", "b.tif");
        let a = image("train/a.png", "a.tif");
        let m = build_manifest("train", &[&b, &a], &merged, |i| ImageKey::Stem.key_for(i)).unwrap();
        assert_eq!(m.header, ["file_name", "gene"]);
        assert_eq!(
            m.rows,
            vec![
                ManifestRow { file_name: "a.png".into(), values: vec!["KIF11".into()] },
                ManifestRow { file_name: "b.png".into(), values: vec!["".into()] },
            ]
        );
    }

    #[test]
    fn unannotated_split_has_only_file_name() {
        let mut t = AnnotationTable::new(AnnotationSource::Idr);
        t.insert_row("elsewhere", [("gene", "x")]);
        let a = image("test/a.png", "a.tif");
        let m = build_manifest("test", &[&a], &merge(&[t]), |i| ImageKey::Stem.key_for(i)).unwrap();
        assert_eq!(m.header, ["file_name"]);
        assert_eq!(m.rows.len(), 1);
    }

    #[test]
    fn duplicate_file_names_rejected() {
        let a = image("train/a.png", "x/a.tif");
        let b = image("train/a.png", "y/a.tif");
        let err = build_manifest("train", &[&a, &b], &MergedAnnotations::default(), |i| {
            ImageKey::Stem.key_for(i)
        })
        .unwrap_err();
        assert!(matches!(err, MetadataError::DuplicateFileName(n) if n == "a.png"));
    }

    #[test]
    fn derived_columns_follow_annotations() {
        let mut a = image("train/s_z0.png", "s.tif");
        a.derived.insert("z_plane".into(), "0".into());
        let mut b = image("train/s_z1.png", "s.tif");
        b.derived.insert("z_plane".into(), "1".into());
        let mut t = AnnotationTable::new(AnnotationSource::User);
        t.insert_row("s", [("stain", "DAPI")]);
        let m = build_manifest("train", &[&a, &b], &merge(&[t]), |i| ImageKey::Stem.key_for(i)).unwrap();
        assert_eq!(m.header, ["file_name", "stain", "z_plane"]);
        assert_eq!(m.rows[1].values, ["DAPI", "1"]);
    }

    #[test]
    fn image_keys() {
        let img = image("train/x.png", "plates/p1/A1.tif");
        assert_eq!(ImageKey::Stem.key_for(&img), "A1");
        assert_eq!(ImageKey::FileName.key_for(&img), "A1.tif");
        assert_eq!(ImageKey::SourcePath.key_for(&img), "plates/p1/A1.tif");
    }

    #[test]
    fn quoting_rule() {
        let mut out = Vec::new();
        write_field(&mut out, "a,\"b");
        assert_eq!(out, b"\"a,\"\"b\"");
        let mut plain = Vec::new();
        write_field(&mut plain, "plain text");
        assert_eq!(plain, b"plain text");
    }

    #[test]
    fn one_row_is_two_lines() {
        let m = SplitManifest {
            split: "train".into(),
            header: vec!["file_name".into(), "gene".into()],
            rows: vec![ManifestRow { file_name: "a.png".into(), values: vec!["x".into()] }],
        };
        let bytes = serialize_manifest(&m);
        assert_eq!(bytes, b"file_name,gene\na.png,x\n");
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 2);
    }

    #[test]
    fn parse_rejects_bad_manifests() {
        assert!(parse_manifest("t", b"").is_err());
        assert!(parse_manifest("t", b"name,x\na,b\n").is_err());
        assert!(parse_manifest("t", b"file_name,x\na,b,c\n").is_err());
        assert!(matches!(
            parse_manifest("t", b"file_name\na\na\n"),
            Err(MetadataError::DuplicateFileName(_))
        ));
    }

    /// Minimal RFC 4180 reader used as an independent oracle.
    fn oracle_parse(bytes: &[u8]) -> Vec<Vec<String>> {
        let text = std::str::from_utf8(bytes).unwrap();
        let mut records = Vec::new();
        let mut record = Vec::new();
        let mut field = String::new();
        let mut chars = text.chars().peekable();
        let mut quoted = false;
        while let Some(c) = chars.next() {
            if quoted {
                if c == '"' {
                    if chars.peek() == Some(&'"') {
                        field.push('"');
                        chars.next();
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push(c);
                }
            } else {
                match c {
                    '"' => quoted = true,
                    ',' => record.push(std::mem::take(&mut field)),
                    '\n' => {
                        record.push(std::mem::take(&mut field));
                        records.push(std::mem::take(&mut record));
                    }
                    _ => field.push(c),
                }
            }
        }
        assert!(field.is_empty() && record.is_empty(), "missing final LF");
        records
    }

    fn arb_manifest() -> impl Strategy<Value = SplitManifest> {
        let value = "(\\PC|[,\"\n\r ]){0,8}";
        (1usize..5, 1usize..10).prop_flat_map(move |(ncols, nrows)| {
            let header = proptest::collection::vec("[a-z]{1,5}", ncols - 1);
            let rows = proptest::collection::btree_map(
                "(\\PC|[,\"\n ]){1,8}",
                proptest::collection::vec(value, ncols - 1),
                nrows,
            );
            (header, rows).prop_map(|(cols, rows)| {
                let mut header = vec![FILE_NAME_COLUMN.to_string()];
                header.extend(cols);
                SplitManifest {
                    split: "train".into(),
                    header,
                    rows: rows
                        .into_iter()
                        .map(|(file_name, values)| ManifestRow { file_name, values })
                        .collect(),
                }
            })
        })
    }

    proptest! {
        #[test]
        fn roundtrip_through_both_parsers(m in arb_manifest()) {
            let bytes = serialize_manifest(&m);
            prop_assert!(!bytes.windows(2).any(|w| w == b"\r\n") || m.rows.iter().any(|r| r.values.iter().chain([&r.file_name]).any(|v| v.contains('\r'))));
            prop_assert_eq!(parse_manifest("train", &bytes).unwrap(), m.clone());
            let mut expected = vec![m.header.clone()];
            for r in &m.rows {
                let mut rec = vec![r.file_name.clone()];
                rec.extend(r.values.iter().cloned());
                expected.push(rec);
            }
            prop_assert_eq!(oracle_parse(&bytes), expected);
        }
    }
}
