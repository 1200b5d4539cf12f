use indexmap::IndexMap;
use log::warn;

use super::{sanitize_column, unique_columns, AnnotationSource, AnnotationTable, MetadataError};

/// A parsed table plus how many rows repeated an earlier key.
#[derive(Clone, Debug)]
pub struct HarvestedTable {
    pub table: AnnotationTable,
    pub duplicate_keys: usize,
}

/// Tab if the header line contains one, comma otherwise.
fn detect_delimiter(bytes: &[u8]) -> u8 {
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    if bytes[..header_end].contains(&b'\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parse a CSV/TSV bulk-annotation table keyed by `key_column`.
///
/// The key column matches the raw header name, or failing that its sanitized
/// form. Empty cells are left out of the row. Rows repeating a key replace
/// the earlier row.
pub fn harvest_table(
    bytes: &[u8],
    key_column: &str,
    source: AnnotationSource,
) -> Result<HarvestedTable, MetadataError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(MetadataError::MalformedTable("table has no header row".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(bytes))
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| MetadataError::MalformedTable(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let key_idx = headers
        .iter()
        .position(|h| h == key_column)
        .or_else(|| {
            let wanted = sanitize_column(key_column);
            headers.iter().position(|h| sanitize_column(h) == wanted)
        })
        .ok_or_else(|| MetadataError::MissingKeyColumn(key_column.to_string()))?;

    let value_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != key_idx).collect();
    let names = unique_columns(value_idx.iter().map(|&i| headers[i].as_str()));

    let mut table = AnnotationTable::new(source);
    let mut duplicate_keys = 0;
    for record in reader.records() {
        let record = record.map_err(|e| MetadataError::MalformedTable(e.to_string()))?;
        let key = record.get(key_idx).unwrap_or("").trim();
        if key.is_empty() {
            warn!("skipping {source} table row with empty key at {:?}", record.position());
            continue;
        }
        let row: IndexMap<String, String> = value_idx
            .iter()
            .zip(&names)
            .filter_map(|(&i, name)| {
                let v = record.get(i).unwrap_or("");
                (!v.is_empty()).then(|| (name.clone(), v.to_string()))
            })
            .collect();
        if table.insert_sanitized_row(key.to_string(), row) {
            duplicate_keys += 1;
        }
    }
    if duplicate_keys > 0 {
        warn!("{source} table: {duplicate_keys} rows repeated an earlier key; later rows won");
    }
    Ok(HarvestedTable {
        table,
        duplicate_keys,
    })
}

/// IDR bulk-annotation export.
pub fn harvest_idr(bytes: &[u8], key_column: &str) -> Result<AnnotationTable, MetadataError> {
    harvest_table(bytes, key_column, AnnotationSource::Idr).map(|h| h.table)
}

/// User-supplied annotation table, same format as IDR exports.
pub fn harvest_user(bytes: &[u8], key_column: &str) -> Result<AnnotationTable, MetadataError> {
    harvest_table(bytes, key_column, AnnotationSource::User).map(|h| h.table)
}
