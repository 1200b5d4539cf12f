use indexmap::{IndexMap, IndexSet};
use serde::Serialize;

use super::{AnnotationSource, AnnotationTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnnotatedValue {
    pub value: String,
    pub source: AnnotationSource,
}

/// Annotations from several tables, each value tagged with the table
/// that won it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MergedAnnotations {
    pub rows: IndexMap<String, IndexMap<String, AnnotatedValue>>,
    pub columns: IndexSet<String>,
}

impl MergedAnnotations {
    pub fn get(&self, key: &str, column: &str) -> Option<&AnnotatedValue> {
        self.rows.get(key)?.get(column)
    }

    /// Values only, relabelled with a single source tag.
    pub fn as_table(&self, source: AnnotationSource) -> AnnotationTable {
        let mut table = AnnotationTable::new(source);
        for (key, row) in &self.rows {
            table.insert_sanitized_row(
                key.clone(),
                row.iter().map(|(c, v)| (c.clone(), v.value.clone())).collect(),
            );
        }
        table
    }
}

/// Fold tables in order; a later table overrides earlier ones per
/// (image, column). Columns keep first-appearance order.
pub fn merge(tables: &[AnnotationTable]) -> MergedAnnotations {
    let mut merged = MergedAnnotations::default();
    for table in tables {
        for (key, row) in table.rows() {
            let target = merged.rows.entry(key.clone()).or_default();
            for (column, value) in row {
                merged.columns.insert(column.clone());
                target.insert(
                    column.clone(),
                    AnnotatedValue {
                        value: value.clone(),
                        source: table.source,
                    },
                );
            }
        }
    }
    merged
}
