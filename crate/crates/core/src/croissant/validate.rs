//! Structural checks on arbitrary Croissant JSON, not just documents this
//! crate generated.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};

use super::CroissantError;

/// Field data types accepted by the validator.
const KNOWN_DATA_TYPES: &[&str] = &[
    "sc:Boolean",
    "sc:Date",
    "sc:DateTime",
    "sc:Float",
    "sc:Integer",
    "sc:Number",
    "sc:Text",
    "sc:URL",
    "sc:ImageObject",
    "sc:AudioObject",
    "sc:VideoObject",
    "cr:BoundingBox",
    "cr:Split",
    "cr:Label",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationClass {
    /// `@context`, `@type` or `conformsTo` absent or wrong.
    Structure,
    /// `name`, `license` or `url` absent or empty.
    Identity,
    DanglingReference,
    DuplicateId,
    UnknownDataType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub class: ViolationClass,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, class: ViolationClass) -> bool {
        self.violations.iter().any(|v| v.class == class)
    }

    fn push(&mut self, class: ViolationClass, message: String) {
        self.violations.push(Violation { class, message });
    }
}

pub fn validate_croissant(doc_bytes: &[u8]) -> Result<ValidationReport, CroissantError> {
    let doc: Value =
        serde_json::from_slice(doc_bytes).map_err(|e| CroissantError::NotJson(e.to_string()))?;
    let mut report = ValidationReport::default();
    let Some(root) = doc.as_object() else {
        report.push(ViolationClass::Structure, "document root is not an object".into());
        return Ok(report);
    };

    check_structure(root, &mut report);
    for key in ["name", "license", "url"] {
        if is_blank(root.get(key)) {
            report.push(ViolationClass::Identity, format!("missing {key}"));
        }
    }

    // Node definitions carry "@id" plus other keys; a bare {"@id": ..}
    // object is a pointer to one of them.
    let mut defined: BTreeMap<String, usize> = BTreeMap::new();
    let mut references = Vec::new();
    let mut fields = Vec::new();
    for (key, value) in root {
        if key != "@context" {
            walk(value, &mut defined, &mut references, &mut fields);
        }
    }
    for (id, count) in &defined {
        if *count > 1 {
            report.push(ViolationClass::DuplicateId, format!("duplicate id: {id}"));
        }
    }
    let mut reported = HashSet::new();
    for r in references {
        if !defined.contains_key(&r) && reported.insert(r.clone()) {
            report.push(ViolationClass::DanglingReference, format!("dangling reference: {r}"));
        }
    }
    for field in fields {
        let id = field.get("@id").and_then(Value::as_str).unwrap_or("<anonymous>");
        match field.get("dataType") {
            None => report.push(ViolationClass::UnknownDataType, format!("field {id} has no dataType")),
            Some(dt) => {
                let values: Vec<&Value> = match dt {
                    Value::Array(items) => items.iter().collect(),
                    other => vec![other],
                };
                for v in values {
                    match v.as_str() {
                        Some(s) if KNOWN_DATA_TYPES.contains(&s) => {}
                        _ => report.push(
                            ViolationClass::UnknownDataType,
                            format!("unknown dataType {v} on field {id}"),
                        ),
                    }
                }
            }
        }
    }
    Ok(report)
}

fn check_structure(root: &Map<String, Value>, report: &mut ValidationReport) {
    match root.get("@context") {
        Some(Value::Object(_) | Value::Array(_) | Value::String(_)) => {}
        _ => report.push(ViolationClass::Structure, "missing @context".into()),
    }
    match root.get("@type").and_then(Value::as_str) {
        Some("sc:Dataset" | "Dataset" | "https://schema.org/Dataset") => {}
        Some(other) => report.push(ViolationClass::Structure, format!("@type is {other:?}, not sc:Dataset")),
        None => report.push(ViolationClass::Structure, "missing @type".into()),
    }
    match root.get("conformsTo").and_then(Value::as_str) {
        Some(c) if c.starts_with("http://mlcommons.org/croissant/") => {}
        Some(other) => report.push(ViolationClass::Structure, format!("conformsTo {other:?} is not a Croissant version")),
        None => report.push(ViolationClass::Structure, "missing conformsTo".into()),
    }
}

fn is_blank(v: Option<&Value>) -> bool {
    match v {
        None | Some(Value::Null) => true,
        Some(Value::String(s)) => s.trim().is_empty(),
        Some(Value::Array(a)) => a.iter().all(|x| is_blank(Some(x))),
        Some(_) => false,
    }
}

fn is_field(obj: &Map<String, Value>) -> bool {
    matches!(obj.get("@type").and_then(Value::as_str), Some("cr:Field" | "ml:Field"))
}

fn walk<'a>(
    value: &'a Value,
    defined: &mut BTreeMap<String, usize>,
    references: &mut Vec<String>,
    fields: &mut Vec<&'a Map<String, Value>>,
) {
    match value {
        Value::Array(items) => {
            for item in items {
                walk(item, defined, references, fields);
            }
        }
        Value::Object(obj) => {
            if let Some(id) = obj.get("@id").and_then(Value::as_str) {
                if obj.len() == 1 {
                    references.push(id.to_string());
                    return;
                }
                *defined.entry(id.to_string()).or_default() += 1;
            }
            if is_field(obj) {
                fields.push(obj);
            }
            for (key, v) in obj {
                // Inline data rows are opaque JSON.
                if key != "data" && key != "examples" {
                    walk(v, defined, references, fields);
                }
            }
        }
        _ => {}
    }
}
