//! Croissant 1.0 JSON-LD descriptor: generation, serialization, validation.
//!
//! Every split contributes three nodes: a `cr:FileObject` for its manifest
//! (`{split}-metadata`), a `cr:FileSet` for its images (`{split}-images`) and
//! a `cr:RecordSet` (`{split}`) whose fields are `{split}/image` followed by
//! one field per manifest column.

mod validate;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::ImageFormat;
use crate::metadata::{serialize_manifest, SplitManifest, MANIFEST_FILE_NAME};

pub use validate::{validate_croissant, ValidationReport, Violation, ViolationClass};

pub const CONFORMS_TO: &str = "http://mlcommons.org/croissant/1.0";
pub const FILE_NAME: &str = "croissant.json";
const MAX_NAME_CHARS: usize = 200;

const CONTEXT_JSON: &str = include_str!("context.json");

/// The Croissant 1.0 `@context`, parsed once from the vendored copy.
pub fn context() -> &'static serde_json::Value {
    static CONTEXT: OnceLock<serde_json::Value> = OnceLock::new();
    CONTEXT.get_or_init(|| serde_json::from_str(CONTEXT_JSON).expect("vendored context is valid JSON"))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CroissantError {
    #[error("no split manifests to describe")]
    EmptyManifestSet,
    #[error("invalid dataset identity: {0}")]
    InvalidIdentity(String),
    #[error("invalid split name {0:?}")]
    InvalidSplitName(String),
    #[error("document is not JSON: {0}")]
    NotJson(String),
    #[error("document does not match the descriptor layout: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIdentity {
    pub name: String,
    pub description: String,
    /// SPDX identifier.
    pub license: String,
    pub url: String,
    pub keywords: Vec<String>,
    pub citation: Option<String>,
    pub creators: Vec<String>,
}

impl DatasetIdentity {
    pub fn validate(&self) -> Result<(), CroissantError> {
        let bad = |m: &str| Err(CroissantError::InvalidIdentity(m.to_string()));
        if self.name.trim().is_empty() {
            return bad("name is empty");
        }
        if self.name.chars().count() > MAX_NAME_CHARS {
            return bad("name longer than 200 characters");
        }
        if self.license.trim().is_empty() {
            return bad("license is empty");
        }
        match url::Url::parse(&self.url) {
            Ok(u) if u.has_host() => Ok(()),
            _ => bad("url is not absolute"),
        }
    }
}

/// `{"@id": ...}` pointer to another node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRef {
    #[serde(rename = "@id")]
    pub id: String,
}

impl IdRef {
    fn new(id: impl Into<String>) -> Self {
        IdRef { id: id.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    #[serde(rename = "@type")]
    pub kind: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "@type")]
pub enum Distribution {
    #[serde(rename = "cr:FileObject")]
    FileObject(FileObject),
    #[serde(rename = "cr:FileSet")]
    FileSet(FileSet),
}

impl Distribution {
    pub fn id(&self) -> &str {
        match self {
            Distribution::FileObject(f) => &f.id,
            Distribution::FileSet(f) => &f.id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileObject {
    #[serde(rename = "@id")]
    pub id: String,
    pub name: String,
    #[serde(rename = "contentUrl")]
    pub content_url: String,
    #[serde(rename = "encodingFormat")]
    pub encoding_format: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSet {
    #[serde(rename = "@id")]
    pub id: String,
    pub name: String,
    #[serde(rename = "containedIn", default, skip_serializing_if = "Option::is_none")]
    pub contained_in: Option<IdRef>,
    #[serde(rename = "encodingFormat")]
    pub encoding_format: String,
    pub includes: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSet {
    #[serde(rename = "@type")]
    pub kind: String,
    #[serde(rename = "@id")]
    pub id: String,
    pub name: String,
    pub field: Vec<Field>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    #[serde(rename = "@type")]
    pub kind: String,
    #[serde(rename = "@id")]
    pub id: String,
    pub name: String,
    #[serde(rename = "dataType")]
    pub data_type: String,
    pub source: FieldSource,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSource {
    #[serde(rename = "fileObject", default, skip_serializing_if = "Option::is_none")]
    pub file_object: Option<IdRef>,
    #[serde(rename = "fileSet", default, skip_serializing_if = "Option::is_none")]
    pub file_set: Option<IdRef>,
    pub extract: Extract,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extract {
    #[serde(rename = "column")]
    Column(String),
    #[serde(rename = "fileProperty")]
    FileProperty(String),
}

/// Key order on the wire is the field order here: context, type and
/// conformance, identity, distribution, recordSet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CroissantDocument {
    #[serde(rename = "@context")]
    pub context: serde_json::Value,
    #[serde(rename = "@type")]
    pub kind: String,
    #[serde(rename = "conformsTo")]
    pub conforms_to: String,
    pub name: String,
    pub description: String,
    pub license: String,
    pub url: String,
    pub keywords: Vec<String>,
    #[serde(rename = "citeAs", default, skip_serializing_if = "Option::is_none")]
    pub cite_as: Option<String>,
    pub creator: Vec<Person>,
    pub distribution: Vec<Distribution>,
    #[serde(rename = "recordSet")]
    pub record_set: Vec<RecordSet>,
}

pub const DATA_TYPE_TEXT: &str = "sc:Text";
pub const DATA_TYPE_INTEGER: &str = "sc:Integer";
pub const DATA_TYPE_IMAGE: &str = "sc:ImageObject";

fn is_valid_split_name(split: &str) -> bool {
    !split.is_empty() && split.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn is_integer(v: &str) -> bool {
    let digits = v.strip_prefix('-').unwrap_or(v);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && v.parse::<i64>().is_ok()
}

/// `sc:Integer` when every non-empty value is an integer (and there is at
/// least one), otherwise `sc:Text`. Empty cells mean "no annotation".
pub fn column_data_type<'a>(values: impl IntoIterator<Item = &'a str>) -> &'static str {
    let mut any = false;
    for v in values {
        if v.is_empty() {
            continue;
        }
        if !is_integer(v) {
            return DATA_TYPE_TEXT;
        }
        any = true;
    }
    if any {
        DATA_TYPE_INTEGER
    } else {
        DATA_TYPE_TEXT
    }
}

pub fn generate_croissant(
    identity: &DatasetIdentity,
    manifests: &[SplitManifest],
    image_format: ImageFormat,
) -> Result<CroissantDocument, CroissantError> {
    if manifests.is_empty() {
        return Err(CroissantError::EmptyManifestSet);
    }
    identity.validate()?;

    let mut distribution = Vec::with_capacity(manifests.len() * 2);
    let mut record_set = Vec::with_capacity(manifests.len());
    for m in manifests {
        let split = &m.split;
        if !is_valid_split_name(split) {
            return Err(CroissantError::InvalidSplitName(split.clone()));
        }
        let csv_id = format!("{split}-metadata");
        let images_id = format!("{split}-images");
        distribution.push(Distribution::FileObject(FileObject {
            id: csv_id.clone(),
            name: format!("{split}/{MANIFEST_FILE_NAME}"),
            content_url: format!("{split}/{MANIFEST_FILE_NAME}"),
            encoding_format: "text/csv".into(),
            sha256: hex::encode(Sha256::digest(serialize_manifest(m))),
        }));
        distribution.push(Distribution::FileSet(FileSet {
            id: images_id.clone(),
            name: format!("{split} images"),
            contained_in: None,
            encoding_format: image_format.mime_type().into(),
            includes: format!("{split}/**/*.{}", image_format.extension()),
        }));

        let columns = m.columns();
        let mut image_name = "image".to_string();
        let mut n = 1;
        while columns.contains(&image_name) {
            n += 1;
            image_name = format!("image_{n}");
        }
        let mut fields = vec![Field {
            kind: "cr:Field".into(),
            id: format!("{split}/{image_name}"),
            name: image_name,
            data_type: DATA_TYPE_IMAGE.into(),
            source: FieldSource {
                file_object: None,
                file_set: Some(IdRef::new(&images_id)),
                extract: Extract::FileProperty("content".into()),
            },
        }];
        for (i, column) in columns.iter().enumerate() {
            fields.push(Field {
                kind: "cr:Field".into(),
                id: format!("{split}/{column}"),
                name: column.clone(),
                data_type: column_data_type(m.column_values(i)).into(),
                source: FieldSource {
                    file_object: Some(IdRef::new(&csv_id)),
                    file_set: None,
                    extract: Extract::Column(column.clone()),
                },
            });
        }
        record_set.push(RecordSet {
            kind: "cr:RecordSet".into(),
            id: split.clone(),
            name: split.clone(),
            field: fields,
        });
    }

    Ok(CroissantDocument {
        context: context().clone(),
        kind: "sc:Dataset".into(),
        conforms_to: CONFORMS_TO.into(),
        name: identity.name.clone(),
        description: identity.description.clone(),
        license: identity.license.clone(),
        url: identity.url.clone(),
        keywords: identity.keywords.clone(),
        cite_as: identity.citation.clone(),
        creator: identity
            .creators
            .iter()
            .map(|name| Person { kind: "sc:Person".into(), name: name.clone() })
            .collect(),
        distribution,
        record_set,
    })
}

/// Pretty-printed UTF-8 JSON with a trailing newline.
pub fn serialize_jsonld(doc: &CroissantDocument) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("document serializes");
    out.push(b'\n');
    out
}

pub fn parse_jsonld(bytes: &[u8]) -> Result<CroissantDocument, CroissantError> {
    serde_json::from_slice(bytes).map_err(|e| {
        if e.is_data() {
            CroissantError::Malformed(e.to_string())
        } else {
            CroissantError::NotJson(e.to_string())
        }
    })
}
