//! Dataset-level metadata from the BioStudies JSON API.

use std::collections::HashSet;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use super::{CardError, PartialCardFields};
use crate::retry::RetryPolicy;

pub const BIOSTUDIES_API_BASE: &str = "https://www.ebi.ac.uk/biostudies/api/v1";

/// `idr` followed by four digits, or a BioStudies accession such as
/// `S-BIAD123` / `S-BSST4`.
pub fn is_valid_accession(accession: &str) -> bool {
    if let Some(digits) = accession.strip_prefix("idr") {
        return digits.len() == 4 && digits.bytes().all(|b| b.is_ascii_digit());
    }
    let Some(rest) = accession.strip_prefix("S-") else {
        return false;
    };
    let letters = rest.bytes().take_while(u8::is_ascii_uppercase).count();
    let digits = &rest[letters..];
    letters > 0 && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn study_page(accession: &str) -> String {
    if accession.starts_with("idr") {
        format!("https://idr.openmicroscopy.org/study/{accession}/")
    } else {
        format!("https://www.ebi.ac.uk/biostudies/studies/{accession}")
    }
}

/// Attribute names mapped onto card fields (compared case-insensitively).
const TITLE: &[&str] = &["title"];
const DESCRIPTION: &[&str] = &["description", "abstract"];
const LICENSE: &[&str] = &["license", "licence"];
const KEYWORDS: &[&str] = &["keyword", "keywords"];
const CITATION: &[&str] = &["citation"];
const AUTHOR_NAME: &[&str] = &["name"];

fn named(attr: &(String, String), names: &[&str]) -> bool {
    names.iter().any(|n| attr.0.eq_ignore_ascii_case(n))
}

fn attributes(node: &Value) -> Vec<(String, String)> {
    node.get("attributes")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|a| {
                    let name = a.get("name")?.as_str()?.trim();
                    let value = a.get("value")?.as_str()?.trim();
                    (!name.is_empty() && !value.is_empty()).then(|| (name.to_string(), value.to_string()))
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Subsections may be nested one level in arrays (tables of sections).
fn subsections(node: &Value) -> Vec<&Value> {
    let mut out = Vec::new();
    if let Some(items) = node.get("subsections").and_then(Value::as_array) {
        for item in items {
            match item {
                Value::Array(inner) => out.extend(inner.iter()),
                other => out.push(other),
            }
        }
    }
    out
}

fn is_author(section: &Value) -> bool {
    section
        .get("type")
        .and_then(Value::as_str)
        .is_some_and(|t| t.eq_ignore_ascii_case("author"))
}

/// Extract card fields from one BioStudies study document.
pub(crate) fn fields_from_study(accession: &str, study: &Value) -> Result<PartialCardFields, CardError> {
    if !study.is_object() {
        return Err(CardError::Malformed("study document is not an object".into()));
    }
    let mut attrs = attributes(study);
    let section = study.get("section");
    if let Some(section) = section {
        attrs.extend(attributes(section));
    }

    let mut fields = PartialCardFields::default();
    let first = |names: &[&str]| attrs.iter().find(|a| named(a, names)).map(|a| a.1.clone());
    fields.pretty_name = first(TITLE).map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "));
    fields.description = first(DESCRIPTION);
    fields.license = first(LICENSE);
    fields.citation = first(CITATION);
    let mut seen_tags = HashSet::new();
    for (_, v) in attrs.iter().filter(|a| named(a, KEYWORDS)) {
        if seen_tags.insert(v.clone()) {
            fields.tags.push(v.clone());
        }
    }

    if let Some(section) = section {
        let mut stack = subsections(section);
        stack.reverse();
        while let Some(sub) = stack.pop() {
            if is_author(sub) {
                if let Some((_, name)) = attributes(sub).iter().find(|a| named(a, AUTHOR_NAME)) {
                    fields.authors.push(name.clone());
                }
            }
            let mut nested = subsections(sub);
            nested.reverse();
            stack.extend(nested);
        }
    }

    let mapped = [TITLE, DESCRIPTION, LICENSE, KEYWORDS, CITATION];
    let mut seen = HashSet::new();
    for attr in attrs {
        if !mapped.iter().any(|names| named(&attr, names)) && seen.insert(attr.clone()) {
            fields.source_attributes.push(attr);
        }
    }
    fields.source_links.push(study_page(accession));
    Ok(fields)
}

/// GET `{api_base}/studies/{accession}` and map what it contains.
/// Fields the study does not carry stay unset.
pub fn harvest_study_metadata(
    accession: &str,
    api_base: &str,
    retry: &RetryPolicy,
) -> Result<PartialCardFields, CardError> {
    if !is_valid_accession(accession) {
        return Err(CardError::InvalidAccession(accession.to_string()));
    }
    let url = format!("{}/studies/{accession}", api_base.trim_end_matches('/'));
    let client = Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| CardError::SourceUnreachable(e.to_string()))?;
    let resp = retry
        .send(|| client.get(&url).header("Accept", "application/json"))
        .map_err(|e| CardError::SourceUnreachable(e.to_string()))?;
    match resp.status() {
        StatusCode::NOT_FOUND => return Err(CardError::UnknownAccession(accession.to_string())),
        s if !s.is_success() => return Err(CardError::SourceUnreachable(format!("{url}: HTTP {s}"))),
        _ => {}
    }
    let study: Value = resp.json().map_err(|e| CardError::Malformed(e.to_string()))?;
    fields_from_study(accession, &study)
}
