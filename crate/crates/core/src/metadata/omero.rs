//! Map annotations from an OMERO JSON API.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::Value;

use super::{AnnotationSource, AnnotationTable, MetadataError};
use crate::retry::RetryPolicy;

#[derive(Clone, Debug)]
pub struct OmeroOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl Default for OmeroOptions {
    fn default() -> Self {
        Self {
            concurrency: 8,
            retry: RetryPolicy::source_default(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OmeroFailure {
    NoSuchImage(u64),
    Unreachable { id: u64, reason: String },
    Malformed { id: u64, reason: String },
}

impl OmeroFailure {
    pub fn id(&self) -> u64 {
        match self {
            OmeroFailure::NoSuchImage(id) => *id,
            OmeroFailure::Unreachable { id, .. } | OmeroFailure::Malformed { id, .. } => *id,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OmeroHarvest {
    pub table: AnnotationTable,
    pub succeeded: Vec<u64>,
    pub failures: Vec<OmeroFailure>,
}

struct ImageAnnotations {
    name: String,
    pairs: Vec<(String, String)>,
}

/// Fetch each image's name and map annotations. Per-image failures are
/// collected; only a base URL that fails for every id is an error.
pub fn harvest_omero(
    base_url: &str,
    image_ids: &[u64],
    options: &OmeroOptions,
) -> Result<OmeroHarvest, MetadataError> {
    if image_ids.is_empty() {
        return Err(MetadataError::InvalidInput("OMERO image id list is empty".into()));
    }
    let base = base_url.trim_end_matches('/');
    let client = Client::builder()
        .timeout(options.timeout)
        .build()
        .map_err(|e| MetadataError::SourceUnreachable(e.to_string()))?;

    let results: Mutex<Vec<Option<Result<ImageAnnotations, OmeroFailure>>>> =
        Mutex::new((0..image_ids.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.clamp(1, image_ids.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= image_ids.len() {
                    break;
                }
                let r = fetch_image(&client, &options.retry, base, image_ids[i]);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    // Assemble in id-list order so the table never depends on completion order.
    let mut table = AnnotationTable::new(AnnotationSource::Omero);
    let mut succeeded = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in image_ids.iter().zip(results.into_inner().expect("results lock")) {
        match r.expect("every id processed") {
            Ok(img) => {
                table.insert_row(img.name, img.pairs);
                succeeded.push(*id);
            }
            Err(f) => failures.push(f),
        }
    }
    if succeeded.is_empty()
        && failures
            .iter()
            .all(|f| matches!(f, OmeroFailure::Unreachable { .. }))
    {
        let reason = match failures.first() {
            Some(OmeroFailure::Unreachable { reason, .. }) => reason.clone(),
            _ => "no response".into(),
        };
        return Err(MetadataError::SourceUnreachable(format!("{base}: {reason}")));
    }
    Ok(OmeroHarvest {
        table,
        succeeded,
        failures,
    })
}

fn get_json(client: &Client, retry: &RetryPolicy, url: &str, id: u64) -> Result<Value, OmeroFailure> {
    let resp = retry
        .send(|| client.get(url).header("accept", "application/json"))
        .map_err(|e| OmeroFailure::Unreachable {
            id,
            reason: e.to_string(),
        })?;
    let status = resp.status();
    if status.as_u16() == 404 {
        return Err(OmeroFailure::NoSuchImage(id));
    }
    if !status.is_success() {
        return Err(OmeroFailure::Unreachable {
            id,
            reason: format!("GET {url} returned {status}"),
        });
    }
    resp.json::<Value>().map_err(|e| OmeroFailure::Malformed {
        id,
        reason: e.to_string(),
    })
}

fn fetch_image(
    client: &Client,
    retry: &RetryPolicy,
    base: &str,
    id: u64,
) -> Result<ImageAnnotations, OmeroFailure> {
    let image = get_json(client, retry, &format!("{base}/m/images/{id}/"), id)?;
    let name = image
        .get("data")
        .unwrap_or(&image)
        .get("Name")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| OmeroFailure::Malformed {
            id,
            reason: "image has no Name".into(),
        })?
        .to_string();
    let annotations = get_json(client, retry, &format!("{base}/m/images/{id}/annotations/"), id)?;
    Ok(ImageAnnotations {
        name,
        pairs: map_annotation_pairs(&annotations),
    })
}

/// Key/value pairs of every map annotation in a response, in order.
fn map_annotation_pairs(doc: &Value) -> Vec<(String, String)> {
    let items = doc
        .get("data")
        .or_else(|| doc.get("annotations"))
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let mut pairs = Vec::new();
    for item in &items {
        let kind = item
            .get("@type")
            .or_else(|| item.get("class"))
            .and_then(Value::as_str);
        if kind.is_some_and(|k| !k.contains("MapAnnotation")) {
            continue;
        }
        let Some(values) = item.get("values").and_then(Value::as_array) else {
            continue;
        };
        for kv in values {
            if let Some([k, v]) = kv.as_array().map(Vec::as_slice) {
                if let (Some(k), Some(v)) = (k.as_str(), v.as_str()) {
                    if !v.is_empty() {
                        pairs.push((k.to_string(), v.to_string()));
                    }
                }
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn extracts_only_map_annotations() {
        let doc = json!({"data": [
            {"@type": "http://www.openmicroscopy.org/Schemas/OME/2016-06#MapAnnotation",
             "values": [["Organism", "Homo sapiens"], ["Empty", ""]]},
            {"@type": "http://www.openmicroscopy.org/Schemas/OME/2016-06#TagAnnotation",
             "values": [["nope", "x"]]},
            {"class": "MapAnnotationI", "values": [["Gene", "KIF11"]]}
        ]});
        assert_eq!(
            map_annotation_pairs(&doc),
            vec![
                ("Organism".to_string(), "Homo sapiens".to_string()),
                ("Gene".to_string(), "KIF11".to_string())
            ]
        );
    }

    #[test]
    fn empty_id_list_rejected() {
        let err = harvest_omero("http://127.0.0.1:9/api/v0", &[], &OmeroOptions::default()).unwrap_err();
        assert!(matches!(err, MetadataError::InvalidInput(_)));
    }
}
