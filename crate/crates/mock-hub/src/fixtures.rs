//! Recorded-shape stand-ins for the upstream services the pipeline reads:
//! an S3 bucket (ListObjectsV2 + GetObject), the OMERO JSON API and the
//! BioStudies study API.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::server::{serve_router, ServerHandle};
use crate::MockHubError;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn etag_for(content: &[u8]) -> String {
    hex::encode(&Sha256::digest(content)[..16])
}

struct S3Inner {
    bucket: String,
    objects: Mutex<BTreeMap<String, Vec<u8>>>,
    page_size: usize,
    require_signature: bool,
    list_calls: AtomicUsize,
    get_calls: AtomicUsize,
    failing_lists: AtomicUsize,
}

/// One bucket served path-style at `{url}/{bucket}`.
pub struct S3Fixture {
    inner: Arc<S3Inner>,
    server: ServerHandle,
}

impl S3Fixture {
    pub fn start(
        bucket: &str,
        objects: impl IntoIterator<Item = (String, Vec<u8>)>,
        page_size: usize,
    ) -> Result<Self, MockHubError> {
        Self::start_with(bucket, objects, page_size, false)
    }

    /// Like [`S3Fixture::start`], but rejects requests without a SigV4
    /// Authorization header with 403.
    pub fn start_with(
        bucket: &str,
        objects: impl IntoIterator<Item = (String, Vec<u8>)>,
        page_size: usize,
        require_signature: bool,
    ) -> Result<Self, MockHubError> {
        let inner = Arc::new(S3Inner {
            bucket: bucket.to_string(),
            objects: Mutex::new(objects.into_iter().collect()),
            page_size: page_size.max(1),
            require_signature,
            list_calls: AtomicUsize::new(0),
            get_calls: AtomicUsize::new(0),
            failing_lists: AtomicUsize::new(0),
        });
        let router = Router::new()
            .route("/{bucket}", get(s3_list))
            .route("/{bucket}/", get(s3_list))
            .route("/{bucket}/{*key}", get(s3_get))
            .with_state(inner.clone());
        Ok(S3Fixture { inner, server: serve_router(router)? })
    }

    pub fn endpoint(&self) -> String {
        self.server.url()
    }

    pub fn list_calls(&self) -> usize {
        self.inner.list_calls.load(Ordering::SeqCst)
    }

    pub fn get_calls(&self) -> usize {
        self.inner.get_calls.load(Ordering::SeqCst)
    }

    /// The next `n` list requests answer 503.
    pub fn fail_next_lists(&self, n: usize) {
        self.inner.failing_lists.store(n, Ordering::SeqCst);
    }

    pub fn put_object(&self, key: &str, content: Vec<u8>) {
        self.inner.objects.lock().unwrap().insert(key.to_string(), content);
    }

    pub fn remove_object(&self, key: &str) {
        self.inner.objects.lock().unwrap().remove(key);
    }
}

fn s3_error(status: StatusCode, code: &str) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/xml")],
        format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Error><Code>{code}</Code></Error>"),
    )
        .into_response()
}

fn s3_check(inner: &S3Inner, bucket: &str, headers: &HeaderMap) -> Option<Response> {
    if bucket != inner.bucket {
        return Some(s3_error(StatusCode::NOT_FOUND, "NoSuchBucket"));
    }
    if inner.require_signature {
        let signed = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.starts_with("AWS4-HMAC-SHA256 Credential="))
            && headers.contains_key("x-amz-date")
            && headers.contains_key("x-amz-content-sha256");
        if !signed {
            return Some(s3_error(StatusCode::FORBIDDEN, "AccessDenied"));
        }
    }
    None
}

async fn s3_list(
    State(inner): State<Arc<S3Inner>>,
    Path(bucket): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    inner.list_calls.fetch_add(1, Ordering::SeqCst);
    if let Some(resp) = s3_check(&inner, &bucket, &headers) {
        return resp;
    }
    if inner
        .failing_lists
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        return s3_error(StatusCode::SERVICE_UNAVAILABLE, "SlowDown");
    }
    if q.get("list-type").map(String::as_str) != Some("2") {
        return s3_error(StatusCode::BAD_REQUEST, "InvalidArgument");
    }
    let prefix = q.get("prefix").cloned().unwrap_or_default();
    let start: usize = match q.get("continuation-token") {
        None => 0,
        Some(t) => match t.strip_prefix("after-").and_then(|n| n.parse().ok()) {
            Some(n) => n,
            None => return s3_error(StatusCode::BAD_REQUEST, "InvalidArgument"),
        },
    };
    let objects = inner.objects.lock().unwrap();
    let matching: Vec<(&String, &Vec<u8>)> = objects.iter().filter(|(k, _)| k.starts_with(&prefix)).collect();
    let page = &matching[start.min(matching.len())..(start + inner.page_size).min(matching.len())];
    let truncated = start + page.len() < matching.len();

    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    xml.push_str("<ListBucketResult xmlns=\"http://s3.amazonaws.com/doc/2006-03-01/\">");
    let _ = write!(
        xml,
        "<Name>{}</Name><Prefix>{}</Prefix><KeyCount>{}</KeyCount><MaxKeys>{}</MaxKeys><IsTruncated>{}</IsTruncated>",
        xml_escape(&inner.bucket),
        xml_escape(&prefix),
        page.len(),
        inner.page_size,
        truncated
    );
    for (key, content) in page {
        let _ = write!(
            xml,
            "<Contents><Key>{}</Key><LastModified>2024-01-01T00:00:00.000Z</LastModified><ETag>&quot;{}&quot;</ETag><Size>{}</Size><StorageClass>STANDARD</StorageClass></Contents>",
            xml_escape(key),
            etag_for(content),
            content.len()
        );
    }
    if truncated {
        let _ = write!(xml, "<NextContinuationToken>after-{}</NextContinuationToken>", start + page.len());
    }
    xml.push_str("</ListBucketResult>");
    ([(header::CONTENT_TYPE, "application/xml")], xml).into_response()
}

async fn s3_get(
    State(inner): State<Arc<S3Inner>>,
    Path((bucket, key)): Path<(String, String)>,
    headers: HeaderMap,
) -> Response {
    inner.get_calls.fetch_add(1, Ordering::SeqCst);
    if let Some(resp) = s3_check(&inner, &bucket, &headers) {
        return resp;
    }
    match inner.objects.lock().unwrap().get(&key) {
        Some(content) => (
            [(header::ETAG, format!("\"{}\"", etag_for(content)))],
            content.clone(),
        )
            .into_response(),
        None => s3_error(StatusCode::NOT_FOUND, "NoSuchKey"),
    }
}

/// One image as the OMERO JSON API reports it.
#[derive(Clone, Debug)]
pub struct OmeroImage {
    pub name: String,
    pub map_annotations: Vec<(String, String)>,
}

struct OmeroInner {
    images: BTreeMap<u64, OmeroImage>,
    requests: AtomicUsize,
}

/// Serves `{api_base}/m/images/{id}/` and `{api_base}/m/images/{id}/annotations/`.
pub struct OmeroFixture {
    inner: Arc<OmeroInner>,
    server: ServerHandle,
}

impl OmeroFixture {
    pub fn start(images: impl IntoIterator<Item = (u64, OmeroImage)>) -> Result<Self, MockHubError> {
        let inner = Arc::new(OmeroInner {
            images: images.into_iter().collect(),
            requests: AtomicUsize::new(0),
        });
        let router = Router::new()
            .route("/api/v0/m/images/{id}/", get(omero_image))
            .route("/api/v0/m/images/{id}/annotations/", get(omero_annotations))
            .with_state(inner.clone());
        Ok(OmeroFixture { inner, server: serve_router(router)? })
    }

    pub fn api_base(&self) -> String {
        format!("{}/api/v0", self.server.url())
    }

    pub fn requests(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }
}

fn not_found(message: &str) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "message": message }))).into_response()
}

async fn omero_image(State(inner): State<Arc<OmeroInner>>, Path(id): Path<u64>) -> Response {
    inner.requests.fetch_add(1, Ordering::SeqCst);
    match inner.images.get(&id) {
        Some(img) => Json(json!({
            "data": {
                "@id": id,
                "@type": "http://www.openmicroscopy.org/Schemas/OME/2016-06#Image",
                "Name": img.name,
            }
        }))
        .into_response(),
        None => not_found("Image not found"),
    }
}

async fn omero_annotations(State(inner): State<Arc<OmeroInner>>, Path(id): Path<u64>) -> Response {
    inner.requests.fetch_add(1, Ordering::SeqCst);
    match inner.images.get(&id) {
        Some(img) => {
            let values: Vec<Value> = img.map_annotations.iter().map(|(k, v)| json!([k, v])).collect();
            Json(json!({
                "data": [{
                    "@type": "http://www.openmicroscopy.org/Schemas/OME/2016-06#MapAnnotation",
                    "Namespace": "openmicroscopy.org/omero/bulk_annotations",
                    "values": values,
                }]
            }))
            .into_response()
        }
        None => not_found("Image not found"),
    }
}

struct StudiesInner {
    studies: BTreeMap<String, Value>,
    requests: AtomicUsize,
}

/// Serves `{api_base}/studies/{accession}`.
pub struct BioStudiesFixture {
    inner: Arc<StudiesInner>,
    server: ServerHandle,
}

impl BioStudiesFixture {
    pub fn start(studies: impl IntoIterator<Item = (String, Value)>) -> Result<Self, MockHubError> {
        let inner = Arc::new(StudiesInner {
            studies: studies.into_iter().collect(),
            requests: AtomicUsize::new(0),
        });
        let router = Router::new()
            .route("/biostudies/api/v1/studies/{accession}", get(study))
            .with_state(inner.clone());
        Ok(BioStudiesFixture { inner, server: serve_router(router)? })
    }

    pub fn api_base(&self) -> String {
        format!("{}/biostudies/api/v1", self.server.url())
    }

    pub fn requests(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }
}

async fn study(State(inner): State<Arc<StudiesInner>>, Path(accession): Path<String>) -> Response {
    inner.requests.fetch_add(1, Ordering::SeqCst);
    match inner.studies.get(&accession) {
        Some(v) => Json(v.clone()).into_response(),
        None => not_found("Study not found"),
    }
}
