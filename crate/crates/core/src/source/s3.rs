//! S3 ListObjectsV2 / GetObject over plain HTTP, optionally SigV4-signed.

use std::collections::HashSet;
use std::env;
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{debug, warn};
use reqwest::blocking::{Client, RequestBuilder};

use super::sigv4::{self, CanonicalRequest, SigningKey, EMPTY_PAYLOAD_SHA256};
use super::{path, SourceEntry, SourceError, SourceLocator};
use crate::retry::RetryPolicy;

pub const ACCESS_KEY_ENV: &str = "BIOIMAGEPUB_S3_ACCESS_KEY";
pub const SECRET_KEY_ENV: &str = "BIOIMAGEPUB_S3_SECRET_KEY";

const DEFAULT_REGION: &str = "us-east-1";

#[derive(Clone)]
pub struct S3Credentials {
    pub access_key: String,
    pub secret_key: String,
}

impl std::fmt::Debug for S3Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("S3Credentials")
            .field("access_key", &self.access_key)
            .finish_non_exhaustive()
    }
}

impl S3Credentials {
    pub fn from_env() -> Option<Self> {
        let access_key = env::var(ACCESS_KEY_ENV).ok().filter(|s| !s.is_empty())?;
        let secret_key = env::var(SECRET_KEY_ENV).ok().filter(|s| !s.is_empty())?;
        Some(Self {
            access_key,
            secret_key,
        })
    }
}

/// Splits `s3://bucket[/prefix]` into the bucket and a prefix that is either
/// empty or ends with '/'.
pub(super) fn parse_s3_uri(uri: &str) -> Result<(String, String), SourceError> {
    let rest = uri
        .strip_prefix("s3://")
        .ok_or_else(|| SourceError::InvalidLocator(format!("{uri:?} is not an s3:// URI")))?;
    let (bucket, prefix) = rest.split_once('/').unwrap_or((rest, ""));
    if bucket.is_empty() {
        return Err(SourceError::InvalidLocator(format!("{uri:?} has no bucket name")));
    }
    let prefix = prefix.trim_matches('/');
    let prefix = if prefix.is_empty() {
        String::new()
    } else {
        format!("{prefix}/")
    };
    Ok((bucket.to_string(), prefix))
}

pub(super) struct S3Source {
    client: Client,
    retry: RetryPolicy,
    origin: String,
    host: String,
    /// Path (URI-encoded) of the bucket root, without trailing '/'.
    bucket_path: String,
    prefix: String,
    region: String,
    credentials: Option<S3Credentials>,
}

impl S3Source {
    pub(super) fn new(locator: &SourceLocator, retry: RetryPolicy) -> Result<Self, SourceError> {
        let (bucket, prefix) = parse_s3_uri(&locator.root)?;
        let region = locator
            .region
            .clone()
            .unwrap_or_else(|| DEFAULT_REGION.to_string());
        let (base, path_style) = match &locator.endpoint {
            Some(ep) => (ep.clone(), true),
            None => (format!("https://{bucket}.s3.{region}.amazonaws.com"), false),
        };
        let url = url::Url::parse(&base)
            .map_err(|e| SourceError::InvalidLocator(format!("endpoint {base:?}: {e}")))?;
        let host = match (url.host_str(), url.port()) {
            (Some(h), Some(p)) => format!("{h}:{p}"),
            (Some(h), None) => h.to_string(),
            _ => return Err(SourceError::InvalidLocator(format!("endpoint {base:?} has no host"))),
        };
        let origin = format!("{}://{host}", url.scheme());
        let mut bucket_path = url.path().trim_end_matches('/').to_string();
        if path_style {
            bucket_path.push('/');
            bucket_path.push_str(&sigv4::uri_encode(&bucket, false));
        }
        let credentials = if locator.anonymous {
            None
        } else {
            S3Credentials::from_env()
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
        Ok(Self {
            client,
            retry,
            origin,
            host,
            bucket_path,
            prefix,
            region,
            credentials,
        })
    }

    fn request(&self, path: &str, query: &str) -> RequestBuilder {
        let url = if query.is_empty() {
            format!("{}{path}", self.origin)
        } else {
            format!("{}{path}?{query}", self.origin)
        };
        let mut req = self.client.get(url);
        if let Some(creds) = &self.credentials {
            let amz_date = Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
            let headers = vec![
                ("host".to_string(), self.host.clone()),
                ("x-amz-content-sha256".to_string(), EMPTY_PAYLOAD_SHA256.to_string()),
                ("x-amz-date".to_string(), amz_date.clone()),
            ];
            let auth = sigv4::authorization(
                &CanonicalRequest {
                    method: "GET",
                    path,
                    query,
                    headers: &headers,
                    payload_sha256: EMPTY_PAYLOAD_SHA256,
                },
                &SigningKey {
                    access_key: &creds.access_key,
                    secret_key: &creds.secret_key,
                    region: &self.region,
                    service: "s3",
                },
                &amz_date,
            );
            req = req
                .header("x-amz-content-sha256", EMPTY_PAYLOAD_SHA256)
                .header("x-amz-date", amz_date)
                .header("authorization", auth);
        }
        req
    }

    pub(super) fn list(&self) -> Result<Vec<SourceEntry>, SourceError> {
        let list_path = if self.bucket_path.is_empty() {
            "/".to_string()
        } else {
            self.bucket_path.clone()
        };
        let mut entries = Vec::new();
        let mut token: Option<String> = None;
        let mut seen_tokens = HashSet::new();
        loop {
            let mut pairs = vec![("list-type", "2"), ("prefix", self.prefix.as_str())];
            if let Some(t) = &token {
                pairs.push(("continuation-token", t.as_str()));
            }
            let query = sigv4::canonical_query(&pairs);
            let resp = self
                .retry
                .send(|| self.request(&list_path, &query))
                .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
            let status = resp.status();
            let body = resp
                .text()
                .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
            if !status.is_success() {
                return Err(SourceError::SourceUnreachable(format!(
                    "list returned {status}: {}",
                    snippet(&body)
                )));
            }
            let page = parse_list_page(&body)?;
            debug!("listed {} keys (truncated: {})", page.objects.len(), page.truncated);
            for obj in page.objects {
                if let Some(entry) = self.entry_for(obj) {
                    entries.push(entry);
                }
            }
            if !page.truncated {
                break;
            }
            let next = page.next_token.ok_or_else(|| {
                SourceError::SourceUnreachable("truncated listing without continuation token".into())
            })?;
            if !seen_tokens.insert(next.clone()) {
                return Err(SourceError::SourceUnreachable(format!(
                    "listing repeated continuation token {next:?}"
                )));
            }
            token = Some(next);
        }
        Ok(entries)
    }

    fn entry_for(&self, obj: ListedObject) -> Option<SourceEntry> {
        let rel = obj.key.strip_prefix(&self.prefix)?;
        if rel.is_empty() || rel.ends_with('/') {
            return None;
        }
        match path::normalize(rel) {
            Some(relative_path) => Some(SourceEntry {
                relative_path,
                size_bytes: obj.size,
                etag: obj.etag,
                last_modified: obj.last_modified,
            }),
            None => {
                warn!("skipping S3 key with unsupported path {:?}", obj.key);
                None
            }
        }
    }

    pub(super) fn fetch(&self, entry: &SourceEntry) -> Result<Vec<u8>, SourceError> {
        let key = format!("{}{}", self.prefix, entry.relative_path);
        let path = format!("{}/{}", self.bucket_path, sigv4::uri_encode(&key, true));
        let resp = self
            .retry
            .send(|| self.request(&path, ""))
            .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 404 {
            return Err(SourceError::EntryChanged {
                path: entry.relative_path.clone(),
                reason: "object no longer exists".into(),
            });
        }
        if !status.is_success() {
            return Err(SourceError::SourceUnreachable(format!("GET {key} returned {status}")));
        }
        if let Some(expected) = &entry.etag {
            let actual = resp
                .headers()
                .get(reqwest::header::ETAG)
                .and_then(|v| v.to_str().ok())
                .map(unquote);
            if let Some(actual) = actual {
                if actual != *expected {
                    return Err(SourceError::EntryChanged {
                        path: entry.relative_path.clone(),
                        reason: format!("etag {expected:?} is now {actual:?}"),
                    });
                }
            }
        }
        let bytes = resp
            .bytes()
            .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
        Ok(bytes.to_vec())
    }
}

fn unquote(s: &str) -> String {
    s.trim().trim_matches('"').to_string()
}

fn snippet(body: &str) -> &str {
    let end = body
        .char_indices()
        .nth(200)
        .map(|(i, _)| i)
        .unwrap_or(body.len());
    &body[..end]
}

#[derive(Debug, PartialEq)]
pub(super) struct ListedObject {
    pub key: String,
    pub size: u64,
    pub etag: Option<String>,
    pub last_modified: Option<DateTime<Utc>>,
}

#[derive(Debug)]
pub(super) struct ListPage {
    pub objects: Vec<ListedObject>,
    pub truncated: bool,
    pub next_token: Option<String>,
}

pub(super) fn parse_list_page(xml: &str) -> Result<ListPage, SourceError> {
    let doc = roxmltree::Document::parse(xml)
        .map_err(|e| SourceError::SourceUnreachable(format!("malformed listing XML: {e}")))?;
    let root = doc.root_element();
    if root.tag_name().name() != "ListBucketResult" {
        return Err(SourceError::SourceUnreachable(format!(
            "unexpected listing root <{}>",
            root.tag_name().name()
        )));
    }
    let child_text = |node: roxmltree::Node<'_, '_>, name: &str| -> Option<String> {
        node.children()
            .find(|c| c.is_element() && c.tag_name().name() == name)
            .map(|c| c.text().unwrap_or("").to_string())
    };
    let mut objects = Vec::new();
    for node in root
        .children()
        .filter(|c| c.is_element() && c.tag_name().name() == "Contents")
    {
        let key = child_text(node, "Key")
            .ok_or_else(|| SourceError::SourceUnreachable("listing entry without Key".into()))?;
        let size = child_text(node, "Size")
            .unwrap_or_default()
            .trim()
            .parse::<u64>()
            .map_err(|e| SourceError::SourceUnreachable(format!("bad Size for {key:?}: {e}")))?;
        let etag = child_text(node, "ETag").map(|s| unquote(&s)).filter(|s| !s.is_empty());
        let last_modified = child_text(node, "LastModified")
            .and_then(|s| DateTime::parse_from_rfc3339(s.trim()).ok())
            .map(|d| d.with_timezone(&Utc));
        objects.push(ListedObject {
            key,
            size,
            etag,
            last_modified,
        });
    }
    let truncated = child_text(root, "IsTruncated")
        .map(|s| s.trim().eq_ignore_ascii_case("true"))
        .unwrap_or(false);
    let next_token = child_text(root, "NextContinuationToken").filter(|s| !s.is_empty());
    Ok(ListPage {
        objects,
        truncated,
        next_token,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uri_parsing() {
        assert_eq!(parse_s3_uri("s3://idr").unwrap(), ("idr".into(), "".into()));
        assert_eq!(
            parse_s3_uri("s3://idr/share/idr0012/").unwrap(),
            ("idr".into(), "share/idr0012/".into())
        );
        assert!(parse_s3_uri("s3://").is_err());
        assert!(parse_s3_uri("http://idr").is_err());
    }

    #[test]
    fn parses_list_v2_page() {
        let xml = r#"<?xml version="1.0" encoding="UTF-8"?>
<ListBucketResult xmlns="http://s3.amazonaws.com/doc/2006-03-01/">
  <Name>bucket</Name><Prefix>p/</Prefix><KeyCount>2</KeyCount>
  <IsTruncated>true</IsTruncated>
  <NextContinuationToken>tok==</NextContinuationToken>
  <Contents><Key>p/a.tif</Key><LastModified>2024-01-02T03:04:05.000Z</LastModified>
    <ETag>&quot;abc&quot;</ETag><Size>100</Size></Contents>
  <Contents><Key>p/sub/</Key><Size>0</Size></Contents>
</ListBucketResult>"#;
        let page = parse_list_page(xml).unwrap();
        assert!(page.truncated);
        assert_eq!(page.next_token.as_deref(), Some("tok=="));
        assert_eq!(page.objects.len(), 2);
        assert_eq!(page.objects[0].key, "p/a.tif");
        assert_eq!(page.objects[0].etag.as_deref(), Some("abc"));
        assert_eq!(page.objects[0].size, 100);
        assert!(page.objects[0].last_modified.is_some());
    }

    #[test]
    fn rejects_non_listing_xml() {
        assert!(parse_list_page("<Error><Code>NoSuchBucket</Code></Error>").is_err());
        assert!(parse_list_page("not xml").is_err());
    }
}
