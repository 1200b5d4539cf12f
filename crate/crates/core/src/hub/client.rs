//! HTTP side of publishing: repo creation and the three-step upload.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use log::{debug, info, warn};
use reqwest::blocking::{Client, RequestBuilder, Response};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::plan::{CommitPlan, PlannedFile, TransferMode};
use super::{HubError, RepoTarget};
use crate::retry::RetryPolicy;

const LFS_CONTENT_TYPE: &str = "application/vnd.git-lfs+json";
const PREUPLOAD_CHUNK: usize = 250;
const LFS_BATCH_CHUNK: usize = 100;

/// Supplies file bytes at upload time so plans never hold content.
pub trait ContentProvider: Sync {
    fn read(&self, path: &str) -> io::Result<Vec<u8>>;
}

/// Files under a directory laid out like the repo.
pub struct DirectoryContent {
    pub root: PathBuf,
}

impl ContentProvider for DirectoryContent {
    fn read(&self, path: &str) -> io::Result<Vec<u8>> {
        std::fs::read(self.root.join(path))
    }
}

impl ContentProvider for BTreeMap<String, Vec<u8>> {
    fn read(&self, path: &str) -> io::Result<Vec<u8>> {
        self.get(path)
            .cloned()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, path.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct HubOptions {
    pub retry: RetryPolicy,
    /// Concurrent LFS PUTs.
    pub lfs_workers: usize,
    pub timeout: Duration,
}

impl Default for HubOptions {
    fn default() -> Self {
        HubOptions {
            retry: RetryPolicy::hub_default(),
            lfs_workers: 4,
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepoOutcome {
    Created,
    AlreadyExists,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepoState {
    pub outcome: RepoOutcome,
    /// Head commit of the main revision, when the hub reports one.
    pub head: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UploadReport {
    /// Paths included in the commit.
    pub uploaded: Vec<String>,
    /// Paths the hub already has with identical content at the revision.
    pub skipped: Vec<String>,
    /// Paths whose transfer failed.
    pub failed: Vec<String>,
    /// LFS objects the hub already stored, so no PUT was needed.
    pub lfs_already_stored: usize,
    /// LFS objects sent with PUT.
    pub lfs_objects_sent: usize,
    pub lfs_bytes_sent: u64,
    pub inline_bytes_sent: u64,
    /// New revision id; `None` when there was nothing to commit.
    pub commit: Option<String>,
}

impl UploadReport {
    /// No failures, and a commit was made unless every file was skipped.
    pub fn is_success(&self) -> bool {
        self.failed.is_empty() && (self.commit.is_some() || self.uploaded.is_empty())
    }
}

static ACTIVE_UPLOADS: LazyLock<Mutex<HashSet<String>>> = LazyLock::new(Default::default);

/// Registration of one running upload per repo revision.
struct UploadGuard(String);

impl UploadGuard {
    fn acquire(target: &RepoTarget) -> Result<Self, HubError> {
        let key = format!("{}|{}|{}", target.base(), target.repo_id, target.revision);
        if !ACTIVE_UPLOADS.lock().unwrap().insert(key.clone()) {
            return Err(HubError::ConcurrentUpload(format!("{}@{}", target.repo_id, target.revision)));
        }
        Ok(UploadGuard(key))
    }
}

impl Drop for UploadGuard {
    fn drop(&mut self) {
        ACTIVE_UPLOADS.lock().unwrap().remove(&self.0);
    }
}

pub struct HubClient {
    http: Client,
    options: HubOptions,
}

fn error_message(resp: Response) -> String {
    let text = resp.text().unwrap_or_default();
    let msg = serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_string))
        .unwrap_or(text);
    msg.chars().take(300).collect()
}

fn check(resp: Response) -> Result<Response, HubError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    if matches!(status.as_u16(), 401 | 403) {
        return Err(HubError::AuthFailed(status.as_u16()));
    }
    Err(HubError::Hub { status: status.as_u16(), message: error_message(resp) })
}

fn transport(e: reqwest::Error) -> HubError {
    HubError::Transport(e.to_string())
}

#[derive(Deserialize)]
struct PreuploadResponse {
    files: Vec<PreuploadEntry>,
}

#[derive(Deserialize)]
struct PreuploadEntry {
    path: String,
    #[serde(rename = "shouldIgnore", default)]
    should_ignore: bool,
}

#[derive(Deserialize)]
struct BatchResponse {
    #[serde(default)]
    objects: Vec<BatchObject>,
}

#[derive(Deserialize)]
struct BatchObject {
    oid: String,
    #[serde(default)]
    actions: Option<BatchActions>,
    #[serde(default)]
    error: Option<Value>,
}

#[derive(Deserialize)]
struct BatchActions {
    upload: Option<UploadAction>,
}

#[derive(Clone, Deserialize)]
struct UploadAction {
    href: String,
    #[serde(default)]
    header: HashMap<String, String>,
}

fn header_line(summary: &str) -> Value {
    json!({ "key": "header", "value": { "summary": summary } })
}

fn file_line(path: &str, bytes: &[u8]) -> Value {
    json!({ "key": "file", "value": { "path": path, "encoding": "base64", "content": BASE64.encode(bytes) } })
}

fn lfs_line(f: &PlannedFile) -> Value {
    json!({
        "key": "lfsFile",
        "value": { "path": f.path, "algo": "sha256", "oid": f.sha256_hex(), "size": f.size_bytes }
    })
}

impl HubClient {
    pub fn new(options: HubOptions) -> Result<Self, HubError> {
        let http = Client::builder()
            .timeout(options.timeout)
            .build()
            .map_err(transport)?;
        Ok(HubClient { http, options })
    }

    fn authed(&self, target: &RepoTarget, req: RequestBuilder) -> RequestBuilder {
        match &target.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn post_json(&self, target: &RepoTarget, url: &str, body: &Value) -> Result<Response, HubError> {
        self.options
            .retry
            .send(|| self.authed(target, self.http.post(url)).json(body))
            .map_err(transport)
    }

    /// Create the dataset repo, or confirm it already exists.
    pub fn ensure_repo(&self, target: &RepoTarget) -> Result<RepoState, HubError> {
        target.validate()?;
        let url = format!("{}/api/repos/create", target.base());
        let body = json!({
            "type": "dataset",
            "name": target.name(),
            "organization": target.namespace(),
            "private": target.private,
        });
        let resp = self.post_json(target, &url, &body)?;
        let outcome = match resp.status().as_u16() {
            409 => RepoOutcome::AlreadyExists,
            _ => RepoOutcome::Created,
        };
        let resp = if outcome == RepoOutcome::AlreadyExists { resp } else { check(resp)? };
        let head = resp
            .json::<Value>()
            .ok()
            .and_then(|v| v.get("head").and_then(Value::as_str).map(str::to_string));
        info!("repo {} {:?}", target.repo_id, outcome);
        Ok(RepoState { outcome, head })
    }

    fn preupload(&self, plan: &CommitPlan) -> Result<HashSet<String>, HubError> {
        let t = &plan.target;
        let url = format!("{}/api/datasets/{}/preupload/{}", t.base(), t.repo_id, t.revision);
        let mut ignored = HashSet::new();
        for chunk in plan.files().chunks(PREUPLOAD_CHUNK) {
            let files: Vec<Value> = chunk
                .iter()
                .map(|f| json!({ "path": f.path, "size": f.size_bytes, "sha256": f.sha256_hex() }))
                .collect();
            let resp = check(self.post_json(t, &url, &json!({ "files": files }))?)?;
            let parsed: PreuploadResponse = resp
                .json()
                .map_err(|e| HubError::Hub { status: 200, message: format!("bad preupload response: {e}") })?;
            ignored.extend(parsed.files.into_iter().filter(|e| e.should_ignore).map(|e| e.path));
        }
        Ok(ignored)
    }

    /// Ask which LFS objects still need a PUT. Returns oid → action; oids
    /// missing from the map are already stored. Per-object errors land in
    /// `rejected`.
    fn lfs_batch(
        &self,
        target: &RepoTarget,
        objects: &[&PlannedFile],
        rejected: &mut HashSet<String>,
    ) -> Result<HashMap<String, UploadAction>, HubError> {
        let url = format!("{}/{}.git/info/lfs/objects/batch", target.base(), target.repo_id);
        let mut actions = HashMap::new();
        for chunk in objects.chunks(LFS_BATCH_CHUNK) {
            let body = json!({
                "operation": "upload",
                "transfers": ["basic"],
                "objects": chunk.iter().map(|f| json!({ "oid": f.sha256_hex(), "size": f.size_bytes })).collect::<Vec<_>>(),
                "hash_algo": "sha256",
            });
            let resp = self
                .options
                .retry
                .send(|| {
                    self.authed(target, self.http.post(&url))
                        .header("Accept", LFS_CONTENT_TYPE)
                        .header("Content-Type", LFS_CONTENT_TYPE)
                        .body(body.to_string())
                })
                .map_err(transport)?;
            let parsed: BatchResponse = check(resp)?
                .json()
                .map_err(|e| HubError::Hub { status: 200, message: format!("bad LFS batch response: {e}") })?;
            for obj in parsed.objects {
                if let Some(err) = obj.error {
                    warn!("LFS object {} rejected: {err}", obj.oid);
                    rejected.insert(obj.oid);
                } else if let Some(upload) = obj.actions.and_then(|a| a.upload) {
                    actions.insert(obj.oid, upload);
                }
            }
        }
        Ok(actions)
    }

    fn read_verified(&self, content: &dyn ContentProvider, f: &PlannedFile) -> Result<Vec<u8>, HubError> {
        let bytes = content
            .read(&f.path)
            .map_err(|source| HubError::Content { path: f.path.clone(), source })?;
        if bytes.len() as u64 != f.size_bytes || <[u8; 32]>::from(Sha256::digest(&bytes)) != f.sha256 {
            return Err(HubError::ContentChanged { path: f.path.clone() });
        }
        Ok(bytes)
    }

    fn put_object(
        &self,
        target: &RepoTarget,
        action: &UploadAction,
        bytes: Vec<u8>,
    ) -> Result<(), String> {
        let same_origin = action.href.starts_with(target.base());
        let has_auth = action.header.keys().any(|k| k.eq_ignore_ascii_case("authorization"));
        let resp = self
            .options
            .retry
            .send(|| {
                let mut req = self.http.put(&action.href).body(bytes.clone());
                for (k, v) in &action.header {
                    req = req.header(k, v);
                }
                if same_origin && !has_auth {
                    req = self.authed(target, req);
                }
                req
            })
            .map_err(|e| e.to_string())?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(format!("HTTP {}", resp.status()))
        }
    }

    /// PUT every object with an upload action using a bounded pool.
    fn transfer(
        &self,
        target: &RepoTarget,
        work: Vec<(&PlannedFile, UploadAction)>,
        content: &dyn ContentProvider,
        report: &mut UploadReport,
    ) -> Result<HashSet<String>, HubError> {
        let next = AtomicUsize::new(0);
        let outcomes: Mutex<Vec<Option<Result<(), String>>>> = Mutex::new(vec![None; work.len()]);
        let fatal: Mutex<Option<HubError>> = Mutex::new(None);
        let workers = self.options.lfs_workers.clamp(1, work.len().max(1));
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= work.len() || fatal.lock().unwrap().is_some() {
                        break;
                    }
                    let (file, action) = &work[i];
                    let bytes = match self.read_verified(content, file) {
                        Ok(b) => b,
                        Err(e) => {
                            fatal.lock().unwrap().get_or_insert(e);
                            break;
                        }
                    };
                    let r = self.put_object(target, action, bytes);
                    if let Err(reason) = &r {
                        warn!("LFS upload of {} failed: {reason}", file.path);
                    }
                    outcomes.lock().unwrap()[i] = Some(r);
                });
            }
        });
        if let Some(e) = fatal.into_inner().unwrap() {
            return Err(e);
        }
        let mut failed_oids = HashSet::new();
        for ((file, _), outcome) in work.iter().zip(outcomes.into_inner().unwrap()) {
            match outcome {
                Some(Ok(())) => {
                    report.lfs_objects_sent += 1;
                    report.lfs_bytes_sent += file.size_bytes;
                }
                _ => {
                    failed_oids.insert(file.sha256_hex());
                }
            }
        }
        Ok(failed_oids)
    }

    fn commit(&self, plan: &CommitPlan, files: &[&PlannedFile], content: &dyn ContentProvider, report: &mut UploadReport) -> Result<String, HubError> {
        let t = &plan.target;
        let mut payload = String::new();
        payload.push_str(&header_line(&plan.summary).to_string());
        payload.push('\n');
        for f in files {
            let line = match f.mode {
                TransferMode::Inline => {
                    let bytes = self.read_verified(content, f)?;
                    report.inline_bytes_sent += bytes.len() as u64;
                    file_line(&f.path, &bytes)
                }
                TransferMode::Lfs => lfs_line(f),
            };
            payload.push_str(&line.to_string());
            payload.push('\n');
        }
        let url = format!("{}/api/datasets/{}/commit/{}", t.base(), t.repo_id, t.revision);
        let resp = self
            .options
            .retry
            .send(|| {
                self.authed(t, self.http.post(&url))
                    .header("Content-Type", "application/x-ndjson")
                    .body(payload.clone())
            })
            .map_err(transport)?;
        let v: Value = check(resp)?
            .json()
            .map_err(|e| HubError::Hub { status: 200, message: format!("bad commit response: {e}") })?;
        v.get("commitOid")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| HubError::Hub { status: 200, message: "commit response has no commitOid".into() })
    }

    /// Preupload, LFS transfers, then one commit. Nothing is committed if
    /// any transfer fails, so a re-run resumes from content hashes.
    pub fn upload(&self, plan: &CommitPlan, content: &dyn ContentProvider) -> Result<UploadReport, HubError> {
        let target = &plan.target;
        target.validate()?;
        let _guard = UploadGuard::acquire(target)?;
        let mut report = UploadReport::default();

        let ignored = self.preupload(plan)?;
        let mut pending: Vec<&PlannedFile> = Vec::new();
        for f in plan.files() {
            if ignored.contains(&f.path) {
                report.skipped.push(f.path.clone());
            } else {
                pending.push(f);
            }
        }
        debug!("{} file(s) to commit, {} unchanged", pending.len(), report.skipped.len());
        if pending.is_empty() {
            return Ok(report);
        }

        // One PUT per distinct oid even when several paths share content.
        let mut seen = HashSet::new();
        let lfs: Vec<&PlannedFile> = pending
            .iter()
            .copied()
            .filter(|f| f.mode == TransferMode::Lfs && seen.insert(f.sha256))
            .collect();
        let mut failed_oids = HashSet::new();
        if !lfs.is_empty() {
            let mut actions = self.lfs_batch(target, &lfs, &mut failed_oids)?;
            let mut work = Vec::new();
            for f in &lfs {
                let oid = f.sha256_hex();
                match actions.remove(&oid) {
                    Some(a) => work.push((*f, a)),
                    None if failed_oids.contains(&oid) => {}
                    None => report.lfs_already_stored += 1,
                }
            }
            failed_oids.extend(self.transfer(target, work, content, &mut report)?);
        }
        if !failed_oids.is_empty() {
            report.failed = pending
                .iter()
                .filter(|f| f.mode == TransferMode::Lfs && failed_oids.contains(&f.sha256_hex()))
                .map(|f| f.path.clone())
                .collect();
            return Err(HubError::PartialUpload { failed: report.failed.clone(), report: Box::new(report) });
        }

        let commit = self.commit(plan, &pending, content, &mut report)?;
        info!("committed {} file(s) to {}@{} as {commit}", pending.len(), target.repo_id, target.revision);
        report.uploaded = pending.iter().map(|f| f.path.clone()).collect();
        report.commit = Some(commit);
        Ok(report)
    }
}
