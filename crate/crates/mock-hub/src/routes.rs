use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, MatchedPath, Path, Request, State};
use axum::http::{header, HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::state::{commit_id, CommitRecord, CommittedFile, RepoRecord};
use crate::{LoggedRequest, RequestKind, Shared};

const LFS_CONTENT_TYPE: &str = "application/vnd.git-lfs+json";
const DEFAULT_LFS_THRESHOLD: u64 = 10 * 1024 * 1024;

type AppState = State<Arc<Shared>>;

pub(crate) fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/repos/create", post(create_repo))
        .route("/api/datasets/{ns}/{name}/preupload/{rev}", post(preupload))
        .route("/api/datasets/{ns}/{name}/commit/{rev}", post(commit))
        .route("/{ns}/{repo}/info/lfs/objects/batch", post(lfs_batch))
        .route("/lfs-store/{oid}", put(lfs_put))
        .route("/_state", get(dump_state))
        .route_layer(middleware::from_fn_with_state(shared.clone(), gate))
        .fallback(not_found)
        .layer(DefaultBodyLimit::disable())
        .with_state(shared)
}

fn kind_of(route: &str) -> RequestKind {
    match route {
        "/api/repos/create" => RequestKind::CreateRepo,
        "/api/datasets/{ns}/{name}/preupload/{rev}" => RequestKind::Preupload,
        "/api/datasets/{ns}/{name}/commit/{rev}" => RequestKind::Commit,
        "/{ns}/{repo}/info/lfs/objects/batch" => RequestKind::LfsBatch,
        "/lfs-store/{oid}" => RequestKind::LfsPut,
        "/_state" => RequestKind::State,
        _ => RequestKind::Other,
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn body_len(headers: &HeaderMap) -> u64 {
    headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn log(shared: &Shared, kind: RequestKind, method: &Method, path: &str, status: StatusCode, body_bytes: u64) {
    shared.log.lock().unwrap().push(LoggedRequest {
        kind,
        method: method.to_string(),
        path: path.to_string(),
        status: status.as_u16(),
        body_bytes,
    });
}

/// Logging, fault injection and bearer auth for every matched route.
async fn gate(State(shared): AppState, matched: MatchedPath, req: Request, next: Next) -> Response {
    let kind = kind_of(matched.as_str());
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let body_bytes = body_len(req.headers());

    let nth = {
        let mut counters = shared.counters.lock().unwrap();
        let n = counters.entry(kind).or_default();
        *n += 1;
        *n
    };
    let injected = shared.faults.lock().unwrap().status_for(kind, nth);
    let response = if let Some(status) = injected {
        error(StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), "injected fault")
    } else if method != Method::GET && !authorized(&shared, req.headers()) {
        error(StatusCode::UNAUTHORIZED, "invalid or missing bearer token")
    } else {
        next.run(req).await
    };
    log(&shared, kind, &method, &path, response.status(), body_bytes);
    response
}

fn authorized(shared: &Shared, headers: &HeaderMap) -> bool {
    let Some(token) = &shared.auth_token else {
        return true;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token)
}

async fn not_found(State(shared): AppState, req: Request) -> Response {
    log(&shared, RequestKind::Other, req.method(), req.uri().path(), StatusCode::NOT_FOUND, body_len(req.headers()));
    error(StatusCode::NOT_FOUND, "no such route")
}

fn valid_path(p: &str) -> bool {
    !p.is_empty()
        && !p.contains('\\')
        && p.split('/').all(|seg| !seg.is_empty() && seg != "." && seg != "..")
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

#[allow(clippy::result_large_err)]
fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct CreateRequest {
    #[serde(rename = "type")]
    kind: String,
    name: String,
    organization: Option<String>,
    #[serde(default)]
    private: bool,
}

async fn create_repo(State(shared): AppState, body: Bytes) -> Response {
    let req: CreateRequest = match parse_json(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.kind != "dataset" {
        return error(StatusCode::BAD_REQUEST, "only dataset repos are supported");
    }
    let Some(org) = req.organization.filter(|o| valid_name(o)) else {
        return error(StatusCode::BAD_REQUEST, "organization is required");
    };
    if !valid_name(&req.name) {
        return error(StatusCode::BAD_REQUEST, "invalid repo name");
    }
    let repo_id = format!("{org}/{}", req.name);
    let url = format!("{}/datasets/{repo_id}", shared.base_url);
    let mut state = shared.state.lock().unwrap();
    if state.repos.contains_key(&repo_id) {
        let head = state.head(&repo_id, "main").map(|c| c.id.clone());
        return (
            StatusCode::CONFLICT,
            Json(json!({ "error": "repository already exists", "url": url, "head": head })),
        )
            .into_response();
    }
    state.repos.insert(
        repo_id.clone(),
        RepoRecord { private: req.private, revisions: [("main".to_string(), Vec::new())].into() },
    );
    Json(json!({ "url": url, "name": repo_id, "head": Value::Null })).into_response()
}

#[derive(Deserialize)]
struct PreuploadRequest {
    files: Vec<PreuploadFile>,
}

#[derive(Deserialize)]
struct PreuploadFile {
    path: String,
    size: u64,
    sha256: Option<String>,
}

async fn preupload(
    State(shared): AppState,
    Path((ns, name, rev)): Path<(String, String, String)>,
    body: Bytes,
) -> Response {
    let req: PreuploadRequest = match parse_json(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let repo_id = format!("{ns}/{name}");
    let state = shared.state.lock().unwrap();
    if !state.repos.contains_key(&repo_id) {
        return error(StatusCode::NOT_FOUND, "repository not found");
    }
    let tree = state.tree(&repo_id, &rev);
    let files: Vec<Value> = req
        .files
        .iter()
        .map(|f| {
            let sha = f.sha256.as_deref().map(str::to_ascii_lowercase);
            let should_ignore = match (&sha, tree.get(&f.path)) {
                (Some(sha), Some(existing)) => hex::encode(existing.sha256) == *sha && existing.size == f.size,
                _ => false,
            };
            let already_present = sha.as_ref().is_some_and(|s| state.objects.contains_key(s));
            json!({
                "path": f.path,
                "uploadMode": if f.size > DEFAULT_LFS_THRESHOLD { "lfs" } else { "regular" },
                "shouldIgnore": should_ignore,
                "alreadyPresent": already_present,
            })
        })
        .collect();
    Json(json!({ "files": files, "commitOid": state.head(&repo_id, &rev).map(|c| c.id.clone()) })).into_response()
}

#[derive(Deserialize)]
struct BatchRequest {
    operation: String,
    #[serde(default)]
    transfers: Option<Vec<String>>,
    objects: Vec<BatchObject>,
}

#[derive(Deserialize)]
struct BatchObject {
    oid: String,
    size: u64,
}

fn is_oid(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

async fn lfs_batch(State(shared): AppState, Path((ns, repo)): Path<(String, String)>, body: Bytes) -> Response {
    let Some(name) = repo.strip_suffix(".git") else {
        return error(StatusCode::NOT_FOUND, "no such route");
    };
    let req: BatchRequest = match parse_json(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.operation != "upload" {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "only the upload operation is supported");
    }
    if let Some(t) = &req.transfers {
        if !t.iter().any(|t| t == "basic") {
            return error(StatusCode::UNPROCESSABLE_ENTITY, "only the basic transfer is supported");
        }
    }
    let state = shared.state.lock().unwrap();
    if !state.repos.contains_key(&format!("{ns}/{name}")) {
        return error(StatusCode::NOT_FOUND, "repository not found");
    }
    let mut header = serde_json::Map::new();
    if let Some(token) = &shared.auth_token {
        header.insert("Authorization".into(), json!(format!("Bearer {token}")));
    }
    let objects: Vec<Value> = req
        .objects
        .iter()
        .map(|o| {
            if !is_oid(&o.oid) {
                json!({ "oid": o.oid, "size": o.size, "error": { "code": 422, "message": "oid must be sha256 hex" } })
            } else if state.objects.get(&o.oid).is_some_and(|s| s.size == o.size) {
                json!({ "oid": o.oid, "size": o.size })
            } else {
                json!({
                    "oid": o.oid,
                    "size": o.size,
                    "authenticated": true,
                    "actions": { "upload": {
                        "href": format!("{}/lfs-store/{}", shared.base_url, o.oid),
                        "header": header,
                        "expires_in": 3600,
                    }},
                })
            }
        })
        .collect();
    (
        [(header::CONTENT_TYPE, LFS_CONTENT_TYPE)],
        serde_json::to_vec(&json!({ "transfer": "basic", "objects": objects, "hash_algo": "sha256" })).unwrap(),
    )
        .into_response()
}

async fn lfs_put(State(shared): AppState, Path(oid): Path<String>, body: Bytes) -> Response {
    if !is_oid(&oid) {
        return error(StatusCode::BAD_REQUEST, "oid must be sha256 hex");
    }
    if hex::encode(Sha256::digest(&body)) != oid {
        return error(StatusCode::BAD_REQUEST, "content does not match oid");
    }
    shared.state.lock().unwrap().store(body.to_vec());
    StatusCode::OK.into_response()
}

#[derive(Deserialize)]
#[serde(tag = "key", content = "value")]
enum CommitLine {
    #[serde(rename = "header")]
    Header { summary: String },
    #[serde(rename = "file")]
    File { path: String, encoding: String, content: String },
    #[serde(rename = "lfsFile")]
    LfsFile { path: String, algo: String, oid: String, size: u64 },
}

enum Staged {
    Inline(String, Vec<u8>),
    Lfs(String, [u8; 32], u64),
}

fn bad(msg: impl Into<String>) -> Response {
    error(StatusCode::BAD_REQUEST, msg)
}

/// Parse and check every line before anything touches the state.
#[allow(clippy::result_large_err)]
fn stage_commit(body: &[u8]) -> Result<(String, Vec<Staged>), Response> {
    let text = std::str::from_utf8(body).map_err(|_| bad("commit body is not UTF-8"))?;
    let mut lines = text.split('\n').filter(|l| !l.trim().is_empty());
    let summary = match lines.next().map(serde_json::from_str::<CommitLine>) {
        Some(Ok(CommitLine::Header { summary })) => summary,
        Some(Ok(_)) => return Err(bad("first line must be the header")),
        Some(Err(e)) => return Err(bad(format!("line 1: {e}"))),
        None => return Err(bad("empty commit payload")),
    };
    let mut staged = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let op = serde_json::from_str::<CommitLine>(line).map_err(|e| bad(format!("line {n}: {e}")))?;
        match op {
            CommitLine::Header { .. } => return Err(bad(format!("line {n}: repeated header"))),
            CommitLine::File { path, encoding, content } => {
                if encoding != "base64" {
                    return Err(bad(format!("line {n}: unsupported encoding {encoding:?}")));
                }
                let bytes = BASE64.decode(content).map_err(|e| bad(format!("line {n}: {e}")))?;
                staged.push(Staged::Inline(path, bytes));
            }
            CommitLine::LfsFile { path, algo, oid, size } => {
                if algo != "sha256" || !is_oid(&oid) {
                    return Err(bad(format!("line {n}: expected a sha256 oid")));
                }
                let mut sha = [0u8; 32];
                hex::decode_to_slice(&oid, &mut sha).map_err(|e| bad(format!("line {n}: {e}")))?;
                staged.push(Staged::Lfs(path, sha, size));
            }
        }
    }
    for s in &staged {
        let (Staged::Inline(p, _) | Staged::Lfs(p, _, _)) = s;
        if !valid_path(p) {
            return Err(bad(format!("invalid path {p:?}")));
        }
    }
    Ok((summary, staged))
}

async fn commit(
    State(shared): AppState,
    Path((ns, name, rev)): Path<(String, String, String)>,
    body: Bytes,
) -> Response {
    let repo_id = format!("{ns}/{name}");
    let (summary, staged) = match stage_commit(&body) {
        Ok(s) => s,
        Err(resp) => return resp,
    };
    let mut state = shared.state.lock().unwrap();
    if !state.repos.contains_key(&repo_id) {
        return error(StatusCode::NOT_FOUND, "repository not found");
    }
    for s in &staged {
        if let Staged::Lfs(path, sha, size) = s {
            match state.objects.get(&hex::encode(sha)) {
                Some(obj) if obj.size == *size => {}
                _ => return bad(format!("LFS object for {path:?} was never uploaded")),
            }
        }
    }
    let parent = state.head(&repo_id, &rev).map(|c| c.id.clone());
    let mut files: BTreeMap<String, CommittedFile> = state.tree(&repo_id, &rev);
    for s in staged {
        match s {
            Staged::Inline(path, bytes) => {
                let size = bytes.len() as u64;
                let sha: [u8; 32] = Sha256::digest(&bytes).into();
                state.store(bytes);
                files.insert(path, CommittedFile { sha256: sha, size });
            }
            Staged::Lfs(path, sha, size) => {
                files.insert(path, CommittedFile { sha256: sha, size });
            }
        }
    }
    let id = commit_id(parent.as_deref(), &summary, &files);
    state.commits.push(CommitRecord {
        id: id.clone(),
        repo: repo_id.clone(),
        revision: rev.clone(),
        parent,
        summary,
        files,
    });
    state
        .repos
        .get_mut(&repo_id)
        .expect("repo checked above")
        .revisions
        .entry(rev)
        .or_default()
        .push(id.clone());
    Json(json!({
        "commitOid": id,
        "commitUrl": format!("{}/datasets/{repo_id}/commit/{id}", shared.base_url),
    }))
    .into_response()
}

async fn dump_state(State(shared): AppState) -> Response {
    let state = shared.state.lock().unwrap().clone();
    Json(state).into_response()
}
