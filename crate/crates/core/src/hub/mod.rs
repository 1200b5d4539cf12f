//! Upload to a HuggingFace-compatible hub: commit planning, the size
//! budget, repo creation and the preupload / LFS / NDJSON commit exchange.

mod client;
mod plan;

use std::fmt;

use serde::Deserialize;
use thiserror::Error;

pub use client::{
    ContentProvider, DirectoryContent, HubClient, HubOptions, RepoOutcome, RepoState, UploadReport,
};
pub use plan::{
    check_size_budget, check_size_budget_with_limit, plan_commit, BudgetVerdict, CommitPlan,
    PlannedFile, TransferMode, BUDGET_LIMIT_BYTES, DEFAULT_LFS_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("invalid repo target: {0}")]
    InvalidTarget(String),
    #[error("path collision: {0}")]
    PathCollision(String),
    #[error("hub rejected credentials (HTTP {0})")]
    AuthFailed(u16),
    #[error("hub returned HTTP {status}: {message}")]
    Hub { status: u16, message: String },
    #[error("hub unreachable: {0}")]
    Transport(String),
    #[error("{} LFS transfer(s) failed; nothing was committed", failed.len())]
    PartialUpload { failed: Vec<String>, report: Box<UploadReport> },
    #[error("another upload to {0} is already running in this process")]
    ConcurrentUpload(String),
    #[error("content of {path} changed since planning")]
    ContentChanged { path: String },
    #[error("reading {path}: {source}")]
    Content {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Environment variable holding the hub token.
pub const TOKEN_ENV: &str = "BIOIMAGEPUB_TOKEN";

/// Where to publish. The token never comes from config files.
#[derive(Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoTarget {
    pub endpoint: String,
    pub repo_id: String,
    #[serde(default = "default_revision")]
    pub revision: String,
    #[serde(skip)]
    pub token: Option<String>,
    #[serde(default)]
    pub private: bool,
}

fn default_revision() -> String {
    "main".into()
}

impl fmt::Debug for RepoTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepoTarget")
            .field("endpoint", &self.endpoint)
            .field("repo_id", &self.repo_id)
            .field("revision", &self.revision)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .field("private", &self.private)
            .finish()
    }
}

fn valid_repo_part(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

impl RepoTarget {
    pub fn new(endpoint: impl Into<String>, repo_id: impl Into<String>) -> Self {
        RepoTarget {
            endpoint: endpoint.into(),
            repo_id: repo_id.into(),
            revision: default_revision(),
            token: None,
            private: false,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn validate(&self) -> Result<(), HubError> {
        let bad = |m: String| Err(HubError::InvalidTarget(m));
        match self.repo_id.split_once('/') {
            Some((ns, name)) if valid_repo_part(ns) && valid_repo_part(name) => {}
            _ => return bad(format!("repo_id {:?} must be namespace/name using [A-Za-z0-9._-]", self.repo_id)),
        }
        match url::Url::parse(&self.endpoint) {
            Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => {}
            _ => return bad(format!("endpoint {:?} is not an http(s) URL", self.endpoint)),
        }
        if !valid_repo_part(&self.revision) {
            return bad(format!("revision {:?} is not a plain branch name", self.revision));
        }
        Ok(())
    }

    pub fn namespace(&self) -> &str {
        self.repo_id.split_once('/').map(|(ns, _)| ns).unwrap_or("")
    }

    pub fn name(&self) -> &str {
        self.repo_id.split_once('/').map(|(_, n)| n).unwrap_or(&self.repo_id)
    }

    pub(crate) fn base(&self) -> &str {
        self.endpoint.trim_end_matches('/')
    }

    /// Browser URL of the dataset repo.
    pub fn repo_url(&self) -> String {
        format!("{}/datasets/{}", self.base(), self.repo_id)
    }
}
