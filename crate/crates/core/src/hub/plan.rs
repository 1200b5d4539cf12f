//! Commit planning and the dataset size budget. Both are pure.

use std::collections::HashSet;

use sha2::{Digest, Sha256};

use super::{HubError, RepoTarget};
use crate::card::CARD_FILE_NAME;
use crate::croissant::FILE_NAME as CROISSANT_FILE_NAME;
use crate::metadata::MANIFEST_FILE_NAME;
use crate::source::path;

/// Hub datasets above 1 TB (decimal) need a written justification.
pub const BUDGET_LIMIT_BYTES: u64 = 1_000_000_000_000;
pub const DEFAULT_LFS_THRESHOLD: u64 = 10 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferMode {
    /// Base64 inside the commit payload.
    Inline,
    /// Uploaded through the LFS batch API and referenced by oid.
    Lfs,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedFile {
    pub path: String,
    pub size_bytes: u64,
    pub sha256: [u8; 32],
    pub mode: TransferMode,
}

impl PlannedFile {
    pub fn from_bytes(path: impl Into<String>, bytes: &[u8], lfs_threshold: u64) -> Self {
        let size_bytes = bytes.len() as u64;
        PlannedFile {
            path: path.into(),
            size_bytes,
            sha256: Sha256::digest(bytes).into(),
            mode: if size_bytes <= lfs_threshold { TransferMode::Inline } else { TransferMode::Lfs },
        }
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(self.sha256)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitPlan {
    pub target: RepoTarget,
    files: Vec<PlannedFile>,
    pub summary: String,
}

fn rank(p: &str) -> u8 {
    if p == CARD_FILE_NAME {
        0
    } else if p == CROISSANT_FILE_NAME {
        1
    } else if path::basename(p) == MANIFEST_FILE_NAME {
        2
    } else {
        3
    }
}

impl CommitPlan {
    /// Validate paths and order files: card, croissant, manifests, then
    /// everything else, each group sorted by path. Metadata goes first so a
    /// partially applied upload still leaves a browsable repo.
    pub fn new(target: RepoTarget, mut files: Vec<PlannedFile>, summary: impl Into<String>) -> Result<Self, HubError> {
        let mut seen = HashSet::new();
        for f in &files {
            if !path::is_normalized(&f.path) {
                return Err(HubError::PathCollision(format!("{:?} is not a normalized repo path", f.path)));
            }
            if !seen.insert(f.path.as_str()) {
                return Err(HubError::PathCollision(format!("{:?} appears twice", f.path)));
            }
        }
        for f in &files {
            let mut dir = f.path.as_str();
            while let Some((parent, _)) = dir.rsplit_once('/') {
                if seen.contains(parent) {
                    return Err(HubError::PathCollision(format!("{parent:?} is both a file and a directory")));
                }
                dir = parent;
            }
        }
        files.sort_by(|a, b| rank(&a.path).cmp(&rank(&b.path)).then_with(|| a.path.as_bytes().cmp(b.path.as_bytes())));
        Ok(CommitPlan { target, files, summary: summary.into() })
    }

    pub fn files(&self) -> &[PlannedFile] {
        &self.files
    }

    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.size_bytes).sum()
    }
}

/// Hash every file and build the plan.
pub fn plan_commit<P, B>(
    target: RepoTarget,
    files: impl IntoIterator<Item = (P, B)>,
    lfs_threshold: u64,
    summary: impl Into<String>,
) -> Result<CommitPlan, HubError>
where
    P: Into<String>,
    B: AsRef<[u8]>,
{
    let planned = files
        .into_iter()
        .map(|(p, b)| PlannedFile::from_bytes(p, b.as_ref(), lfs_threshold))
        .collect();
    CommitPlan::new(target, planned, summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetVerdict {
    Ok,
    NeedsJustification { total_bytes: u64, limit: u64 },
}

impl BudgetVerdict {
    pub fn blocks_upload(self, acknowledged: bool) -> bool {
        matches!(self, BudgetVerdict::NeedsJustification { .. }) && !acknowledged
    }
}

pub fn check_size_budget(plan: &CommitPlan) -> BudgetVerdict {
    check_size_budget_with_limit(plan, BUDGET_LIMIT_BYTES)
}

/// Exactly `limit` bytes is still within budget.
pub fn check_size_budget_with_limit(plan: &CommitPlan, limit: u64) -> BudgetVerdict {
    let total_bytes = plan.total_bytes();
    if total_bytes > limit {
        BudgetVerdict::NeedsJustification { total_bytes, limit }
    } else {
        BudgetVerdict::Ok
    }
}
