use std::num::{NonZeroU64, NonZeroUsize};

use serde::{Deserialize, Serialize};

use super::pattern::PathPattern;
use super::{SourceEntry, SourceError, SourceInventory};

/// Rules for carving a reproducible subset out of an inventory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSelector {
    #[serde(default, rename = "include")]
    pub include_globs: Vec<String>,
    #[serde(default, rename = "exclude")]
    pub exclude_globs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_files: Option<NonZeroUsize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bytes: Option<NonZeroU64>,
}

impl PartialSelector {
    pub fn is_empty(&self) -> bool {
        self.include_globs.is_empty()
            && self.exclude_globs.is_empty()
            && self.max_files.is_none()
            && self.max_bytes.is_none()
    }
}

pub(crate) fn compile(globs: &[String]) -> Result<Vec<PathPattern>, SourceError> {
    globs
        .iter()
        .map(|g| {
            PathPattern::new(g).map_err(|source| SourceError::InvalidGlob {
                pattern: g.clone(),
                source,
            })
        })
        .collect()
}

/// Include globs, then exclude globs, then the first `max_files` entries,
/// then drop from the tail while the total exceeds `max_bytes`.
pub fn select_partial(
    inv: &SourceInventory,
    sel: &PartialSelector,
) -> Result<SourceInventory, SourceError> {
    let include = compile(&sel.include_globs)?;
    let exclude = compile(&sel.exclude_globs)?;

    let mut kept: Vec<&SourceEntry> = inv
        .entries()
        .iter()
        .filter(|e| include.is_empty() || include.iter().any(|p| p.matches(&e.relative_path)))
        .filter(|e| !exclude.iter().any(|p| p.matches(&e.relative_path)))
        .collect();

    if let Some(max) = sel.max_files {
        kept.truncate(max.get());
    }
    if let Some(max) = sel.max_bytes {
        let mut total: u64 = kept.iter().map(|e| e.size_bytes).sum();
        while total > max.get() {
            match kept.pop() {
                Some(last) => total -= last.size_bytes,
                None => break,
            }
        }
    }

    if kept.is_empty() && !inv.is_empty() {
        return Err(SourceError::SelectorMatchesNothing(inv.len()));
    }
    Ok(SourceInventory::new(
        inv.locator.clone(),
        kept.into_iter().cloned().collect(),
    ))
}
