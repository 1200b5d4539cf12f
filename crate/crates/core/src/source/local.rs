use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::warn;
use walkdir::WalkDir;

use super::{path, SourceEntry, SourceError, SourceLocator};

pub(super) struct LocalSource {
    root: PathBuf,
}

impl LocalSource {
    pub(super) fn new(locator: &SourceLocator) -> Self {
        Self {
            root: PathBuf::from(&locator.root),
        }
    }

    pub(super) fn list(&self) -> Result<Vec<SourceEntry>, SourceError> {
        let meta = fs::metadata(&self.root).map_err(|e| {
            SourceError::SourceUnreachable(format!("{}: {e}", self.root.display()))
        })?;
        if !meta.is_dir() {
            return Err(SourceError::SourceUnreachable(format!(
                "{} is not a directory",
                self.root.display()
            )));
        }
        let mut entries = Vec::new();
        for item in WalkDir::new(&self.root).follow_links(false) {
            let item = item.map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
            if !item.file_type().is_file() {
                continue;
            }
            let Some(rel) = relative(&self.root, item.path()) else {
                warn!("skipping non-UTF-8 or unnormalizable path {}", item.path().display());
                continue;
            };
            let meta = item
                .metadata()
                .map_err(|e| SourceError::SourceUnreachable(e.to_string()))?;
            let last_modified = meta.modified().ok().map(DateTime::<Utc>::from);
            entries.push(SourceEntry {
                relative_path: rel,
                size_bytes: meta.len(),
                etag: None,
                last_modified,
            });
        }
        Ok(entries)
    }

    pub(super) fn fetch(&self, entry: &SourceEntry) -> Result<Vec<u8>, SourceError> {
        let full = self.root.join(&entry.relative_path);
        fs::read(&full).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => SourceError::EntryChanged {
                path: entry.relative_path.clone(),
                reason: "file no longer exists".into(),
            },
            _ => SourceError::SourceUnreachable(format!("{}: {e}", full.display())),
        })
    }
}

fn relative(root: &Path, full: &Path) -> Option<String> {
    let rel = full.strip_prefix(root).ok()?;
    let segments: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
    path::normalize(&segments?.join("/"))
}
