//! Glob matching against normalized relative paths.
//!
//! A pattern without '/' matches the basename, so `*.tif` selects TIFFs at
//! any depth. A pattern containing '/' matches the full relative path, where
//! `*` stays within one segment and `**` crosses segments.

use globset::{Glob, GlobBuilder, GlobMatcher};

use super::path::basename;

#[derive(Clone, Debug)]
pub struct PathPattern {
    raw: String,
    matcher: GlobMatcher,
    basename_only: bool,
}

impl PathPattern {
    pub fn new(raw: &str) -> Result<Self, globset::Error> {
        let basename_only = !raw.contains('/');
        let glob: Glob = GlobBuilder::new(raw)
            .literal_separator(true)
            .backslash_escape(true)
            .build()?;
        Ok(Self {
            raw: raw.to_string(),
            matcher: glob.compile_matcher(),
            basename_only,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Matches every path regardless of content.
    pub fn is_catch_all(&self) -> bool {
        matches!(self.raw.as_str(), "*" | "**" | "**/*")
    }

    pub fn matches(&self, path: &str) -> bool {
        if self.basename_only {
            self.matcher.is_match(basename(path))
        } else {
            self.matcher.is_match(path)
        }
    }
}
