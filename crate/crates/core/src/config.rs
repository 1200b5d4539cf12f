//! The JSON pipeline configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The hub token is never part of the config; `target` rejects a
//! `token` key like any other unknown field.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::hub::RepoTarget;
use crate::image::ConversionPolicy;
use crate::metadata::ImageKey;
use crate::retry::RetryOverrides;
use crate::source::pattern::PathPattern;
use crate::source::{PartialSelector, SourceKind, SourceLocator};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON for this schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRule {
    pub glob: String,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnnotationSourceConfig {
    /// IDR bulk annotation export (CSV or TSV).
    Idr { path: PathBuf, key_column: String },
    /// User-supplied table.
    User { path: PathBuf, key_column: String },
    /// Map annotations of the listed images on an OMERO server.
    Omero { endpoint: String, image_ids: Vec<u64> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceLocator,
    #[serde(default)]
    pub selector: PartialSelector,
    pub split_rules: Vec<SplitRule>,
    #[serde(default)]
    pub conversion: ConversionPolicy,
    /// Merge precedence: later sources win.
    #[serde(default)]
    pub annotation_sources: Vec<AnnotationSourceConfig>,
    /// How an image is matched to annotation keys.
    #[serde(default)]
    pub image_key: ImageKey,
    #[serde(default)]
    pub study_accession: Option<String>,
    #[serde(default)]
    pub study_api_base: Option<String>,
    #[serde(default)]
    pub card_answers: Option<PathBuf>,
    pub target: RepoTarget,
    pub workdir: PathBuf,
    #[serde(default)]
    pub acknowledge_large: bool,
    #[serde(default)]
    pub lfs_threshold_bytes: Option<u64>,
    #[serde(default)]
    pub budget_limit_bytes: Option<u64>,
    #[serde(default)]
    pub retry: RetryOverrides,
    #[serde(default)]
    pub commit_summary: Option<String>,
}

/// Compiled split rules; the first matching rule wins.
#[derive(Clone, Debug)]
pub struct SplitRules {
    rules: Vec<(PathPattern, String)>,
}

impl SplitRules {
    pub fn compile(rules: &[SplitRule]) -> Result<Self, ConfigError> {
        if rules.is_empty() {
            return Err(ConfigError::Invalid("split_rules is empty".into()));
        }
        let mut compiled = Vec::with_capacity(rules.len());
        for r in rules {
            if !is_valid_split_name(&r.split) {
                return Err(ConfigError::Invalid(format!(
                    "split name {:?} must be non-empty and use only letters, digits and '_'",
                    r.split
                )));
            }
            let pattern = PathPattern::new(&r.glob)
                .map_err(|e| ConfigError::Invalid(format!("split rule glob {:?}: {e}", r.glob)))?;
            compiled.push((pattern, r.split.clone()));
        }
        if !compiled.iter().any(|(p, _)| p.is_catch_all()) {
            return Err(ConfigError::Invalid(
                "split_rules needs a catch-all rule (glob \"**\" or \"*\")".into(),
            ));
        }
        Ok(SplitRules { rules: compiled })
    }

    pub fn assign(&self, path: &str) -> &str {
        self.rules
            .iter()
            .find(|(p, _)| p.matches(path))
            .or_else(|| self.rules.iter().find(|(p, _)| p.is_catch_all()))
            .map(|(_, s)| s.as_str())
            .expect("compile guarantees a catch-all")
    }

    /// Split names in first-appearance order.
    pub fn split_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for (_, s) in &self.rules {
            if !names.contains(&s.as_str()) {
                names.push(s);
            }
        }
        names
    }
}

pub fn is_valid_split_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        Ok(config)
    }

    /// Parse without touching paths.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if self.source.kind == SourceKind::Local {
            self.source.root = join(Path::new(&self.source.root)).to_string_lossy().into_owned();
        }
        self.workdir = join(&self.workdir);
        if let Some(a) = &self.card_answers {
            self.card_answers = Some(join(a));
        }
        for src in &mut self.annotation_sources {
            if let AnnotationSourceConfig::Idr { path, .. } | AnnotationSourceConfig::User { path, .. } = src {
                *path = join(path);
            }
        }
    }

    /// Checks that need no I/O. Returns the compiled split rules.
    pub fn validate(&self) -> Result<SplitRules, ConfigError> {
        self.source.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.target.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for src in &self.annotation_sources {
            match src {
                AnnotationSourceConfig::Omero { endpoint, image_ids } => {
                    if image_ids.is_empty() {
                        return Err(ConfigError::Invalid(format!("omero source {endpoint} lists no image_ids")));
                    }
                    if url::Url::parse(endpoint).is_err() {
                        return Err(ConfigError::Invalid(format!("omero endpoint {endpoint:?} is not a URL")));
                    }
                }
                AnnotationSourceConfig::Idr { key_column, .. } | AnnotationSourceConfig::User { key_column, .. } => {
                    if key_column.trim().is_empty() {
                        return Err(ConfigError::Invalid("annotation key_column is empty".into()));
                    }
                }
            }
        }
        if let Some(acc) = &self.study_accession {
            if !crate::card::is_valid_accession(acc) {
                return Err(ConfigError::Invalid(format!("study_accession {acc:?} is not a valid accession")));
            }
        }
        if self.lfs_threshold_bytes == Some(0) {
            return Err(ConfigError::Invalid("lfs_threshold_bytes must be positive".into()));
        }
        SplitRules::compile(&self.split_rules)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "source": {"kind": "local", "root": "data"},
        "split_rules": [{"glob": "test/**", "split": "test"}, {"glob": "**", "split": "train"}],
        "target": {"endpoint": "http://127.0.0.1:1", "repo_id": "lab/cells"},
        "workdir": "out"
    }"#;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = PipelineConfig::parse(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/etc/pub"));
        assert_eq!(c.source.root, "/etc/pub/data");
        assert_eq!(c.workdir, Path::new("/etc/pub/out"));
        assert!(c.target.token.is_none());
    }

    #[test]
    fn first_matching_rule_wins() {
        let c = PipelineConfig::parse(MINIMAL).unwrap();
        let rules = c.validate().unwrap();
        assert_eq!(rules.assign("test/a.tif"), "test");
        assert_eq!(rules.assign("train/a.tif"), "train");
        assert_eq!(rules.assign("a.tif"), "train");
        assert_eq!(rules.split_names(), ["test", "train"]);
    }

    #[test]
    fn missing_catch_all_is_rejected() {
        let rules = [SplitRule { glob: "test/**".into(), split: "test".into() }];
        assert!(matches!(SplitRules::compile(&rules), Err(ConfigError::Invalid(m)) if m.contains("catch-all")));
        assert!(SplitRules::compile(&[]).is_err());
    }

    #[test]
    fn bad_split_names() {
        for name in ["", "a/b", "tr ain", "x-y"] {
            let rules = [SplitRule { glob: "**".into(), split: name.into() }];
            assert!(SplitRules::compile(&rules).is_err(), "{name:?}");
        }
    }

    #[test]
    fn token_in_config_is_refused() {
        let text = MINIMAL.replace(r#""repo_id": "lab/cells""#, r#""repo_id": "lab/cells", "token": "hf_x""#);
        assert!(matches!(PipelineConfig::parse(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn annotation_kinds() {
        let text = MINIMAL.replace(
            r#""workdir": "out""#,
            r#""workdir": "out", "annotation_sources": [
                {"kind": "idr", "path": "idr.csv", "key_column": "Image Name"},
                {"kind": "omero", "endpoint": "http://omero.local", "image_ids": [1, 2]},
                {"kind": "user", "path": "/abs/user.csv", "key_column": "file"}
            ]"#,
        );
        let mut c = PipelineConfig::parse(&text).unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(
            c.annotation_sources,
            [
                AnnotationSourceConfig::Idr { path: "/cfg/idr.csv".into(), key_column: "Image Name".into() },
                AnnotationSourceConfig::Omero { endpoint: "http://omero.local".into(), image_ids: vec![1, 2] },
                AnnotationSourceConfig::User { path: "/abs/user.csv".into(), key_column: "file".into() },
            ]
        );
        c.validate().unwrap();

        let bad = text.replace(r#""image_ids": [1, 2]"#, r#""image_ids": [1], "extra": 1"#);
        assert!(PipelineConfig::parse(&bad).is_err());
    }

    #[test]
    fn empty_omero_ids_rejected() {
        let text = MINIMAL.replace(
            r#""workdir": "out""#,
            r#""workdir": "out", "annotation_sources": [{"kind": "omero", "endpoint": "http://o", "image_ids": []}]"#,
        );
        let c = PipelineConfig::parse(&text).unwrap();
        assert!(c.validate().is_err());
    }
}
