//! End-to-end stages: inspect, publish, validate.
//!
//! Publishing materializes the full repo layout under the workdir before
//! any hub request, so a dry run and a real run leave the same tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::card::{self, Answers, CardError, PartialCardFields, Prompter, SizeCategory};
use crate::config::{AnnotationSourceConfig, ConfigError, PipelineConfig, SplitRules};
use crate::croissant::{self, CroissantError, DatasetIdentity, Distribution};
use crate::hub::{
    check_size_budget_with_limit, BudgetVerdict, CommitPlan, DirectoryContent, HubClient, HubError, HubOptions,
    PlannedFile, TransferMode, BUDGET_LIMIT_BYTES, DEFAULT_LFS_THRESHOLD,
};
use crate::image::{self, ImageError, ImageRecord};
use crate::metadata::{
    self, AnnotationSource, AnnotationTable, MetadataError, OmeroOptions, SplitManifest, MANIFEST_FILE_NAME,
};
use crate::source::{path, select_partial, Source, SourceEntry, SourceError, SourceLocator};

/// Present in every workdir this tool created; only such a workdir is
/// cleared on the next run.
pub const WORKDIR_MARKER: &str = ".bioimagepub";
const MARKER_CONTENT: &[u8] = b"bioimagepub workdir\n";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Source,
    Conversion,
    Metadata,
    Hub,
    Budget,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Source => 3,
            Stage::Conversion => 4,
            Stage::Metadata => 5,
            Stage::Hub => 6,
            Stage::Budget => 7,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Source => "source",
            Stage::Conversion => "conversion",
            Stage::Metadata => "metadata",
            Stage::Hub => "hub",
            Stage::Budget => "budget",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigError),
    #[error("workdir {path}: {source}")]
    Workdir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("no image files among {0} selected entries")]
    NoImages(usize),
    #[error("{path}: {source}")]
    Conversion {
        path: String,
        #[source]
        source: ImageError,
    },
    #[error("converted outputs collide at {0}")]
    OutputCollision(String),
    #[error("{context}: {source}")]
    Metadata {
        context: String,
        #[source]
        source: MetadataError,
    },
    #[error("annotation table {path}: {source}")]
    AnnotationFile {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("dataset card: {0}")]
    Card(#[from] CardError),
    #[error("croissant: {0}")]
    Croissant(#[from] CroissantError),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(
        "upload of {total_bytes} bytes exceeds the {limit} byte budget; \
         rerun with --ack-large-dataset to proceed"
    )]
    BudgetBlocked { total_bytes: u64, limit: u64 },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::ConfigInvalid(_) | PipelineError::Workdir { .. } => Stage::Config,
            PipelineError::Source(_) | PipelineError::NoImages(_) => Stage::Source,
            PipelineError::Conversion { .. } | PipelineError::OutputCollision(_) => Stage::Conversion,
            PipelineError::Metadata { .. }
            | PipelineError::AnnotationFile { .. }
            | PipelineError::Card(_)
            | PipelineError::Croissant(_) => Stage::Metadata,
            PipelineError::Hub(_) => Stage::Hub,
            PipelineError::BudgetBlocked { .. } => Stage::Budget,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage().exit_code()
    }
}

fn workdir_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Workdir { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug)]
pub struct PublishOptions {
    pub dry_run: bool,
    pub acknowledge_large: bool,
    /// Bounds the conversion pool, the OMERO pool and the LFS upload pool.
    pub workers: usize,
    /// Overrides `card_answers` from the config.
    pub answers: Option<PathBuf>,
    pub token: Option<String>,
}

impl Default for PublishOptions {
    fn default() -> Self {
        PublishOptions {
            dry_run: false,
            acknowledge_large: false,
            workers: 4,
            answers: None,
            token: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublishReport {
    pub listed: usize,
    pub selected: usize,
    /// Selected entries that are not images.
    pub skipped_sources: Vec<String>,
    /// Source images converted.
    pub converted: usize,
    /// Image files produced (planes and channels may split one source).
    pub image_files: usize,
    pub annotated_keys: usize,
    pub omero_failures: usize,
    pub manifest_rows: usize,
    pub splits: Vec<(String, usize)>,
    pub planned_files: usize,
    pub total_bytes: u64,
    pub budget: BudgetVerdict,
    pub uploaded: Vec<String>,
    pub upload_skipped: Vec<String>,
    pub lfs_bytes_sent: u64,
    pub inline_bytes_sent: u64,
    /// Commit id, the unchanged head, or "dry-run".
    pub revision: String,
}

impl fmt::Display for PublishReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "listed:         {}", self.listed)?;
        writeln!(f, "selected:       {}", self.selected)?;
        if !self.skipped_sources.is_empty() {
            writeln!(f, "skipped:        {} (not images)", self.skipped_sources.len())?;
        }
        writeln!(f, "converted:      {} ({} image files)", self.converted, self.image_files)?;
        writeln!(f, "annotated keys: {}", self.annotated_keys)?;
        if self.omero_failures > 0 {
            writeln!(f, "omero failures: {}", self.omero_failures)?;
        }
        writeln!(f, "manifest rows:  {}", self.manifest_rows)?;
        for (split, n) in &self.splits {
            writeln!(f, "  {split}: {n}")?;
        }
        writeln!(f, "planned files:  {} ({} bytes)", self.planned_files, self.total_bytes)?;
        writeln!(f, "uploaded:       {}", self.uploaded.len())?;
        writeln!(f, "unchanged:      {}", self.upload_skipped.len())?;
        writeln!(f, "bytes sent:     {}", self.lfs_bytes_sent + self.inline_bytes_sent)?;
        write!(f, "revision:       {}", self.revision)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InspectReport {
    pub listed: usize,
    pub total_bytes: u64,
    /// Lowercased extension → count; files without one count under "".
    pub extensions: BTreeMap<String, usize>,
    pub selected: usize,
    pub selected_bytes: u64,
    /// Selected entries per split, in split rule order.
    pub splits: Vec<(String, usize)>,
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "files:       {}", self.listed)?;
        writeln!(f, "total bytes: {}", self.total_bytes)?;
        let hist: Vec<String> = self
            .extensions
            .iter()
            .map(|(ext, n)| format!("{}:{n}", if ext.is_empty() { "(none)" } else { ext }))
            .collect();
        writeln!(f, "extensions:  {}", hist.join(" "))?;
        writeln!(f, "selected {} of {} ({} bytes)", self.selected, self.listed, self.selected_bytes)?;
        for (i, (split, n)) in self.splits.iter().enumerate() {
            write!(f, "split {split}: {n}")?;
            if i + 1 < self.splits.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Inventory summary; lists only, never fetches content.
pub fn run_inspect(config: &PipelineConfig) -> Result<InspectReport, PipelineError> {
    let rules = config.validate()?;
    let source = Source::open_with_retry(&config.source, config.retry.source_policy())?;
    let inventory = source.list()?;
    let selected = select_partial(&inventory, &config.selector)?;

    let mut extensions = BTreeMap::new();
    for e in inventory.entries() {
        *extensions.entry(path::extension(&e.relative_path).unwrap_or_default()).or_insert(0) += 1;
    }
    let splits = count_splits(&rules, selected.entries().iter().map(|e| e.relative_path.as_str()));
    Ok(InspectReport {
        listed: inventory.len(),
        total_bytes: inventory.total_bytes(),
        extensions,
        selected: selected.len(),
        selected_bytes: selected.total_bytes(),
        splits,
    })
}

fn count_splits<'a>(rules: &SplitRules, paths: impl Iterator<Item = &'a str>) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = rules.split_names().into_iter().map(|s| (s.to_string(), 0)).collect();
    for p in paths {
        let split = rules.assign(p);
        if let Some(c) = counts.iter_mut().find(|(s, _)| s == split) {
            c.1 += 1;
        }
    }
    counts
}

fn is_image_path(p: &str) -> bool {
    path::extension(p).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

/// Empty or create `dir`. A non-empty directory without the marker is
/// left alone and reported as a config error.
fn prepare_workdir(dir: &Path) -> Result<(), PipelineError> {
    let err = |source| PipelineError::Workdir { path: dir.to_path_buf(), source };
    if dir.exists() {
        let entries: Vec<_> = fs::read_dir(dir).map_err(err)?.collect::<Result<_, _>>().map_err(err)?;
        if !entries.is_empty() {
            if !dir.join(WORKDIR_MARKER).is_file() {
                return Err(err(io::Error::other(
                    "directory is not empty and was not created by bioimagepub; refusing to clear it",
                )));
            }
            for e in entries {
                let p = e.path();
                if e.file_type().map_err(err)?.is_dir() {
                    fs::remove_dir_all(&p).map_err(err)?;
                } else if e.file_name() != WORKDIR_MARKER {
                    fs::remove_file(&p).map_err(err)?;
                }
            }
        }
    } else {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(dir.join(WORKDIR_MARKER), MARKER_CONTENT).map_err(err)
}

fn write_artifact(workdir: &Path, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    let full = workdir.join(rel);
    if let Some(parent) = full.parent() {
        fs::create_dir_all(parent).map_err(workdir_err(parent))?;
    }
    fs::write(&full, bytes).map_err(workdir_err(&full))
}

enum ConvertFailure {
    Source(SourceError),
    Image { path: String, source: ImageError },
    Workdir(PipelineError),
}

/// Output lands at `{split}/{source path}`, minus a leading directory that
/// already carries the split name.
fn convert_entry(
    source: &Source,
    entry: &SourceEntry,
    split: &str,
    config: &PipelineConfig,
) -> Result<Vec<ImageRecord>, ConvertFailure> {
    let bytes = source.fetch(entry).map_err(ConvertFailure::Source)?;
    let image_err = |source| ConvertFailure::Image { path: entry.relative_path.clone(), source };
    let raw = image::decode(&bytes, &entry.relative_path).map_err(image_err)?;
    drop(bytes);
    let rel = entry.relative_path.as_str();
    let within = rel.strip_prefix(split).and_then(|r| r.strip_prefix('/')).unwrap_or(rel);
    let base = format!("{split}/{}", path::strip_extension(within));
    let outputs = image::convert(&raw, &config.conversion, &base, &entry.relative_path).map_err(image_err)?;
    let mut records = Vec::with_capacity(outputs.len());
    for out in outputs {
        write_artifact(&config.workdir, &out.relative_path, &out.bytes).map_err(ConvertFailure::Workdir)?;
        records.push(ImageRecord::from(&out));
    }
    Ok(records)
}

fn harvest_annotations(
    config: &PipelineConfig,
    workers: usize,
) -> Result<(Vec<AnnotationTable>, usize), PipelineError> {
    let mut tables = Vec::with_capacity(config.annotation_sources.len());
    let mut omero_failures = 0;
    for src in &config.annotation_sources {
        match src {
            AnnotationSourceConfig::Idr { path, key_column } | AnnotationSourceConfig::User { path, key_column } => {
                let kind = if matches!(src, AnnotationSourceConfig::Idr { .. }) {
                    AnnotationSource::Idr
                } else {
                    AnnotationSource::User
                };
                let bytes = fs::read(path)
                    .map_err(|source| PipelineError::AnnotationFile { path: path.clone(), source })?;
                let harvested = metadata::harvest_table(&bytes, key_column, kind).map_err(|source| {
                    PipelineError::Metadata { context: path.display().to_string(), source }
                })?;
                if harvested.duplicate_keys > 0 {
                    warn!("{}: {} repeated keys, later rows kept", path.display(), harvested.duplicate_keys);
                }
                info!("{kind} table {}: {} rows", path.display(), harvested.table.len());
                tables.push(harvested.table);
            }
            AnnotationSourceConfig::Omero { endpoint, image_ids } => {
                let options = OmeroOptions {
                    concurrency: workers,
                    retry: config.retry.source_policy(),
                    ..OmeroOptions::default()
                };
                let h = metadata::harvest_omero(endpoint, image_ids, &options)
                    .map_err(|source| PipelineError::Metadata { context: endpoint.clone(), source })?;
                for f in &h.failures {
                    warn!("OMERO image {}: {f:?}", f.id());
                }
                omero_failures += h.failures.len();
                info!("OMERO {endpoint}: {} of {} images annotated", h.succeeded.len(), image_ids.len());
                tables.push(h.table);
            }
        }
    }
    Ok((tables, omero_failures))
}

fn card_fields(
    config: &PipelineConfig,
    options: &PublishOptions,
    rows: u64,
    prompter: Option<&mut dyn Prompter>,
) -> Result<card::CardFields, PipelineError> {
    let mut partial = match &config.study_accession {
        Some(acc) => {
            let base = config.study_api_base.as_deref().unwrap_or(card::BIOSTUDIES_API_BASE);
            card::harvest_study_metadata(acc, base, &config.retry.source_policy())?
        }
        None => PartialCardFields::default(),
    };
    partial.size_category = SizeCategory::from_rows(rows);
    let answers = match options.answers.as_ref().or(config.card_answers.as_ref()) {
        Some(p) => Answers::load(p)?,
        None => Answers::default(),
    };
    Ok(card::prompt_missing(partial, &answers, prompter)?)
}

/// Run every stage. With `dry_run` the run stops after the budget check,
/// leaving the complete repo layout in the workdir.
pub fn run_publish(
    config: &PipelineConfig,
    options: &PublishOptions,
    prompter: Option<&mut dyn Prompter>,
) -> Result<PublishReport, PipelineError> {
    let rules = config.validate()?;
    let workers = options.workers.max(1);
    let target = config.target.clone().with_token(options.token.clone());
    target.validate()?;

    let source = Source::open_with_retry(&config.source, config.retry.source_policy())?;
    let inventory = source.list()?;
    let selected = select_partial(&inventory, &config.selector)?;
    info!("listed {} entries, selected {}", inventory.len(), selected.len());

    let (images, skipped): (Vec<&SourceEntry>, Vec<&SourceEntry>) =
        selected.entries().iter().partition(|e| is_image_path(&e.relative_path));
    for e in &skipped {
        warn!("skipping {}: not a PNG or TIFF file", e.relative_path);
    }
    if images.is_empty() {
        return Err(PipelineError::NoImages(selected.len()));
    }

    prepare_workdir(&config.workdir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Workdir { path: config.workdir.clone(), source: io::Error::other(e) })?;
    let results: Vec<Result<Vec<ImageRecord>, ConvertFailure>> = pool.install(|| {
        images
            .par_iter()
            .map(|e| convert_entry(&source, e, rules.assign(&e.relative_path), config))
            .collect()
    });
    let mut records: Vec<ImageRecord> = Vec::new();
    for r in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(ConvertFailure::Source(e)) => return Err(e.into()),
            Err(ConvertFailure::Image { path, source }) => return Err(PipelineError::Conversion { path, source }),
            Err(ConvertFailure::Workdir(e)) => return Err(e),
        }
    }
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.relative_path.as_str()) {
            return Err(PipelineError::OutputCollision(r.relative_path.clone()));
        }
    }
    info!("converted {} sources into {} files", images.len(), records.len());

    let (tables, omero_failures) = harvest_annotations(config, workers)?;
    let merged = metadata::merge(&tables);

    let mut manifests: Vec<SplitManifest> = Vec::new();
    let mut split_counts = Vec::new();
    for split in rules.split_names() {
        let prefix = format!("{split}/");
        let in_split: Vec<&ImageRecord> = records.iter().filter(|r| r.relative_path.starts_with(&prefix)).collect();
        if in_split.is_empty() {
            continue;
        }
        let m = metadata::build_manifest(split, &in_split, &merged, |r| config.image_key.key_for(r))
            .map_err(|source| PipelineError::Metadata { context: format!("split {split}"), source })?;
        split_counts.push((split.to_string(), m.rows.len()));
        manifests.push(m);
    }
    let manifest_rows: usize = manifests.iter().map(|m| m.rows.len()).sum();

    let fields = card_fields(config, options, manifest_rows as u64, prompter)?;
    let identity = DatasetIdentity {
        name: fields.pretty_name.clone(),
        description: fields.description.clone(),
        license: fields.license.clone(),
        url: target.repo_url(),
        keywords: fields.tags.clone(),
        citation: Some(fields.citation.clone()),
        creators: fields.authors.clone(),
    };
    let doc = croissant::generate_croissant(&identity, &manifests, config.conversion.target_format)?;

    let threshold = config.lfs_threshold_bytes.unwrap_or(DEFAULT_LFS_THRESHOLD);
    let mut planned: Vec<PlannedFile> = records
        .iter()
        .map(|r| PlannedFile {
            path: r.relative_path.clone(),
            size_bytes: r.size_bytes,
            sha256: r.sha256,
            mode: if r.size_bytes <= threshold { TransferMode::Inline } else { TransferMode::Lfs },
        })
        .collect();
    let mut metadata_files: Vec<(String, Vec<u8>)> = manifests
        .iter()
        .map(|m| (format!("{}/{MANIFEST_FILE_NAME}", m.split), metadata::serialize_manifest(m)))
        .collect();
    metadata_files.push((croissant::FILE_NAME.to_string(), croissant::serialize_jsonld(&doc)));
    metadata_files.push((card::CARD_FILE_NAME.to_string(), card::render_card(&fields)));
    for (rel, bytes) in &metadata_files {
        write_artifact(&config.workdir, rel, bytes)?;
        planned.push(PlannedFile::from_bytes(rel.clone(), bytes, threshold));
    }

    let summary = config
        .commit_summary
        .clone()
        .unwrap_or_else(|| format!("Publish {} images", records.len()));
    let plan = CommitPlan::new(target.clone(), planned, summary)?;
    let limit = config.budget_limit_bytes.unwrap_or(BUDGET_LIMIT_BYTES);
    let budget = check_size_budget_with_limit(&plan, limit);
    if budget.blocks_upload(options.acknowledge_large || config.acknowledge_large) {
        return Err(PipelineError::BudgetBlocked { total_bytes: plan.total_bytes(), limit });
    }

    let mut report = PublishReport {
        listed: inventory.len(),
        selected: selected.len(),
        skipped_sources: skipped.iter().map(|e| e.relative_path.clone()).collect(),
        converted: images.len(),
        image_files: records.len(),
        annotated_keys: merged.rows.len(),
        omero_failures,
        manifest_rows,
        splits: split_counts,
        planned_files: plan.files().len(),
        total_bytes: plan.total_bytes(),
        budget,
        uploaded: Vec::new(),
        upload_skipped: Vec::new(),
        lfs_bytes_sent: 0,
        inline_bytes_sent: 0,
        revision: "dry-run".into(),
    };
    if options.dry_run {
        return Ok(report);
    }

    let client = HubClient::new(HubOptions {
        retry: config.retry.hub_policy(),
        lfs_workers: workers,
        ..HubOptions::default()
    })?;
    let repo = client.ensure_repo(&target)?;
    let upload = client.upload(&plan, &DirectoryContent { root: config.workdir.clone() })?;
    report.revision = upload
        .commit
        .clone()
        .or(repo.head)
        .unwrap_or_else(|| "unchanged".into());
    report.uploaded = upload.uploaded;
    report.upload_skipped = upload.skipped;
    report.lfs_bytes_sent = upload.lfs_bytes_sent;
    report.inline_bytes_sent = upload.inline_bytes_sent;
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkdirReport {
    pub files: usize,
    pub violations: Vec<String>,
}

impl WorkdirReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for WorkdirReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "{} files, no violations", self.files);
        }
        writeln!(f, "{} files, {} violations:", self.files, self.violations.len())?;
        for (i, v) in self.violations.iter().enumerate() {
            write!(f, "  {v}")?;
            if i + 1 < self.violations.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Check a materialized layout. Problems are reported, never raised.
pub fn run_validate(workdir: &Path) -> WorkdirReport {
    let mut report = WorkdirReport::default();
    let v = &mut report.violations;
    let locator = SourceLocator::local(workdir.to_string_lossy());
    let listing = Source::open(&locator).and_then(|s| s.list());
    let inventory = match listing {
        Ok(inv) => inv,
        Err(e) => {
            v.push(format!("cannot list workdir: {e}"));
            return report;
        }
    };
    report.files = inventory.len();
    let present: BTreeSet<&str> = inventory.entries().iter().map(|e| e.relative_path.as_str()).collect();
    let read = |rel: &str| fs::read(workdir.join(rel));

    match read(croissant::FILE_NAME) {
        Err(_) => v.push(format!("missing file: {}", croissant::FILE_NAME)),
        Ok(bytes) => {
            match croissant::validate_croissant(&bytes) {
                Ok(r) => {
                    for viol in r.violations {
                        v.push(format!("{}: {:?}: {}", croissant::FILE_NAME, viol.class, viol.message));
                    }
                }
                Err(e) => v.push(format!("{}: {e}", croissant::FILE_NAME)),
            }
            if let Ok(doc) = croissant::parse_jsonld(&bytes) {
                for d in &doc.distribution {
                    if let Distribution::FileObject(fo) = d {
                        match read(&fo.content_url) {
                            Err(_) => v.push(format!("missing file: {}", fo.content_url)),
                            Ok(b) => {
                                if hex::encode(<[u8; 32]>::from(Sha256::digest(&b))) != fo.sha256 {
                                    v.push(format!("checksum mismatch: {}", fo.content_url));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    match read(card::CARD_FILE_NAME) {
        Err(_) => v.push(format!("missing file: {}", card::CARD_FILE_NAME)),
        Ok(bytes) => {
            let text = String::from_utf8_lossy(&bytes);
            let closed = text
                .strip_prefix("---\n")
                .is_some_and(|rest| rest.starts_with("---\n") || rest.contains("\n---\n"));
            if !closed {
                v.push(format!("{}: missing YAML front matter", card::CARD_FILE_NAME));
            }
        }
    }

    let mut referenced: BTreeMap<String, usize> = BTreeMap::new();
    for rel in present.iter().filter(|p| {
        p.split_once('/').is_some_and(|(split, rest)| !split.is_empty() && rest == MANIFEST_FILE_NAME)
    }) {
        let split = rel.split_once('/').map(|(s, _)| s).unwrap_or_default();
        let parsed = read(rel)
            .map_err(|e| e.to_string())
            .and_then(|b| metadata::parse_manifest(split, &b).map_err(|e| e.to_string()));
        match parsed {
            Err(e) => v.push(format!("{rel}: {e}")),
            Ok(m) => {
                for row in &m.rows {
                    let file = format!("{split}/{}", row.file_name);
                    if !present.contains(file.as_str()) {
                        v.push(format!("missing file: {file} (listed in {rel})"));
                    }
                    *referenced.entry(file).or_insert(0) += 1;
                }
            }
        }
    }
    for p in present.iter().filter(|p| is_image_path(p)) {
        match referenced.get(*p) {
            None => v.push(format!("orphan image: {p}")),
            Some(n) if *n > 1 => v.push(format!("image listed {n} times: {p}")),
            Some(_) => {}
        }
    }
    report
}
