//! Repository manifest → per-file records of each repository's majority language.

mod clone;
mod eval_set;
mod extract;
mod manifest;
mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::language::LanguageId;

pub use clone::{clone_repo, repo_dir_name, CloneDriver, CloneOutcome};
pub use eval_set::{
    build_eval_set, read_eval_set_dir, write_eval_set_dir, EvalSet, ExclusionList,
};
pub use extract::{detect_majority_language, extract_files, list_repo_files, Extraction};
pub use manifest::{
    load_manifest, parse_manifest, write_manifest, ManifestOptions, RepoManifestEntry,
};
pub use record::{read_records, write_records, SourceFileRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
    #[error("manifest line {line}: duplicate url `{url}`")]
    DuplicateUrl { line: usize, url: String },
    #[error("no recognized language among {files} files")]
    NoRecognizedLanguage { files: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Per-repository result of a batch ingest.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RepoOutcome {
    pub url: String,
    pub clone: CloneOutcome,
    pub language: Option<LanguageId>,
    pub files: usize,
    pub unreadable: usize,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct IngestRun {
    /// Sorted by (repo url, path).
    pub records: Vec<SourceFileRecord>,
    /// Bytes per language before any filtering.
    pub before_totals: BTreeMap<LanguageId, u64>,
    /// One entry per manifest entry, in manifest order.
    pub outcomes: Vec<RepoOutcome>,
}

/// Clone and extract every manifest entry on a pool of `jobs` workers.
///
/// Each repository is handled by exactly one worker; the merged record stream
/// is sorted by (repo url, path) so the result does not depend on scheduling.
pub fn run_ingest(
    entries: &[RepoManifestEntry],
    dest: &Path,
    driver: &CloneDriver,
    jobs: usize,
) -> Result<IngestRun, IngestError> {
    std::fs::create_dir_all(dest).map_err(|e| IngestError::io(dest, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let per_repo: Vec<(RepoOutcome, Vec<SourceFileRecord>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| ingest_one(entry, dest, driver))
            .collect()
    });

    let mut run = IngestRun::default();
    for (outcome, records) in per_repo {
        run.outcomes.push(outcome);
        run.records.extend(records);
    }
    run.records
        .sort_by(|a, b| (&a.repo, &a.path).cmp(&(&b.repo, &b.path)));
    for r in &run.records {
        *run.before_totals.entry(r.language).or_default() += r.byte_size;
    }
    Ok(run)
}

fn ingest_one(
    entry: &RepoManifestEntry,
    dest: &Path,
    driver: &CloneDriver,
) -> (RepoOutcome, Vec<SourceFileRecord>) {
    let clone = clone_repo(entry, dest, driver);
    let mut outcome = RepoOutcome {
        url: entry.url.clone(),
        clone: clone.clone(),
        language: None,
        files: 0,
        unreadable: 0,
        error: None,
    };
    let dir = match clone {
        CloneOutcome::Succeeded(dir) | CloneOutcome::Skipped(dir) => dir,
        CloneOutcome::Failed(reason) => {
            log::warn!("clone failed for {}: {reason}", entry.url);
            outcome.error = Some(format!("clone: {reason}"));
            return (outcome, Vec::new());
        }
    };
    let files = match list_repo_files(&dir) {
        Ok(f) => f,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return (outcome, Vec::new());
        }
    };
    let lang = match detect_majority_language(&files) {
        Ok(l) => l,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return (outcome, Vec::new());
        }
    };
    outcome.language = Some(lang);
    match extract_files(&dir, &entry.url, lang) {
        Ok(ex) => {
            outcome.files = ex.records.len();
            outcome.unreadable = ex.unreadable;
            (outcome, ex.records)
        }
        Err(e) => {
            outcome.error = Some(e.to_string());
            (outcome, Vec::new())
        }
    }
}
