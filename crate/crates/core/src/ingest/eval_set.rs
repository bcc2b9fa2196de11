use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IngestError, RepoManifestEntry, SourceFileRecord};
use crate::language::LanguageId;
use crate::report::persist::{self, Meta};

/// Repositories that must not appear in an evaluation set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionList {
    urls: BTreeSet<String>,
}

fn normalize_url(url: &str) -> String {
    url.trim()
        .trim_end_matches('/')
        .trim_end_matches(".git")
        .to_ascii_lowercase()
}

impl ExclusionList {
    /// One url per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        let urls = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(normalize_url)
            .collect();
        ExclusionList { urls }
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, url: &str) -> bool {
        self.urls.contains(&normalize_url(url))
    }

    pub fn len(&self) -> usize {
        self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty()
    }
}

/// Per-language sampled evaluation files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSet {
    pub files: BTreeMap<LanguageId, Vec<SourceFileRecord>>,
    /// Languages whose pool was smaller than requested, with the pool size.
    pub short: BTreeMap<LanguageId, usize>,
}

impl EvalSet {
    /// Fingerprint of the sampled file set (language, repo, path, content).
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for (lang, files) in &self.files {
            for f in files {
                h.update(lang.name().as_bytes());
                h.update([0]);
                h.update(f.repo.as_bytes());
                h.update([0]);
                h.update(f.path.as_bytes());
                h.update([0]);
                h.update(Sha256::digest(&f.content));
            }
        }
        hex::encode(h.finalize())
    }

    pub fn len(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Build a decontaminated evaluation set.
///
/// Excluded repositories are dropped before any file is looked at; the
/// remaining files are pooled per language (ordered by repo url, path) and
/// `per_language` of them are drawn without replacement using a generator
/// seeded from `seed`, one independent stream per language.
pub fn build_eval_set<F>(
    candidates: &[RepoManifestEntry],
    exclusion: &ExclusionList,
    per_language: usize,
    seed: u64,
    mut files_of: F,
) -> Result<EvalSet, IngestError>
where
    F: FnMut(&RepoManifestEntry) -> Result<Vec<SourceFileRecord>, IngestError>,
{
    let mut pools: BTreeMap<LanguageId, Vec<SourceFileRecord>> = BTreeMap::new();
    for entry in candidates.iter().filter(|e| !exclusion.contains(&e.url)) {
        for rec in files_of(entry)? {
            pools.entry(rec.language).or_default().push(rec);
        }
    }

    let mut set = EvalSet::default();
    for (lang, mut pool) in pools {
        pool.sort_by(|a, b| (&a.repo, &a.path).cmp(&(&b.repo, &b.path)));
        if pool.len() <= per_language {
            if pool.len() < per_language {
                log::warn!(
                    "{lang}: only {} files available, {per_language} requested",
                    pool.len()
                );
                set.short.insert(lang, pool.len());
            }
            set.files.insert(lang, pool);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(lang as u64);
        let mut picked = rand::seq::index::sample(&mut rng, pool.len(), per_language).into_vec();
        picked.sort_unstable();
        let chosen = picked.into_iter().map(|i| pool[i].clone()).collect();
        set.files.insert(lang, chosen);
    }
    Ok(set)
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    language: LanguageId,
    repo: String,
    path: String,
    file: String,
}

/// Write an eval set as `<dir>/<language-slug>/<NNNN>__<flattened path>` plus
/// an `index.jsonl` mapping files back to their provenance.
pub fn write_eval_set_dir(dir: &Path, set: &EvalSet, meta: Option<&Meta>) -> crate::Result<()> {
    let mut index = Vec::new();
    for (lang, files) in &set.files {
        let sub = dir.join(lang.slug());
        std::fs::create_dir_all(&sub).map_err(|e| crate::Error::io(&sub, e))?;
        for (i, f) in files.iter().enumerate() {
            let flat: String = f
                .path
                .chars()
                .map(|c| if c == '/' { '~' } else { c })
                .collect();
            let name = format!("{i:04}__{flat}");
            persist::atomic_write(&sub.join(&name), &f.content)?;
            index.push(IndexLine {
                language: *lang,
                repo: f.repo.clone(),
                path: f.path.clone(),
                file: format!("{}/{name}", lang.slug()),
            });
        }
    }
    persist::write_jsonl(&dir.join("index.jsonl"), meta, &index)
}

/// Read an eval-set directory. Uses `index.jsonl` when present; otherwise
/// every file under a language-slug subdirectory is taken, in name order.
pub fn read_eval_set_dir(dir: &Path) -> crate::Result<EvalSet> {
    let mut set = EvalSet::default();
    let index_path = dir.join("index.jsonl");
    if index_path.exists() {
        let lines: Vec<IndexLine> = persist::read_jsonl(&index_path)?;
        for l in lines {
            let p = dir.join(&l.file);
            let content = std::fs::read(&p).map_err(|e| crate::Error::io(&p, e))?;
            set.files
                .entry(l.language)
                .or_default()
                .push(SourceFileRecord::new(l.repo, l.path, l.language, content));
        }
        return Ok(set);
    }
    for lang in LanguageId::ALL {
        let sub = dir.join(lang.slug());
        if !sub.is_dir() {
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(&sub)
            .map_err(|e| crate::Error::io(&sub, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            let p = sub.join(&name);
            let content = std::fs::read(&p).map_err(|e| crate::Error::io(&p, e))?;
            set.files
                .entry(lang)
                .or_default()
                .push(SourceFileRecord::new("", name, lang, content));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn entry(url: &str) -> RepoManifestEntry {
        RepoManifestEntry {
            url: url.into(),
            stars: 100,
            language: None,
            retrieved_at: chrono::Utc.with_ymd_and_hms(2021, 10, 1, 0, 0, 0).unwrap(),
        }
    }

    fn fake_files(n: usize, lang: LanguageId) -> impl FnMut(&RepoManifestEntry) -> Result<Vec<SourceFileRecord>, IngestError> {
        move |e| {
            Ok((0..n)
                .map(|i| SourceFileRecord::new(&e.url, format!("f{i:03}.x"), lang, format!("{} {i}", e.url).into_bytes()))
                .collect())
        }
    }

    #[test]
    fn exclusion_parsing() {
        let ex = ExclusionList::parse("# pile repos\nhttps://github.com/A/B.git\n\n  https://github.com/c/d/ \n");
        assert_eq!(ex.len(), 2);
        assert!(ex.contains("https://github.com/a/b"));
        assert!(ex.contains("https://github.com/c/d"));
        assert!(!ex.contains("https://github.com/e/f"));
    }

    #[test]
    fn excluded_repos_never_sampled() {
        let cands = [entry("https://h/r1"), entry("https://h/r2"), entry("https://h/r3")];
        let ex = ExclusionList::parse("https://h/r2\n");
        let set = build_eval_set(&cands, &ex, 100, 7, fake_files(10, LanguageId::Go)).unwrap();
        let repos: BTreeSet<_> = set.files[&LanguageId::Go].iter().map(|f| f.repo.clone()).collect();
        assert_eq!(repos, BTreeSet::from(["https://h/r1".to_string(), "https://h/r3".to_string()]));
    }

    #[test]
    fn short_pool_returns_all_with_warning() {
        let cands = [entry("https://h/r1"), entry("https://h/r2")];
        let set = build_eval_set(&cands, &ExclusionList::default(), 100, 1, fake_files(20, LanguageId::Php)).unwrap();
        assert_eq!(set.files[&LanguageId::Php].len(), 40);
        assert_eq!(set.short.get(&LanguageId::Php), Some(&40));
    }

    #[test]
    fn sampling_is_seeded() {
        let cands: Vec<_> = (0..5).map(|i| entry(&format!("https://h/r{i}"))).collect();
        let a = build_eval_set(&cands, &ExclusionList::default(), 30, 42, fake_files(20, LanguageId::Ruby)).unwrap();
        let b = build_eval_set(&cands, &ExclusionList::default(), 30, 42, fake_files(20, LanguageId::Ruby)).unwrap();
        let c = build_eval_set(&cands, &ExclusionList::default(), 30, 43, fake_files(20, LanguageId::Ruby)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id(), b.id());
        assert_eq!(a.files[&LanguageId::Ruby].len(), 30);
        assert_ne!(a.id(), c.id());
        assert!(a.short.is_empty());
    }

    #[test]
    fn dir_roundtrip() {
        let cands = [entry("https://h/r1")];
        let set = build_eval_set(&cands, &ExclusionList::default(), 3, 1, fake_files(5, LanguageId::CSharp)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_eval_set_dir(dir.path(), &set, None).unwrap();
        let back = read_eval_set_dir(dir.path()).unwrap();
        assert_eq!(back.files, set.files);
        assert_eq!(back.id(), set.id());
    }
}
