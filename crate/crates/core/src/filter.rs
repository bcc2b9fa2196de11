//! Size/length filters, exact content-hash dedup and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::SourceFileRecord;
use crate::language::LanguageId;

/// Filter thresholds. The extended filters are off unless set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Reject when `byte_size > max_bytes`.
    pub max_bytes: u64,
    /// Reject when `ws_token_count < min_ws_tokens`.
    pub min_ws_tokens: u64,
    /// Reject when any line is longer than this many bytes.
    pub max_line_length: Option<u64>,
    /// Reject when the mean line length in bytes exceeds this.
    pub mean_line_length: Option<f64>,
    /// Reject when the fraction of alphanumeric bytes is below this.
    pub min_alnum_fraction: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_bytes: 1_048_576,
            min_ws_tokens: 100,
            max_line_length: None,
            mean_line_length: None,
            min_alnum_fraction: None,
        }
    }
}

impl FilterConfig {
    /// The stricter line-length and alphanumeric filters used by some other
    /// code corpora, on top of the defaults.
    pub fn extended() -> Self {
        FilterConfig {
            max_line_length: Some(1000),
            mean_line_length: Some(100.0),
            min_alnum_fraction: Some(0.25),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_bytes == 0 {
            return Err("max_bytes must be > 0".into());
        }
        if let Some(f) = self.min_alnum_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err("min_alnum_fraction must lie in [0, 1]".into());
            }
        }
        if let Some(m) = self.mean_line_length {
            if !(m > 0.0) {
                return Err("mean_line_length must be > 0".into());
            }
        }
        Ok(())
    }

    /// Parse a TOML key/value document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: FilterConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_toml(&text).map_err(|m| crate::Error::Config(format!("{}: {m}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    TooLarge,
    TooShort,
    LineTooLong,
    MeanLineTooLong,
    LowAlnum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

impl FilterDecision {
    pub fn is_keep(self) -> bool {
        self == FilterDecision::Keep
    }
}

/// Pure per-file decision; checks run in a fixed order, first match wins.
pub fn filter_file(record: &SourceFileRecord, config: &FilterConfig) -> FilterDecision {
    use FilterDecision::Reject;
    if record.byte_size > config.max_bytes {
        return Reject(RejectReason::TooLarge);
    }
    if record.ws_token_count < config.min_ws_tokens {
        return Reject(RejectReason::TooShort);
    }
    let content = &record.content;
    if config.max_line_length.is_some() || config.mean_line_length.is_some() {
        let lines: Vec<usize> = content
            .split(|&b| b == b'\n')
            .map(|l| l.strip_suffix(b"\r").unwrap_or(l).len())
            .collect();
        if let Some(max) = config.max_line_length {
            if lines.iter().any(|&l| l as u64 > max) {
                return Reject(RejectReason::LineTooLong);
            }
        }
        if let Some(mean_max) = config.mean_line_length {
            let mean = lines.iter().sum::<usize>() as f64 / lines.len() as f64;
            if mean > mean_max {
                return Reject(RejectReason::MeanLineTooLong);
            }
        }
    }
    if let Some(min_frac) = config.min_alnum_fraction {
        let frac = if content.is_empty() {
            0.0
        } else {
            content.iter().filter(|b| b.is_ascii_alphanumeric()).count() as f64
                / content.len() as f64
        };
        if frac < min_frac {
            return Reject(RejectReason::LowAlnum);
        }
    }
    FilterDecision::Keep
}

/// Per-reason counts of a filter pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub files_in: u64,
    pub files_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
}

/// Filter a record stream, keeping order.
pub fn filter_records(
    records: Vec<SourceFileRecord>,
    config: &FilterConfig,
) -> (Vec<SourceFileRecord>, FilterStats) {
    let decisions: Vec<FilterDecision> = records.par_iter().map(|r| filter_file(r, config)).collect();
    let mut stats = FilterStats::default();
    let mut kept = Vec::with_capacity(records.len());
    for (rec, decision) in records.into_iter().zip(decisions) {
        stats.files_in += 1;
        stats.bytes_in += rec.byte_size;
        match decision {
            FilterDecision::Keep => {
                stats.files_out += 1;
                stats.bytes_out += rec.byte_size;
                kept.push(rec);
            }
            FilterDecision::Reject(reason) => *stats.rejected.entry(reason).or_default() += 1,
        }
    }
    (kept, stats)
}

/// Lowercase hex SHA-256 of the raw bytes, no normalization.
pub fn content_hash(content: &[u8]) -> String {
    hex::encode(Sha256::digest(content))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub files_in: u64,
    pub files_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub duplicates_removed: u64,
}

/// Exact dedup: the first occurrence of each digest wins.
///
/// Hashes are computed in parallel; resolution is a single serial pass over
/// the input order, so the result is reproducible for a fixed order. Every
/// surviving record carries its digest.
pub fn dedup(records: Vec<SourceFileRecord>) -> (Vec<SourceFileRecord>, DedupStats) {
    let digests: Vec<String> = records
        .par_iter()
        .map(|r| r.digest.clone().unwrap_or_else(|| content_hash(&r.content)))
        .collect();
    let mut seen: HashSet<String> = HashSet::with_capacity(records.len());
    let mut stats = DedupStats::default();
    let mut kept = Vec::with_capacity(records.len());
    for (mut rec, digest) in records.into_iter().zip(digests) {
        stats.files_in += 1;
        stats.bytes_in += rec.byte_size;
        if seen.contains(&digest) {
            stats.duplicates_removed += 1;
            continue;
        }
        seen.insert(digest.clone());
        rec.digest = Some(digest);
        stats.files_out += 1;
        stats.bytes_out += rec.byte_size;
        kept.push(rec);
    }
    (kept, stats)
}

/// Row label of the statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatsLabel {
    Language(LanguageId),
    Total,
}

impl std::fmt::Display for StatsLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatsLabel::Language(l) => write!(f, "{l}"),
            StatsLabel::Total => f.write_str("Total"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStatsRow {
    pub language: StatsLabel,
    /// Repositories with at least one surviving file.
    pub repositories: u64,
    pub files: u64,
    pub size_before: u64,
    pub size_after: u64,
}

pub const STATS_HEADERS: [&str; 5] = [
    "Language",
    "Repositories",
    "Files",
    "Size Before Filtering",
    "Size After Filtering",
];

/// One row per corpus language (all twelve, zero-filled) plus a Total row.
pub fn corpus_stats<'a, I>(records: I, before_totals: &BTreeMap<LanguageId, u64>) -> Vec<CorpusStatsRow>
where
    I: IntoIterator<Item = &'a SourceFileRecord>,
{
    let mut repos: BTreeMap<LanguageId, BTreeSet<&str>> = BTreeMap::new();
    let mut files: BTreeMap<LanguageId, u64> = BTreeMap::new();
    let mut bytes: BTreeMap<LanguageId, u64> = BTreeMap::new();
    for r in records {
        repos.entry(r.language).or_default().insert(r.repo.as_str());
        *files.entry(r.language).or_default() += 1;
        *bytes.entry(r.language).or_default() += r.byte_size;
    }
    let mut rows: Vec<CorpusStatsRow> = LanguageId::ALL
        .iter()
        .map(|&lang| CorpusStatsRow {
            language: StatsLabel::Language(lang),
            repositories: repos.get(&lang).map_or(0, |s| s.len() as u64),
            files: files.get(&lang).copied().unwrap_or(0),
            size_before: before_totals.get(&lang).copied().unwrap_or(0),
            size_after: bytes.get(&lang).copied().unwrap_or(0),
        })
        .collect();
    let total = rows.iter().fold(
        CorpusStatsRow {
            language: StatsLabel::Total,
            repositories: 0,
            files: 0,
            size_before: 0,
            size_after: 0,
        },
        |mut acc, r| {
            acc.repositories += r.repositories;
            acc.files += r.files;
            acc.size_before += r.size_before;
            acc.size_after += r.size_after;
            acc
        },
    );
    rows.push(total);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(repo: &str, path: &str, lang: LanguageId, content: &[u8]) -> SourceFileRecord {
        SourceFileRecord::new(repo, path, lang, content.to_vec())
    }

    fn words(n: usize) -> Vec<u8> {
        vec!["w"; n].join(" ").into_bytes()
    }

    #[test]
    fn size_boundary_is_strict() {
        let cfg = FilterConfig::default();
        let mut r = rec("u", "a.c", LanguageId::C, &words(150));
        r.byte_size = 1_048_576;
        assert_eq!(filter_file(&r, &cfg), FilterDecision::Keep);
        r.byte_size = 1_048_577;
        assert_eq!(filter_file(&r, &cfg), FilterDecision::Reject(RejectReason::TooLarge));
    }

    #[test]
    fn token_boundary_is_strict() {
        let cfg = FilterConfig::default();
        assert_eq!(
            filter_file(&rec("u", "a.c", LanguageId::C, &words(99)), &cfg),
            FilterDecision::Reject(RejectReason::TooShort)
        );
        assert_eq!(filter_file(&rec("u", "a.c", LanguageId::C, &words(100)), &cfg), FilterDecision::Keep);
    }

    #[test]
    fn ordinary_file_kept() {
        let mut content = words(150);
        content.resize(2048, b' ');
        let r = rec("u", "a.go", LanguageId::Go, &content);
        assert_eq!(filter_file(&r, &FilterConfig::default()), FilterDecision::Keep);
    }

    #[test]
    fn extended_filters_in_order() {
        let cfg = FilterConfig { min_ws_tokens: 0, ..FilterConfig::extended() };
        let long_line = vec![b'a'; 1001];
        assert_eq!(
            filter_file(&rec("u", "a", LanguageId::C, &long_line), &cfg),
            FilterDecision::Reject(RejectReason::LineTooLong)
        );
        let mean_heavy = [vec![b'a'; 900], b"\n".to_vec(), vec![b'b'; 900]].concat();
        assert_eq!(
            filter_file(&rec("u", "a", LanguageId::C, &mean_heavy), &cfg),
            FilterDecision::Reject(RejectReason::MeanLineTooLong)
        );
        assert_eq!(
            filter_file(&rec("u", "a", LanguageId::C, b"{}{}{}{} ;;;; a\n"), &cfg),
            FilterDecision::Reject(RejectReason::LowAlnum)
        );
        // Size still takes precedence over everything else.
        let mut big = rec("u", "a", LanguageId::C, &long_line);
        big.byte_size = 2_000_000;
        assert_eq!(filter_file(&big, &cfg), FilterDecision::Reject(RejectReason::TooLarge));
    }

    #[test]
    fn config_toml() {
        let cfg = FilterConfig::from_toml("max_bytes = 10\nmin_ws_tokens = 3\nmax_line_length = 80\n").unwrap();
        assert_eq!(cfg.max_bytes, 10);
        assert_eq!(cfg.max_line_length, Some(80));
        assert_eq!(cfg.mean_line_length, None);
        assert!(FilterConfig::from_toml("max_byte = 1\n").is_err());
        assert!(FilterConfig::from_toml("max_bytes = 0\n").is_err());
    }

    #[test]
    fn empty_digest() {
        assert_eq!(
            content_hash(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
    }

    #[test]
    fn dedup_first_wins() {
        let input = vec![
            rec("a", "1", LanguageId::C, b"x"),
            rec("a", "2", LanguageId::C, b"y"),
            rec("b", "1", LanguageId::C, b"x"),
        ];
        let (out, stats) = dedup(input);
        let keys: Vec<_> = out.iter().map(|r| (r.repo.as_str(), r.path.as_str())).collect();
        assert_eq!(keys, [("a", "1"), ("a", "2")]);
        assert_eq!(stats.duplicates_removed, 1);
        assert_eq!(stats.files_out + stats.duplicates_removed, stats.files_in);
        assert!(out.iter().all(|r| r.digest.is_some()));
    }

    #[test]
    fn single_go_file_stats() {
        let r = rec("https://h/g", "main.go", LanguageId::Go, &[b'x'; 1024]);
        let before = BTreeMap::from([(LanguageId::Go, 4096)]);
        let rows = corpus_stats([&r], &before);
        let go = rows.iter().find(|row| row.language == StatsLabel::Language(LanguageId::Go)).unwrap();
        assert_eq!((go.repositories, go.files, go.size_before, go.size_after), (1, 1, 4096, 1024));
        assert_eq!(rows.len(), 13);
    }

    #[test]
    fn empty_stats() {
        let rows = corpus_stats(std::iter::empty(), &BTreeMap::new());
        assert_eq!(rows.len(), 13);
        assert!(rows.iter().all(|r| r.files == 0 && r.size_after == 0 && r.repositories == 0));
        assert_eq!(rows[12].language, StatsLabel::Total);
    }
}
