use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::language::LanguageId;
use crate::report::persist;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoManifestEntry {
    pub url: String,
    pub stars: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<LanguageId>,
    pub retrieved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestOptions {
    /// Inclusive star threshold.
    pub min_stars: u64,
    /// Maximum entries kept per declared language.
    pub per_language_cap: usize,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            min_stars: 50,
            per_language_cap: 25_000,
        }
    }
}

pub fn load_manifest(
    path: &Path,
    opts: &ManifestOptions,
) -> Result<Vec<RepoManifestEntry>, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_manifest(file, opts)
}

/// Parse a JSONL manifest, apply the star threshold and the per-language cap.
///
/// Retained entries keep their file order. When a language is over the cap,
/// the highest-star entries survive, ties broken by url.
pub fn parse_manifest<R: Read>(
    reader: R,
    opts: &ManifestOptions,
) -> Result<Vec<RepoManifestEntry>, IngestError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| IngestError::MalformedManifest {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: RepoManifestEntry =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedManifest {
                line: lineno,
                message: e.to_string(),
            })?;
        if entry.url.trim().is_empty() {
            return Err(IngestError::MalformedManifest {
                line: lineno,
                message: "empty url".into(),
            });
        }
        if !seen.insert(entry.url.clone()) {
            return Err(IngestError::DuplicateUrl {
                line: lineno,
                url: entry.url,
            });
        }
        entries.push(entry);
    }

    let eligible: Vec<(usize, RepoManifestEntry)> = entries
        .into_iter()
        .enumerate()
        .filter(|(_, e)| e.stars >= opts.min_stars)
        .collect();

    let mut by_lang: BTreeMap<LanguageId, Vec<usize>> = BTreeMap::new();
    for (pos, (_, e)) in eligible.iter().enumerate() {
        if let Some(lang) = e.language {
            by_lang.entry(lang).or_default().push(pos);
        }
    }
    let mut dropped = vec![false; eligible.len()];
    for positions in by_lang.values_mut() {
        if positions.len() <= opts.per_language_cap {
            continue;
        }
        positions.sort_by(|&a, &b| {
            let (ea, eb) = (&eligible[a].1, &eligible[b].1);
            eb.stars.cmp(&ea.stars).then_with(|| ea.url.cmp(&eb.url))
        });
        for &pos in &positions[opts.per_language_cap..] {
            dropped[pos] = true;
        }
    }

    Ok(eligible
        .into_iter()
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|((_, e), _)| e)
        .collect())
}

pub fn write_manifest(path: &Path, entries: &[RepoManifestEntry]) -> crate::Result<()> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e).expect("manifest entries serialize");
        buf.push(b'\n');
    }
    persist::atomic_write(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(url: &str, stars: u64, lang: Option<&str>) -> String {
        let lang = lang
            .map(|l| format!(",\"language\":\"{l}\""))
            .unwrap_or_default();
        format!(
            "{{\"url\":\"{url}\",\"stars\":{stars}{lang},\"retrieved_at\":\"2021-10-01T00:00:00Z\"}}\n"
        )
    }

    #[test]
    fn star_threshold_is_inclusive() {
        let text = [line("a", 49, None), line("b", 50, None), line("c", 51, None)].concat();
        let got = parse_manifest(text.as_bytes(), &ManifestOptions::default()).unwrap();
        let urls: Vec<_> = got.iter().map(|e| e.url.as_str()).collect();
        assert_eq!(urls, ["b", "c"]);
    }

    #[test]
    fn empty_manifest() {
        let got = parse_manifest(&b""[..], &ManifestOptions::default()).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn cap_keeps_highest_stars_with_url_tiebreak() {
        let mut text = String::new();
        for i in 0..30_001u64 {
            // stars repeat so ties occur; url order decides among equals
            text.push_str(&line(&format!("https://h/r{i:05}"), 50 + i % 1000, Some("Python")));
        }
        text.push_str(&line("https://h/go", 60, Some("Go")));
        let got = parse_manifest(text.as_bytes(), &ManifestOptions::default()).unwrap();
        let py: Vec<_> = got
            .iter()
            .filter(|e| e.language == Some(LanguageId::Python))
            .collect();
        assert_eq!(py.len(), 25_000);
        assert!(got.iter().any(|e| e.url == "https://h/go"));

        let mut all: Vec<(u64, String)> = (0..30_001u64)
            .map(|i| (50 + i % 1000, format!("https://h/r{i:05}")))
            .collect();
        all.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut expected: Vec<_> = all[..25_000].iter().map(|(_, u)| u.clone()).collect();
        expected.sort();
        let mut kept: Vec<_> = py.iter().map(|e| e.url.clone()).collect();
        kept.sort();
        assert_eq!(kept, expected);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = [line("a", 60, None), "{not json\n".to_string()].concat();
        match parse_manifest(text.as_bytes(), &ManifestOptions::default()) {
            Err(IngestError::MalformedManifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_url_rejected() {
        let text = [line("a", 60, None), line("a", 70, None)].concat();
        assert!(matches!(
            parse_manifest(text.as_bytes(), &ManifestOptions::default()),
            Err(IngestError::DuplicateUrl { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let text = [
            line("https://x/b", 90, Some("Rust")),
            line("https://x/a", 55, None),
            line("https://x/c", 1000, Some("C#")),
        ]
        .concat();
        let entries = parse_manifest(text.as_bytes(), &ManifestOptions::default()).unwrap();
        write_manifest(&path, &entries).unwrap();
        let back = load_manifest(&path, &ManifestOptions::default()).unwrap();
        assert_eq!(back, entries);
    }
}
