//! Byte-level byte-pair-encoding tokenizer.
//!
//! Ids `0..=255` are the raw bytes; id `256 + r` is the symbol created by the
//! merge of rank `r`. Training repeatedly merges the most frequent adjacent
//! pair (ties: lower left id, then lower right id) and stops at the target
//! vocabulary size or when no pair occurs at least twice.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::SourceFileRecord;
use crate::language::LanguageId;
use crate::report::persist;

pub const BASE_VOCAB: usize = 256;
pub const DEFAULT_VOCAB_SIZE: usize = 50_257;
const FILE_HEADER: &str = "#version: codecorpus-bpe 1";

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("cannot train on empty input")]
    EmptyInput,
    #[error("vocab size {0} must exceed the 256 byte ids")]
    VocabTooSmall(usize),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("vocab file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeVocab {
    merges: Vec<(u32, u32)>,
    id_to_bytes: Vec<Vec<u8>>,
    ranks: HashMap<(u32, u32), u32>,
}

impl Default for BpeVocab {
    fn default() -> Self {
        Self::from_merges(Vec::new()).expect("empty merge list is valid")
    }
}

impl BpeVocab {
    /// Rebuild a vocabulary from its rank-ordered merge list.
    pub fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self, BpeError> {
        let mut id_to_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let known = id_to_bytes.len() as u32;
            if l >= known {
                return Err(BpeError::UnknownId(l));
            }
            if r >= known {
                return Err(BpeError::UnknownId(r));
            }
            let bytes = [id_to_bytes[l as usize].as_slice(), id_to_bytes[r as usize].as_slice()].concat();
            id_to_bytes.push(bytes);
            ranks.entry((l, r)).or_insert(rank as u32);
        }
        Ok(BpeVocab {
            merges,
            id_to_bytes,
            ranks,
        })
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.id_to_bytes.len()
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.id_to_bytes.get(id as usize).map(Vec::as_slice)
    }

    /// Apply merges lowest rank first until none applies.
    pub fn encode(&self, text: &[u8]) -> Vec<u32> {
        let n = text.len();
        if n < 2 || self.merges.is_empty() {
            return text.iter().map(|&b| b as u32).collect();
        }
        let mut sym: Vec<u32> = text.iter().map(|&b| b as u32).collect();
        let mut next: Vec<usize> = (1..=n).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        let mut alive = vec![true; n];
        let mut heap: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&r) = self.ranks.get(&(sym[i], sym[i + 1])) {
                heap.push(Reverse((r, i)));
            }
        }
        while let Some(Reverse((rank, i))) = heap.pop() {
            if !alive[i] || next[i] >= n {
                continue;
            }
            let j = next[i];
            if self.ranks.get(&(sym[i], sym[j])) != Some(&rank) {
                continue;
            }
            sym[i] = BASE_VOCAB as u32 + rank;
            alive[j] = false;
            next[i] = next[j];
            if next[i] < n {
                prev[next[i]] = i;
                if let Some(&r) = self.ranks.get(&(sym[i], sym[next[i]])) {
                    heap.push(Reverse((r, i)));
                }
            }
            let p = prev[i];
            if p < n {
                if let Some(&r) = self.ranks.get(&(sym[p], sym[i])) {
                    heap.push(Reverse((r, p)));
                }
            }
        }
        (0..n).filter(|&i| alive[i]).map(|i| sym[i]).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>, BpeError> {
        let mut out = Vec::with_capacity(ids.len() * 2);
        for &id in ids {
            out.extend_from_slice(self.token_bytes(id).ok_or(BpeError::UnknownId(id))?);
        }
        Ok(out)
    }

    /// Serialize: header line, `[merges]` section (`left right` per line in
    /// rank order), `[ids]` section with one JSON array of `[id, hex-bytes]`.
    pub fn to_file_string(&self) -> String {
        self.to_file_string_with(None)
    }

    /// As [`BpeVocab::to_file_string`], with an optional `#meta {json}`
    /// provenance line after the header.
    pub fn to_file_string_with(&self, meta: Option<&persist::Meta>) -> String {
        let mut s = String::new();
        s.push_str(FILE_HEADER);
        s.push('\n');
        if let Some(m) = meta {
            s.push_str("#meta ");
            s.push_str(&serde_json::to_string(m).expect("meta serializes"));
            s.push('\n');
        }
        s.push_str(&format!("vocab_size {}\n[merges]\n", self.vocab_size()));
        for (l, r) in &self.merges {
            s.push_str(&format!("{l} {r}\n"));
        }
        s.push_str("[ids]\n");
        let table: Vec<(u32, String)> = self
            .id_to_bytes
            .iter()
            .enumerate()
            .map(|(i, b)| (i as u32, hex::encode(b)))
            .collect();
        s.push_str(&serde_json::to_string(&table).expect("id table serializes"));
        s.push('\n');
        s
    }

    pub fn parse_file(text: &str) -> Result<Self, BpeError> {
        let fmt_err = |line: usize, message: &str| BpeError::Format {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, h)) if h == FILE_HEADER => {}
            _ => return Err(fmt_err(1, "missing or unsupported version header")),
        }
        lines.next_if(|(_, l)| l.starts_with("#meta "));
        let declared: usize = match lines.next() {
            Some((i, l)) => l
                .strip_prefix("vocab_size ")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fmt_err(i + 1, "expected `vocab_size <n>`"))?,
            None => return Err(fmt_err(2, "truncated file")),
        };
        match lines.next() {
            Some((_, "[merges]")) => {}
            Some((i, _)) => return Err(fmt_err(i + 1, "expected [merges]")),
            None => return Err(fmt_err(3, "truncated file")),
        }
        let mut merges = Vec::new();
        let mut table_line = None;
        for (i, l) in lines.by_ref() {
            if l == "[ids]" {
                table_line = Some(i + 1);
                break;
            }
            let mut parts = l.split(' ');
            let pair = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => a.parse::<u32>().ok().zip(b.parse::<u32>().ok()),
                _ => None,
            };
            merges.push(pair.ok_or_else(|| fmt_err(i + 1, "expected `left right`"))?);
        }
        let table_line = table_line.ok_or_else(|| fmt_err(0, "missing [ids] section"))?;
        let vocab = BpeVocab::from_merges(merges)?;
        let (i, json) = lines.next().ok_or_else(|| fmt_err(table_line + 1, "missing id table"))?;
        let table: Vec<(u32, String)> =
            serde_json::from_str(json).map_err(|e| fmt_err(i + 1, &e.to_string()))?;
        if table.len() != vocab.vocab_size() || declared != vocab.vocab_size() {
            return Err(fmt_err(i + 1, "id table size disagrees with merges"));
        }
        for (id, hexbytes) in table {
            let bytes = hex::decode(&hexbytes).map_err(|e| fmt_err(i + 1, &e.to_string()))?;
            if vocab.token_bytes(id) != Some(bytes.as_slice()) {
                return Err(fmt_err(i + 1, &format!("id {id} disagrees with merges")));
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        self.save_with(path, None)
    }

    pub fn save_with(&self, path: &Path, meta: Option<&persist::Meta>) -> crate::Result<()> {
        persist::atomic_write(path, self.to_file_string_with(meta).as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, BpeError> {
        let file = std::fs::File::open(path).map_err(|e| BpeError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| BpeError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            text.push_str(&line);
            text.push('\n');
        }
        Self::parse_file(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub vocab_size: usize,
    /// Pre-seed merges for runs of 2..=N spaces before learning.
    pub multi_whitespace: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            vocab_size: DEFAULT_VOCAB_SIZE,
            multi_whitespace: None,
        }
    }
}

pub fn train_bpe<I, T>(texts: I, vocab_size: usize) -> Result<BpeVocab, BpeError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    train_bpe_with(
        texts,
        &TrainOptions {
            vocab_size,
            multi_whitespace: None,
        },
    )
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    count: i64,
    pair: (u32, u32),
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: u32 = u32::MAX;

struct Sequence {
    sym: Vec<u32>,
    prev: Vec<u32>,
    next: Vec<u32>,
    weight: i64,
}

struct Trainer {
    seqs: Vec<Sequence>,
    counts: HashMap<(u32, u32), i64>,
    positions: HashMap<(u32, u32), Vec<(u32, u32)>>,
    heap: BinaryHeap<HeapEntry>,
}

impl Trainer {
    fn new(unique: BTreeMap<Vec<u8>, i64>) -> Self {
        let mut t = Trainer {
            seqs: Vec::with_capacity(unique.len()),
            counts: HashMap::new(),
            positions: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        for (si, (bytes, weight)) in unique.into_iter().enumerate() {
            let n = bytes.len() as u32;
            let seq = Sequence {
                sym: bytes.iter().map(|&b| b as u32).collect(),
                prev: (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect(),
                next: (0..n).map(|i| if i + 1 == n { NONE } else { i + 1 }).collect(),
                weight,
            };
            for i in 0..n.saturating_sub(1) {
                let pair = (seq.sym[i as usize], seq.sym[i as usize + 1]);
                *t.counts.entry(pair).or_default() += weight;
                t.positions.entry(pair).or_default().push((si as u32, i));
            }
            t.seqs.push(seq);
        }
        let mut pairs: Vec<_> = t.counts.iter().map(|(&p, &c)| HeapEntry { count: c, pair: p }).collect();
        pairs.sort();
        t.heap.extend(pairs);
        t
    }

    fn bump(&mut self, pair: (u32, u32), delta: i64, at: Option<(u32, u32)>) {
        *self.counts.entry(pair).or_default() += delta;
        if let Some(at) = at {
            self.positions.entry(pair).or_default().push(at);
        }
    }

    /// Merge every occurrence of `pair` into `new_id`, left to right.
    fn merge(&mut self, pair: (u32, u32), new_id: u32) {
        let mut occ = self.positions.remove(&pair).unwrap_or_default();
        occ.sort_unstable();
        let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
        for (si, i) in occ {
            let seq = &self.seqs[si as usize];
            let iu = i as usize;
            let j = seq.next[iu];
            // merged-away nodes hold NONE, so stale positions fail the symbol check
            if j == NONE || seq.sym[iu] != pair.0 || seq.sym[j as usize] != pair.1 {
                continue;
            }
            let (w, p, n) = (seq.weight, seq.prev[iu], seq.next[j as usize]);
            let p_sym = (p != NONE).then(|| seq.sym[p as usize]);
            let n_sym = (n != NONE).then(|| seq.sym[n as usize]);

            if let Some(ps) = p_sym {
                self.bump((ps, pair.0), -w, None);
                self.bump((ps, new_id), w, Some((si, p)));
                touched.insert((ps, new_id));
            }
            if let Some(ns) = n_sym {
                self.bump((pair.1, ns), -w, None);
                self.bump((new_id, ns), w, Some((si, i)));
                touched.insert((new_id, ns));
            }
            self.bump(pair, -w, None);

            let seq = &mut self.seqs[si as usize];
            seq.sym[iu] = new_id;
            seq.sym[j as usize] = NONE;
            seq.next[iu] = n;
            if n != NONE {
                seq.prev[n as usize] = i;
            }
        }
        for p in touched {
            let c = self.counts[&p];
            if c > 0 {
                self.heap.push(HeapEntry { count: c, pair: p });
            }
        }
    }

    /// Highest-count pair with its current count, discarding stale entries.
    fn best(&mut self) -> Option<HeapEntry> {
        while let Some(top) = self.heap.pop() {
            let current = self.counts.get(&top.pair).copied().unwrap_or(0);
            if current == top.count {
                return Some(top);
            }
            if current > 0 && current < top.count {
                self.heap.push(HeapEntry {
                    count: current,
                    pair: top.pair,
                });
            }
        }
        None
    }
}

pub fn train_bpe_with<I, T>(texts: I, opts: &TrainOptions) -> Result<BpeVocab, BpeError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    if opts.vocab_size <= BASE_VOCAB {
        return Err(BpeError::VocabTooSmall(opts.vocab_size));
    }
    let mut unique: BTreeMap<Vec<u8>, i64> = BTreeMap::new();
    let mut any = false;
    for t in texts {
        let t = t.as_ref();
        any = true;
        if !t.is_empty() {
            *unique.entry(t.to_vec()).or_default() += 1;
        }
    }
    if !any || unique.is_empty() {
        return Err(BpeError::EmptyInput);
    }

    let mut trainer = Trainer::new(unique);
    let mut merges: Vec<(u32, u32)> = Vec::new();

    if let Some(max_run) = opts.multi_whitespace {
        // "  " = (32, 32), then "   " = ("  ", 32), ...
        let mut left = b' ' as u32;
        for _ in 2..=max_run {
            if BASE_VOCAB + merges.len() >= opts.vocab_size {
                break;
            }
            let pair = (left, b' ' as u32);
            let new_id = (BASE_VOCAB + merges.len()) as u32;
            trainer.merge(pair, new_id);
            merges.push(pair);
            left = new_id;
        }
    }

    while BASE_VOCAB + merges.len() < opts.vocab_size {
        let Some(best) = trainer.best() else { break };
        if best.count < 2 {
            break;
        }
        let new_id = (BASE_VOCAB + merges.len()) as u32;
        trainer.merge(best.pair, new_id);
        merges.push(best.pair);
    }
    BpeVocab::from_merges(merges)
}

/// Seeded per-file Bernoulli sample of a record stream.
///
/// Each record is kept with probability `fraction`. Languages present in the
/// input but absent from the sample get one file re-drawn uniformly from
/// that language, so every input language stays represented. Output keeps
/// input order.
pub fn sample_subset<'a>(
    records: &'a [SourceFileRecord],
    fraction: f64,
    seed: u64,
) -> Vec<&'a SourceFileRecord> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<bool> = records.iter().map(|_| rng.random::<f64>() < fraction).collect();

    let mut by_lang: BTreeMap<LanguageId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_lang.entry(r.language).or_default().push(i);
    }
    for idxs in by_lang.values() {
        if idxs.iter().all(|&i| !keep[i]) {
            keep[idxs[rng.random_range(0..idxs.len())]] = true;
        }
    }
    records
        .iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}
