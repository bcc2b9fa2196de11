//! Local n-gram model over BPE ids with additive smoothing and backoff.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{apply_temperature, nucleus_filter, sample_index};
use super::{
    model_file_error, Backend, BackendError, CompletionRequest, CompletionSample, FinishReason,
    Score,
};
use crate::bpe::BpeVocab;
use crate::report::persist::{atomic_write, Meta};
use crate::scalar::Real;

pub const DEFAULT_CONTEXT_WINDOW: usize = 2048;
const FILE_FORMAT: &str = "codecorpus-ngram 1";

#[derive(Debug, Clone, Default, PartialEq)]
struct Counts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Conditional counts for every context length `0..order`.
///
/// `P(t | ctx) = (c(ctx, t) + α) / (c(ctx) + α·V)` for the longest suffix
/// of `ctx` that was seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel<F> {
    order: usize,
    alpha: F,
    vocab_size: usize,
    tables: Vec<HashMap<Vec<u32>, Counts>>,
}

impl<F: Real> NGramModel<F> {
    /// A model with no counts: every distribution is uniform.
    pub fn uniform(vocab_size: usize, order: usize, alpha: F) -> Self {
        assert!(order >= 1 && vocab_size >= 1 && alpha > F::zero());
        Self {
            order,
            alpha,
            vocab_size,
            tables: vec![HashMap::new(); order],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Raw training count of `t` following exactly `ctx` (no backoff).
    pub fn count(&self, ctx: &[u32], t: u32) -> u64 {
        self.tables
            .get(ctx.len())
            .and_then(|tab| tab.get(ctx))
            .and_then(|c| c.next.get(&t).copied())
            .unwrap_or(0)
    }

    /// Context length actually used for `ctx` after backoff.
    pub fn backoff_len(&self, ctx: &[u32]) -> usize {
        self.lookup(ctx).map_or(0, |(len, _)| len)
    }

    fn lookup(&self, ctx: &[u32]) -> Option<(usize, &Counts)> {
        let max = ctx.len().min(self.order - 1);
        (0..=max).rev().find_map(|len| {
            self.tables[len]
                .get(&ctx[ctx.len() - len..])
                .map(|c| (len, c))
        })
    }

    fn denom(&self, total: u64) -> F {
        F::of(total as f64) + self.alpha * F::of_usize(self.vocab_size)
    }

    pub fn prob(&self, ctx: &[u32], t: u32) -> F {
        let (total, c) = match self.lookup(ctx) {
            Some((_, counts)) => (counts.total, counts.next.get(&t).copied().unwrap_or(0)),
            None => (0, 0),
        };
        (F::of(c as f64) + self.alpha) / self.denom(total)
    }

    /// Full next-token distribution after `ctx`.
    pub fn distribution(&self, ctx: &[u32]) -> Vec<F> {
        let counts = self.lookup(ctx).map(|(_, c)| c);
        let denom = self.denom(counts.map_or(0, |c| c.total));
        let mut out = vec![self.alpha / denom; self.vocab_size];
        if let Some(c) = counts {
            for (&t, &n) in &c.next {
                out[t as usize] = (F::of(n as f64) + self.alpha) / denom;
            }
        }
        out
    }

    /// Sum of natural-log probabilities of `ids`, restarting the context
    /// every `window` tokens.
    pub fn sum_logprob(&self, ids: &[u32], window: usize) -> F {
        let window = window.max(1);
        let mut sum = F::zero();
        for chunk in ids.chunks(window) {
            for k in 0..chunk.len() {
                let lo = k.saturating_sub(self.order - 1);
                sum = sum + self.prob(&chunk[lo..k], chunk[k]).ln();
            }
        }
        sum
    }
}

pub fn train_ngram<F: Real>(
    corpus: &[Vec<u32>],
    order: usize,
    alpha: F,
    vocab_size: usize,
) -> Result<NGramModel<F>, BackendError> {
    let bad = |m: String| Err(BackendError::InvalidRequest(m));
    if order == 0 {
        return bad("n-gram order must be at least 1".into());
    }
    if !(alpha > F::zero()) {
        return bad("smoothing constant must be positive".into());
    }
    if corpus.iter().all(Vec::is_empty) {
        return bad("n-gram corpus is empty".into());
    }
    if let Some(&t) = corpus.iter().flatten().find(|&&t| t as usize >= vocab_size) {
        return bad(format!("token id {t} outside vocabulary of {vocab_size}"));
    }
    let mut model = NGramModel::uniform(vocab_size, order, alpha);
    for stream in corpus {
        for i in 0..stream.len() {
            for len in 0..order.min(i + 1) {
                let c = model.tables[len]
                    .entry(stream[i - len..i].to_vec())
                    .or_default();
                c.total += 1;
                *c.next.entry(stream[i]).or_insert(0) += 1;
            }
        }
    }
    Ok(model)
}

/// Decodes a byte stream incrementally, holding back incomplete UTF-8
/// sequences so that emitted pieces always concatenate to the full text.
#[derive(Debug, Default)]
struct Utf8Stream {
    pending: Vec<u8>,
}

impl Utf8Stream {
    fn push(&mut self, bytes: &[u8]) -> String {
        self.pending.extend_from_slice(bytes);
        let mut out = String::new();
        loop {
            match std::str::from_utf8(&self.pending) {
                Ok(s) => {
                    out.push_str(s);
                    self.pending.clear();
                    return out;
                }
                Err(e) => {
                    let good = e.valid_up_to();
                    out.push_str(std::str::from_utf8(&self.pending[..good]).expect("valid prefix"));
                    match e.error_len() {
                        Some(n) => {
                            out.push(char::REPLACEMENT_CHARACTER);
                            self.pending.drain(..good + n);
                        }
                        None => {
                            self.pending.drain(..good);
                            return out;
                        }
                    }
                }
            }
        }
    }

    fn finish(&mut self) -> String {
        let s = String::from_utf8_lossy(&self.pending).into_owned();
        self.pending.clear();
        s
    }
}

#[derive(Debug, Clone)]
pub struct NGramBackend<F: Real = f64> {
    name: String,
    vocab: BpeVocab,
    model: NGramModel<F>,
    context_window: usize,
}

impl<F: Real> NGramBackend<F> {
    pub fn new(vocab: BpeVocab, model: NGramModel<F>) -> Result<Self, BackendError> {
        if vocab.vocab_size() != model.vocab_size() {
            return Err(BackendError::InvalidRequest(format!(
                "model covers {} ids but vocabulary has {}",
                model.vocab_size(),
                vocab.vocab_size()
            )));
        }
        Ok(Self {
            name: format!("ngram-{}", model.order()),
            vocab,
            model,
            context_window: DEFAULT_CONTEXT_WINDOW,
        })
    }

    /// Encode `texts` with `vocab` and fit a model on the resulting streams.
    pub fn train<I, T>(vocab: BpeVocab, texts: I, order: usize, alpha: F) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let corpus: Vec<Vec<u32>> = texts.into_iter().map(|t| vocab.encode(t.as_ref())).collect();
        let model = train_ngram(&corpus, order, alpha, vocab.vocab_size())?;
        Self::new(vocab, model)
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        assert!(window >= 1);
        self.context_window = window;
        self
    }

    pub fn set_name(&mut self, name: String) {
        self.name = name;
    }

    pub fn model(&self) -> &NGramModel<F> {
        &self.model
    }

    pub fn vocab(&self) -> &BpeVocab {
        &self.vocab
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    fn generate(&self, prompt_ids: &[u32], req: &CompletionRequest, rng: &mut ChaCha8Rng) -> CompletionSample {
        let t = F::of(req.temperature);
        let top_p = F::of(req.top_p);
        let ctx_len = self.model.order() - 1;
        let max_stop = req.stop.iter().map(String::len).max().unwrap_or(0);
        let mut ids = prompt_ids.to_vec();
        let mut stream = Utf8Stream::default();
        let mut text = String::new();
        let mut token_logprobs: Vec<(String, f64)> = Vec::with_capacity(req.max_tokens);
        let mut finish = FinishReason::Length;
        for _ in 0..req.max_tokens {
            let ctx = &ids[ids.len().saturating_sub(ctx_len)..];
            let logits: Vec<F> = self.model.distribution(ctx).into_iter().map(F::ln).collect();
            let probs = nucleus_filter(&apply_temperature(&logits, t), top_p);
            let next = sample_index(&probs, rng);
            ids.push(next as u32);
            let bytes = self.vocab.token_bytes(next as u32).expect("sampled id in vocabulary");
            let piece = stream.push(bytes);
            let lp = probs[next].ln().to_f64_lossy().min(0.0);
            let grown = piece.len();
            text.push_str(&piece);
            token_logprobs.push((piece, lp));
            if max_stop > 0 {
                let mut from = text.len().saturating_sub(grown + max_stop);
                while !text.is_char_boundary(from) {
                    from -= 1;
                }
                if req.stop.iter().any(|s| text[from..].contains(s.as_str())) {
                    finish = FinishReason::Stop;
                    break;
                }
            }
        }
        let tail = stream.finish();
        if !tail.is_empty() {
            text.push_str(&tail);
            if let Some(last) = token_logprobs.last_mut() {
                last.0.push_str(&tail);
            }
        }
        CompletionSample {
            text,
            token_logprobs,
            finish_reason: finish,
        }
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        self.save_with(path, None)
    }

    pub fn save_with(&self, path: &Path, meta: Option<&Meta>) -> crate::Result<()> {
        let mut contexts: Vec<ContextEntry> = self
            .model
            .tables
            .iter()
            .flat_map(|tab| tab.iter())
            .map(|(ctx, c)| {
                let mut next: Vec<(u32, u64)> = c.next.iter().map(|(&t, &n)| (t, n)).collect();
                next.sort_unstable();
                ContextEntry {
                    context: ctx.clone(),
                    next,
                }
            })
            .collect();
        contexts.sort_by(|a, b| (a.context.len(), &a.context).cmp(&(b.context.len(), &b.context)));
        let file = ModelFile {
            format: FILE_FORMAT.to_string(),
            meta: meta.cloned(),
            name: self.name.clone(),
            order: self.model.order,
            alpha: self.model.alpha.to_f64_lossy(),
            vocab_size: self.model.vocab_size,
            context_window: self.context_window,
            merges: self.vocab.merges().to_vec(),
            contexts,
        };
        let json = serde_json::to_vec(&file).map_err(|e| crate::Error::Schema(e.to_string()))?;
        atomic_write(path, &json)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_slice(&bytes).map_err(|e| model_file_error(path, e.to_string()))?;
        if file.format != FILE_FORMAT {
            return Err(model_file_error(path, format!("unsupported format {:?}", file.format)).into());
        }
        if file.order == 0 || !(file.alpha > 0.0) || file.context_window == 0 {
            return Err(model_file_error(path, "order, alpha and context_window must be positive").into());
        }
        let vocab = BpeVocab::from_merges(file.merges).map_err(|e| model_file_error(path, e.to_string()))?;
        let mut model = NGramModel::uniform(file.vocab_size, file.order, F::of(file.alpha));
        for entry in file.contexts {
            let len = entry.context.len();
            if len >= file.order {
                return Err(model_file_error(path, "context longer than order - 1").into());
            }
            let mut counts = Counts::default();
            for (t, n) in entry.next {
                if t as usize >= file.vocab_size {
                    return Err(model_file_error(path, format!("token id {t} out of range")).into());
                }
                counts.total += n;
                counts.next.insert(t, n);
            }
            model.tables[len].insert(entry.context, counts);
        }
        let mut backend = Self::new(vocab, model).map_err(|e| model_file_error(path, e.to_string()))?;
        backend.name = file.name;
        backend.context_window = file.context_window;
        Ok(backend)
    }
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    context: Vec<u32>,
    next: Vec<(u32, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
    name: String,
    order: usize,
    alpha: f64,
    vocab_size: usize,
    context_window: usize,
    merges: Vec<(u32, u32)>,
    contexts: Vec<ContextEntry>,
}

impl<F: Real> Backend for NGramBackend<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Vec<CompletionSample>, BackendError> {
        req.validate()?;
        let prompt_ids = self.vocab.encode(req.prompt.as_bytes());
        let seed = req.seed.unwrap_or(0);
        Ok((0..req.n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.generate(&prompt_ids, req, &mut rng)
            })
            .collect())
    }

    fn score_logprobs(&self, text: &str) -> Result<Score, BackendError> {
        if text.is_empty() {
            return Err(BackendError::InvalidRequest("cannot score empty text".into()));
        }
        let ids = self.vocab.encode(text.as_bytes());
        Ok(Score {
            sum_logprob: self.model.sum_logprob(&ids, self.context_window).to_f64_lossy(),
            token_count: ids.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_model(text: &str, order: usize, alpha: f64) -> NGramModel<f64> {
        train_ngram(&[text.bytes().map(u32::from).collect()], order, alpha, 256).unwrap()
    }

    #[test]
    fn single_pair_formula() {
        let a = 0.1;
        let m = bytes_model("aa", 2, a);
        let v = 256.0;
        assert!((m.prob(&[97], 97) - (1.0 + a) / (1.0 + a * v)).abs() < 1e-15);
    }

    #[test]
    fn distributions_sum_to_one() {
        let m = bytes_model("the cat sat on the mat", 3, 0.05);
        for ctx in [&b""[..], b"t", b"th", b"zz", b"e "] {
            let ctx: Vec<u32> = ctx.iter().map(|&b| b as u32).collect();
            let s: f64 = m.distribution(&ctx).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn unseen_context_backs_off() {
        let m = bytes_model("abcabd", 3, 0.5);
        // "zb" never seen, "b" seen: equals the bigram distribution after "b"
        let ctx = [b'z' as u32, b'b' as u32];
        assert_eq!(m.distribution(&ctx), m.distribution(&[b'b' as u32]));
        assert_eq!(m.backoff_len(&ctx), 1);
        // nothing seen: unigram
        assert_eq!(m.distribution(&[b'q' as u32]), m.distribution(&[]));
    }

    #[test]
    fn huge_alpha_is_uniform() {
        let m = bytes_model("aaaaab", 2, 1e12);
        for p in m.distribution(&[97]) {
            assert!((p - 1.0 / 256.0).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_match_corpus() {
        let m = bytes_model("abab", 2, 1.0);
        assert_eq!(m.count(&[], b'a' as u32), 2);
        assert_eq!(m.count(&[b'a' as u32], b'b' as u32), 2);
        assert_eq!(m.count(&[b'b' as u32], b'a' as u32), 1);
    }

    #[test]
    fn train_rejects_bad_input() {
        assert!(train_ngram::<f64>(&[], 2, 1.0, 256).is_err());
        assert!(train_ngram::<f64>(&[vec![1]], 0, 1.0, 256).is_err());
        assert!(train_ngram::<f64>(&[vec![1]], 1, 0.0, 256).is_err());
        assert!(train_ngram::<f64>(&[vec![300]], 1, 1.0, 256).is_err());
    }

    #[test]
    fn f32_model() {
        let m: NGramModel<f32> =
            train_ngram(&[vec![1, 1]], 2, 0.5f32, 4).unwrap();
        assert!((m.prob(&[1], 1) - 1.5 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn utf8_stream_holds_partial_sequences() {
        let mut s = Utf8Stream::default();
        let e = "é".as_bytes();
        assert_eq!(s.push(&e[..1]), "");
        assert_eq!(s.push(&e[1..]), "é");
        assert_eq!(s.push(&[0xff, b'a']), "\u{FFFD}a");
        assert_eq!(s.push(&[0xe2]), "");
        assert_eq!(s.finish(), "\u{FFFD}");
    }

    fn backend(text: &str, order: usize) -> NGramBackend<f64> {
        NGramBackend::train(BpeVocab::default(), [text], order, 0.01).unwrap()
    }

    #[test]
    fn complete_basics() {
        let b = backend("def f():\n    return 1\n", 3);
        let mut req = CompletionRequest::new("def");
        req.n = 3;
        req.max_tokens = 1;
        req.seed = Some(7);
        let out = b.complete(&req).unwrap();
        assert_eq!(out.len(), 3);
        for s in &out {
            assert_eq!(s.token_logprobs.len(), 1);
            s.check().unwrap();
        }
        assert_eq!(out, b.complete(&req).unwrap());
    }

    #[test]
    fn stop_string_halts_generation() {
        let b = backend("xy\ndef xy\ndef xy\ndef ", 4);
        let mut req = CompletionRequest::new("x");
        req.max_tokens = 200;
        req.temperature = 0.01;
        req.stop = vec!["\ndef".into()];
        let s = &b.complete(&req).unwrap()[0];
        assert_eq!(s.finish_reason, FinishReason::Stop);
        assert!(s.text.ends_with("\ndef"));
        s.check().unwrap();
    }

    #[test]
    fn token_texts_concatenate_with_multibyte_output() {
        let b = backend("ééé😀😀", 2);
        let mut req = CompletionRequest::new("é");
        req.max_tokens = 50;
        req.n = 20;
        for s in b.complete(&req).unwrap() {
            s.check().unwrap();
        }
    }

    #[test]
    fn scoring_uses_windows() {
        let b = backend("abababab", 2);
        let ids: Vec<u32> = b"abab".iter().map(|&x| x as u32).collect();
        let m = b.model();
        let full = m.prob(&[], ids[0]).ln()
            + m.prob(&ids[0..1], ids[1]).ln()
            + m.prob(&ids[1..2], ids[2]).ln()
            + m.prob(&ids[2..3], ids[3]).ln();
        let s = b.score_logprobs("abab").unwrap();
        assert_eq!(s.token_count, 4);
        assert!((s.sum_logprob - full).abs() < 1e-12);
        let w = b.clone().with_context_window(2).score_logprobs("abab").unwrap();
        let windowed = 2.0 * (m.prob(&[], ids[0]).ln() + m.prob(&ids[0..1], ids[1]).ln());
        assert!((w.sum_logprob - windowed).abs() < 1e-12);
        assert!(b.score_logprobs("").is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let b = backend("hello hello world", 3).with_context_window(64);
        b.save(&p).unwrap();
        let first = std::fs::read(&p).unwrap();
        let l = NGramBackend::<f64>::load(&p).unwrap();
        assert_eq!(l.model(), b.model());
        assert_eq!(l.vocab(), b.vocab());
        assert_eq!(l.context_window(), 64);
        l.save(&p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }
}
