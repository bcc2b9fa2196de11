//! Perplexity normalized by reference lexer token counts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::extrinsic::EvalError;
use crate::ingest::EvalSet;
use crate::language::LanguageId;
use crate::lexer::count_reference_tokens;
use crate::scalar::Real;

/// `exp(-sum_logprob / lex_token_total)`.
pub fn perplexity<F: Real>(sum_logprob: F, lex_token_total: u64) -> Result<F, EvalError> {
    if lex_token_total == 0 {
        return Err(EvalError::EmptyEvalSet);
    }
    Ok((-sum_logprob / F::of(lex_token_total as f64)).exp())
}

/// Pooled (log-likelihood, token) sums; merging is the only way to combine
/// files, so per-file perplexities are never averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub files: usize,
    pub sum_logprob: f64,
    pub lex_tokens: u64,
    pub model_tokens: u64,
}

impl Accumulator {
    pub fn add(&mut self, sum_logprob: f64, lex_tokens: u64, model_tokens: u64) {
        self.files += 1;
        self.sum_logprob += sum_logprob;
        self.lex_tokens += lex_tokens;
        self.model_tokens += model_tokens;
    }

    pub fn merge(mut self, other: &Accumulator) -> Self {
        self.files += other.files;
        self.sum_logprob += other.sum_logprob;
        self.lex_tokens += other.lex_tokens;
        self.model_tokens += other.model_tokens;
        self
    }

    pub fn perplexity(&self) -> Result<f64, EvalError> {
        perplexity(self.sum_logprob, self.lex_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRow {
    pub model: String,
    pub language: LanguageId,
    pub n_files: usize,
    pub n_failed: usize,
    pub lex_token_total: u64,
    pub model_token_total: u64,
    pub sum_logprob: f64,
    /// `None` when the row is absent; `absent_reason` then says why.
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub model: String,
    pub language: LanguageId,
    pub repo: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub eval_set_id: String,
    pub rows: Vec<PerplexityRow>,
    #[serde(default)]
    pub failures: Vec<FileFailure>,
}

impl PerplexityReport {
    pub fn row(&self, model: &str, lang: LanguageId) -> Option<&PerplexityRow> {
        self.rows.iter().find(|r| r.model == model && r.language == lang)
    }
}

fn row_from(model: &str, lang: LanguageId, acc: &Accumulator, failed: usize) -> PerplexityRow {
    let (ppl, reason) = if acc.files == 0 {
        (None, Some(format!("all {failed} file(s) failed to score")))
    } else {
        match acc.perplexity() {
            Ok(p) => (Some(p), None),
            Err(_) => (None, Some("no reference tokens in scored files".to_string())),
        }
    };
    PerplexityRow {
        model: model.to_string(),
        language: lang,
        n_files: acc.files,
        n_failed: failed,
        lex_token_total: acc.lex_tokens,
        model_token_total: acc.model_tokens,
        sum_logprob: acc.sum_logprob,
        perplexity: ppl,
        absent_reason: reason,
    }
}

/// Score every file of every language and pool per language. Files the
/// backend fails on are left out of both sums and listed in `failures`.
pub fn run_perplexity_eval(backend: &dyn Backend, eval_set: &EvalSet) -> PerplexityReport {
    let jobs: Vec<_> = eval_set
        .files
        .iter()
        .flat_map(|(&lang, files)| files.iter().map(move |f| (lang, f)))
        .collect();
    let scored: Vec<_> = jobs
        .par_iter()
        .map(|&(lang, f)| {
            let text = f.text();
            let lex = count_reference_tokens(&text, lang) as u64;
            (lang, f, backend.score_logprobs(&text).map(|s| (s, lex)))
        })
        .collect();

    let model = backend.name().to_string();
    let mut acc: BTreeMap<LanguageId, (Accumulator, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for lang in eval_set.files.keys() {
        acc.insert(*lang, Default::default());
    }
    for (lang, f, res) in scored {
        let slot = acc.get_mut(&lang).expect("language seeded above");
        match res {
            Ok((s, lex)) => slot.0.add(s.sum_logprob, lex, s.token_count as u64),
            Err(e) => {
                slot.1 += 1;
                failures.push(FileFailure {
                    model: model.clone(),
                    language: lang,
                    repo: f.repo.clone(),
                    path: f.path.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    PerplexityReport {
        eval_set_id: eval_set.id(),
        rows: acc
            .iter()
            .map(|(&lang, (a, failed))| row_from(&model, lang, a, *failed))
            .collect(),
        failures,
    }
}
