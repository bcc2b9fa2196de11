//! Functional-correctness harness: sampling, truncation, execution and
//! pass@k aggregation.

pub mod executor;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backend::{Backend, CompletionRequest, FinishReason, DEFAULT_STOPS};
use crate::scalar::Real;

pub use executor::{ExecutionJob, ExecutionVerdict, Executor, RecordedVerdicts, SandboxPool};

pub const DEFAULT_TEMPERATURES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const DEFAULT_KS: [usize; 3] = [1, 10, 100];
pub const DEFAULT_N: usize = 100;
pub const DEFAULT_TOP_P: f64 = 0.95;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set has no reference tokens")]
    EmptyEvalSet,
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { n: usize, k: usize },
    #[error("c = {c} exceeds n = {n}")]
    InvalidCount { n: usize, c: usize },
    #[error("executor: {0}")]
    Executor(String),
    #[error("inconsistent results: {0}")]
    Results(String),
    #[error("empty pass@k table")]
    EmptyTable,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Cut `text` before the earliest occurrence of any stop string.
pub fn truncate_at_stop<'a, S: AsRef<str>>(text: &'a str, stops: &[S]) -> &'a str {
    let cut = stops
        .iter()
        .filter_map(|s| {
            let s = s.as_ref();
            if s.is_empty() {
                None
            } else {
                text.find(s)
            }
        })
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, in product form.
pub fn pass_at_k<F: Real>(n: usize, c: usize, k: usize) -> Result<F, EvalError> {
    if k == 0 || k > n {
        return Err(EvalError::InvalidK { n, k });
    }
    if c > n {
        return Err(EvalError::InvalidCount { n, c });
    }
    if n - c < k {
        return Ok(F::one());
    }
    let kf = F::of_usize(k);
    let prod = (n - c + 1..=n).fold(F::one(), |acc, i| acc * (F::one() - kf / F::of_usize(i)));
    Ok(F::one() - prod)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub task_id: String,
    pub prompt: String,
    pub entry_point: String,
    #[serde(default)]
    pub canonical_solution: String,
    pub test: String,
}

impl ProblemRecord {
    /// Prompt, completion, tests, then the entry-point check call.
    pub fn program(&self, completion: &str) -> String {
        format!(
            "{}{}\n{}\ncheck({})\n",
            self.prompt, completion, self.test, self.entry_point
        )
    }
}

pub fn load_problems(path: &Path) -> crate::Result<Vec<ProblemRecord>> {
    let problems: Vec<ProblemRecord> = crate::report::persist::read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for p in &problems {
        if !seen.insert(p.task_id.as_str()) {
            return Err(crate::Error::Schema(format!(
                "{}: duplicate task_id {:?}",
                path.display(),
                p.task_id
            )));
        }
    }
    Ok(problems)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
    Timeout,
    Error,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Timeout => "timeout",
            Verdict::Error => "error",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pass" | "passed" => Ok(Verdict::Pass),
            "fail" | "failed" => Ok(Verdict::Fail),
            "timeout" | "timed out" => Ok(Verdict::Timeout),
            "error" => Ok(Verdict::Error),
            _ => Err(format!("unknown verdict {s:?}")),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub task_id: String,
    pub temperature: f64,
    pub sample_index: usize,
    pub truncated_text: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub detail: String,
    pub duration_s: f64,
    #[serde(default)]
    pub finish_reason: Option<FinishReason>,
    /// Set when the backend failed and the sample was counted as Fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemCount {
    pub task_id: String,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    /// One estimate per entry of the table's `ks`.
    pub estimates: Vec<f64>,
    pub counts: Vec<ProblemCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKTable {
    pub n: usize,
    pub ks: Vec<usize>,
    /// Ascending temperature.
    pub rows: Vec<TemperatureRow>,
}

/// The standard k values that do not exceed `n`.
pub fn default_ks(n: usize) -> Vec<usize> {
    DEFAULT_KS.iter().copied().filter(|&k| k <= n).collect()
}

impl PassAtKTable {
    /// Aggregate raw results: per temperature, the mean over problems (in
    /// task_id order) of the per-problem estimator.
    pub fn from_results(results: &[CandidateResult], n: usize, ks: &[usize]) -> Result<Self, EvalError> {
        if results.is_empty() {
            return Err(EvalError::EmptyTable);
        }
        if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
            return Err(EvalError::InvalidK { n, k });
        }
        let mut by_temp: BTreeMap<u64, (f64, BTreeMap<&str, Vec<bool>>)> = BTreeMap::new();
        for r in results {
            if !(r.temperature > 0.0) {
                return Err(EvalError::Results(format!("temperature {} is not positive", r.temperature)));
            }
            if r.sample_index >= n {
                return Err(EvalError::Results(format!(
                    "{} sample_index {} >= n = {n}",
                    r.task_id, r.sample_index
                )));
            }
            // positive f64 bit patterns sort like the values
            let slot = by_temp
                .entry(r.temperature.to_bits())
                .or_insert_with(|| (r.temperature, BTreeMap::new()));
            let seen = slot.1.entry(r.task_id.as_str()).or_insert_with(|| vec![false; n]);
            if std::mem::replace(&mut seen[r.sample_index], true) {
                return Err(EvalError::Results(format!(
                    "{} T={} sample {} recorded twice",
                    r.task_id, r.temperature, r.sample_index
                )));
            }
        }
        let mut passes: BTreeMap<(u64, &str), usize> = BTreeMap::new();
        for r in results.iter().filter(|r| r.verdict == Verdict::Pass) {
            *passes.entry((r.temperature.to_bits(), r.task_id.as_str())).or_insert(0) += 1;
        }
        let mut rows = Vec::with_capacity(by_temp.len());
        for (bits, (t, tasks)) in &by_temp {
            let mut counts = Vec::with_capacity(tasks.len());
            for (task, seen) in tasks {
                if let Some(miss) = seen.iter().position(|s| !s) {
                    return Err(EvalError::Results(format!("{task} T={t} is missing sample {miss}")));
                }
                counts.push(ProblemCount {
                    task_id: task.to_string(),
                    correct: passes.get(&(*bits, *task)).copied().unwrap_or(0),
                });
            }
            let mut estimates = Vec::with_capacity(ks.len());
            for &k in ks {
                let mut sum = 0.0f64;
                for pc in &counts {
                    sum += pass_at_k::<f64>(n, pc.correct, k)?;
                }
                estimates.push(sum / counts.len() as f64);
            }
            rows.push(TemperatureRow {
                temperature: *t,
                estimates,
                counts,
            });
        }
        Ok(Self {
            n,
            ks: ks.to_vec(),
            rows,
        })
    }

    pub fn estimate(&self, temperature: f64, k: usize) -> Option<f64> {
        let ki = self.ks.iter().position(|&x| x == k)?;
        self.rows
            .iter()
            .find(|r| r.temperature == temperature)
            .map(|r| r.estimates[ki])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub k: usize,
    pub temperature: f64,
    pub value: f64,
}

/// Per k, the best estimate over temperatures; ties keep the lower one.
pub fn best_over_temperatures(table: &PassAtKTable) -> Result<Vec<BestEntry>, EvalError> {
    if table.rows.is_empty() || table.ks.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let mut rows: Vec<&TemperatureRow> = table.rows.iter().collect();
    rows.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    Ok(table
        .ks
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let mut best = BestEntry {
                k,
                temperature: rows[0].temperature,
                value: rows[0].estimates[ki],
            };
            for r in &rows[1..] {
                if r.estimates[ki] > best.value {
                    best.temperature = r.temperature;
                    best.value = r.estimates[ki];
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalConfig {
    pub temperatures: Vec<f64>,
    pub n: usize,
    pub top_p: f64,
    pub max_tokens: usize,
    pub stops: Vec<String>,
    pub seed: u64,
    pub timeout_s: f64,
    pub jobs: usize,
}

impl Default for HumanEvalConfig {
    fn default() -> Self {
        Self {
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            n: DEFAULT_N,
            top_p: DEFAULT_TOP_P,
            max_tokens: 300,
            stops: DEFAULT_STOPS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            timeout_s: 10.0,
            jobs: 1,
        }
    }
}

impl HumanEvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        if self.temperatures.is_empty() {
            return bad("at least one temperature is required");
        }
        if self.temperatures.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("temperatures must be positive");
        }
        if self.n == 0 || self.max_tokens == 0 {
            return bad("n and max_tokens must be at least 1");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.stops.is_empty() || self.stops.iter().any(String::is_empty) {
            return bad("stop list must be non-empty and contain no empty strings");
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout must be positive");
        }
        Ok(())
    }
}

/// Outcome of a harness run; `results` are sorted by (temperature,
/// problem order, sample index). `aborted` is set when the executor
/// failed; `results` then holds every unit completed before the abort.
#[derive(Debug)]
pub struct HumanEvalRun {
    pub results: Vec<CandidateResult>,
    pub aborted: Option<EvalError>,
}

impl HumanEvalRun {
    pub fn backend_failures(&self) -> impl Iterator<Item = &CandidateResult> {
        self.results.iter().filter(|r| r.backend_error.is_some())
    }
}

fn unit_seed(seed: u64, temp_index: usize, problem_index: usize) -> u64 {
    // splitmix64 finalizer over a packed key
    let mut z = seed
        ^ (temp_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (problem_index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_unit(
    backend: &dyn Backend,
    executor: &dyn Executor,
    cfg: &HumanEvalConfig,
    problem: &ProblemRecord,
    temperature: f64,
    seed: u64,
    abort: &AtomicBool,
) -> Result<Vec<CandidateResult>, EvalError> {
    let req = CompletionRequest {
        prompt: problem.prompt.clone(),
        max_tokens: cfg.max_tokens,
        temperature,
        top_p: cfg.top_p,
        n: cfg.n,
        stop: cfg.stops.clone(),
        seed: Some(seed),
    };
    let samples = match backend.complete(&req) {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return Ok((0..cfg.n)
                .map(|i| CandidateResult {
                    task_id: problem.task_id.clone(),
                    temperature,
                    sample_index: i,
                    truncated_text: String::new(),
                    verdict: Verdict::Fail,
                    detail: "backend failure".into(),
                    duration_s: 0.0,
                    finish_reason: None,
                    backend_error: Some(msg.clone()),
                })
                .collect());
        }
    };
    let mut out = Vec::with_capacity(cfg.n);
    for (i, s) in samples.iter().enumerate() {
        if abort.load(Ordering::Relaxed) {
            return Err(EvalError::Executor("aborted by a sibling failure".into()));
        }
        let truncated = truncate_at_stop(&s.text, &cfg.stops).to_string();
        let job = ExecutionJob {
            task_id: problem.task_id.clone(),
            program: problem.program(&truncated),
            timeout_s: cfg.timeout_s,
            temperature,
            sample_index: i,
        };
        let v = executor.execute(&job)?;
        out.push(CandidateResult {
            task_id: problem.task_id.clone(),
            temperature,
            sample_index: i,
            truncated_text: truncated,
            verdict: v.verdict,
            detail: v.detail,
            duration_s: v.duration_s,
            finish_reason: Some(s.finish_reason),
            backend_error: None,
        });
    }
    Ok(out)
}

/// Draw, truncate and execute `n` samples per (temperature, problem).
pub fn run_humaneval(
    backend: &dyn Backend,
    problems: &[ProblemRecord],
    cfg: &HumanEvalConfig,
    executor: &dyn Executor,
) -> Result<HumanEvalRun, EvalError> {
    cfg.validate()?;
    let units: Vec<(usize, usize)> = (0..cfg.temperatures.len())
        .flat_map(|t| (0..problems.len()).map(move |p| (t, p)))
        .collect();
    let abort = AtomicBool::new(false);
    let first_error: Mutex<Option<EvalError>> = Mutex::new(None);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let done: Vec<Option<(usize, usize, Vec<CandidateResult>)>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(ti, pi)| {
                if abort.load(Ordering::Relaxed) {
                    return None;
                }
                let t = cfg.temperatures[ti];
                let seed = unit_seed(cfg.seed, ti, pi);
                match run_unit(backend, executor, cfg, &problems[pi], t, seed, &abort) {
                    Ok(r) => Some((ti, pi, r)),
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        let mut slot = first_error.lock().expect("error slot");
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        None
                    }
                }
            })
            .collect()
    });
    let mut done: Vec<_> = done.into_iter().flatten().collect();
    done.sort_by_key(|(t, p, _)| (*t, *p));
    Ok(HumanEvalRun {
        results: done.into_iter().flat_map(|(_, _, r)| r).collect(),
        aborted: first_error.into_inner().expect("error slot"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_examples() {
        let stops = DEFAULT_STOPS;
        assert_eq!(truncate_at_stop("  return x\ndef g():", &stops), "  return x");
        assert_eq!(truncate_at_stop("  return x", &stops), "  return x");
        let t = "abcd\nif x\nclass Y";
        assert_eq!(t.find("\nif"), Some(4));
        assert_eq!(truncate_at_stop(t, &stops), "abcd");
        let t = "abcde\nifx\nclass";
        assert_eq!(t.find("\nif"), Some(5));
        assert_eq!(t.find("\nclass"), Some(9));
        assert_eq!(truncate_at_stop(t, &stops), "abcde");
    }

    #[test]
    fn truncation_is_idempotent() {
        for t in ["a\n#b\nclass", "x", "\nprint", "q\nif\ndef"] {
            let once = truncate_at_stop(t, &DEFAULT_STOPS);
            assert_eq!(truncate_at_stop(once, &DEFAULT_STOPS), once);
        }
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(pass_at_k::<f64>(100, 100, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k::<f64>(100, 0, 10).unwrap(), 0.0);
        assert!((pass_at_k::<f64>(5, 2, 2).unwrap() - 0.7).abs() < 1e-15);
        assert!((pass_at_k::<f32>(5, 2, 2).unwrap() - 0.7).abs() < 1e-6);
        assert!(pass_at_k::<f64>(5, 2, 6).is_err());
        assert!(pass_at_k::<f64>(5, 2, 0).is_err());
        assert!(pass_at_k::<f64>(5, 6, 1).is_err());
    }

    #[test]
    fn estimator_single_sample_is_fraction() {
        for c in 0..=100 {
            let p = pass_at_k::<f64>(100, c, 1).unwrap();
            assert!((p - c as f64 / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!("Pass".parse::<Verdict>().unwrap(), Verdict::Pass);
        assert_eq!("TIMEOUT".parse::<Verdict>().unwrap(), Verdict::Timeout);
        assert!("maybe".parse::<Verdict>().is_err());
        assert_eq!(serde_json::to_string(&Verdict::Error).unwrap(), "\"error\"");
    }

    #[test]
    fn program_layout() {
        let p = ProblemRecord {
            task_id: "t/0".into(),
            prompt: "def f():\n".into(),
            entry_point: "f".into(),
            canonical_solution: "    return 1\n".into(),
            test: "def check(c):\n    assert c() == 1".into(),
        };
        assert_eq!(
            p.program("    return 1"),
            "def f():\n    return 1\ndef check(c):\n    assert c() == 1\ncheck(f)\n"
        );
    }

    fn result(task: &str, t: f64, i: usize, pass: bool) -> CandidateResult {
        CandidateResult {
            task_id: task.into(),
            temperature: t,
            sample_index: i,
            truncated_text: String::new(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail: String::new(),
            duration_s: 0.0,
            finish_reason: None,
            backend_error: None,
        }
    }

    fn table(rows: &[(f64, &[f64])]) -> PassAtKTable {
        PassAtKTable {
            n: 100,
            ks: vec![1, 10, 100],
            rows: rows
                .iter()
                .map(|(t, e)| TemperatureRow {
                    temperature: *t,
                    estimates: e.to_vec(),
                    counts: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn best_picks_per_metric() {
        let t = table(&[(0.2, &[0.3, 0.5, 0.6]), (0.8, &[0.2, 0.5, 0.8])]);
        let b = best_over_temperatures(&t).unwrap();
        assert_eq!((b[0].temperature, b[0].value), (0.2, 0.3));
        assert_eq!((b[1].temperature, b[1].value), (0.2, 0.5));
        assert_eq!((b[2].temperature, b[2].value), (0.8, 0.8));
        let single = table(&[(0.6, &[0.1, 0.2, 0.3])]);
        assert!(best_over_temperatures(&single).unwrap().iter().all(|e| e.temperature == 0.6));
        assert!(best_over_temperatures(&table(&[])).is_err());
    }

    #[test]
    fn table_from_results() {
        let mut rs = Vec::new();
        for i in 0..4 {
            rs.push(result("a", 0.2, i, i < 2));
            rs.push(result("b", 0.2, i, false));
        }
        let t = PassAtKTable::from_results(&rs, 4, &[1, 4]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].estimates, vec![0.25, 0.5]);
        assert_eq!(t.rows[0].counts[0].correct, 2);
        rs.push(result("a", 0.2, 1, true));
        assert!(PassAtKTable::from_results(&rs, 4, &[1]).is_err());
        rs.pop();
        rs.pop();
        assert!(PassAtKTable::from_results(&rs, 4, &[1]).is_err());
        assert!(PassAtKTable::from_results(&[], 4, &[1]).is_err());
    }

    #[test]
    fn default_k_filter() {
        assert_eq!(default_ks(100), vec![1, 10, 100]);
        assert_eq!(default_ks(20), vec![1, 10]);
        assert_eq!(default_ks(1), vec![1]);
    }
}
