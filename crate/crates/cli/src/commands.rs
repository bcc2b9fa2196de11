use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use codecorpus::backend::{self, BackendConfig, NGramBackend};
use codecorpus::bpe::{sample_subset, train_bpe_with, TrainOptions, DEFAULT_VOCAB_SIZE};
use codecorpus::config::{load_toml, RunConfig};
use codecorpus::extrinsic::{
    best_over_temperatures, default_ks, load_problems, run_humaneval, CandidateResult,
    Executor, HumanEvalConfig, PassAtKTable, RecordedVerdicts, SandboxPool,
};
use codecorpus::filter::{corpus_stats, dedup, filter_records, CorpusStatsRow, FilterConfig};
use codecorpus::ingest::{
    build_eval_set, load_manifest, read_eval_set_dir, read_records, run_ingest,
    write_eval_set_dir, write_records, CloneDriver, ExclusionList, ManifestOptions,
    SourceFileRecord,
};
use codecorpus::intrinsic::{run_perplexity_eval, PerplexityReport};
use codecorpus::lexer::lex_bytes;
use codecorpus::report::persist::{
    atomic_write, fingerprint, read_json, read_jsonl, write_json, write_jsonl, Meta,
};
use codecorpus::report::{emit_report, read_scaling_csv, ReportInput, ReportKind};
use codecorpus::{Error, LanguageId, Result};

use crate::args::*;
use crate::Outcome;

const DEFAULT_OUT: &str = "out";

struct Ctx {
    jobs: usize,
    seed: u64,
    out: PathBuf,
    config: RunConfig,
}

#[derive(Debug, Serialize)]
struct LedgerEntry {
    stage: &'static str,
    item: String,
    message: String,
}

fn ledger(dir: &Path, meta: &Meta, entries: &[LedgerEntry]) -> Result<Outcome> {
    let path = dir.join("ledger.jsonl");
    write_jsonl(&path, Some(meta), entries)?;
    Ok(Outcome {
        failures: entries.len(),
        ledger: Some(path),
    })
}

fn no_ledger() -> Outcome {
    Outcome {
        failures: 0,
        ledger: None,
    }
}

/// Settings that determine a subcommand's outputs; hashed into the
/// embedded config fingerprint.
#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    settings: T,
}

fn meta_for<T: Serialize>(command: &str, settings: T) -> Meta {
    Meta::new(fingerprint(&Resolved {
        command,
        version: codecorpus::VERSION,
        settings,
    }))
}

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    // `filter` reads its threshold file itself
    let config = match (&g.config, &cli.command) {
        (Some(p), c) if !matches!(c, Command::Filter(_)) => load_toml::<RunConfig>(p)?,
        _ => RunConfig::default(),
    };
    let jobs = g
        .jobs
        .or(config.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let ctx = Ctx {
        jobs,
        seed: g.seed.or(config.seed).unwrap_or(0),
        out: g
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        config,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Filter(a) => filter(&ctx, a, g.config.as_deref()),
        Command::Dedup(a) => dedup_cmd(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::TrainTokenizer(a) => train_tokenizer(&ctx, a),
        Command::Lex(a) => lex(a),
        Command::EvalPpl(a) => eval_ppl(&ctx, a),
        Command::EvalHumaneval(a) => eval_humaneval(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<Outcome> {
    let sec = ctx.config.ingest.clone().unwrap_or_default();
    let defaults = ManifestOptions::default();
    let opts = ManifestOptions {
        min_stars: a.min_stars.or(sec.min_stars).unwrap_or(defaults.min_stars),
        per_language_cap: a
            .per_language_cap
            .or(sec.per_language_cap)
            .unwrap_or(defaults.per_language_cap),
    };
    let driver = match &sec.clone_command {
        Some(cmd) if !cmd.is_empty() => CloneDriver {
            program: cmd[0].clone(),
            args: cmd[1..].to_vec(),
        },
        Some(_) => return Err(Error::Config("ingest.clone_command is empty".into())),
        None => CloneDriver::default(),
    };
    let eval_per = a.eval_per_language.or(sec.eval_per_language);
    let meta = meta_for(
        "ingest",
        (&a.manifest, &a.dest, opts.min_stars, opts.per_language_cap, &driver, &a.exclude, eval_per, ctx.seed),
    );
    let entries = load_manifest(&a.manifest, &opts)?;
    let run = run_ingest(&entries, &a.dest, &driver, ctx.jobs)?;

    write_records(&ctx.out.join("records.jsonl"), Some(&meta), &run.records)?;
    write_jsonl(&ctx.out.join("outcomes.jsonl"), Some(&meta), &run.outcomes)?;
    write_json(&ctx.out.join("before_totals.json"), Some(&meta), &run.before_totals)?;

    if a.exclude.is_some() || eval_per.is_some() {
        let exclusion = match &a.exclude {
            Some(p) => ExclusionList::load(p)?,
            None => ExclusionList::default(),
        };
        let mut by_repo: BTreeMap<&str, Vec<SourceFileRecord>> = BTreeMap::new();
        for r in &run.records {
            by_repo.entry(r.repo.as_str()).or_default().push(r.clone());
        }
        let set = build_eval_set(&entries, &exclusion, eval_per.unwrap_or(100), ctx.seed, |e| {
            Ok(by_repo.get(e.url.as_str()).cloned().unwrap_or_default())
        })?;
        write_eval_set_dir(&ctx.out.join("eval_set"), &set, Some(&meta))?;
    }

    let failures: Vec<LedgerEntry> = run
        .outcomes
        .iter()
        .filter_map(|o| {
            o.error.as_ref().map(|m| LedgerEntry {
                stage: "ingest",
                item: o.url.clone(),
                message: m.clone(),
            })
        })
        .collect();
    log::info!("ingested {} files from {} repositories", run.records.len(), entries.len());
    ledger(&ctx.out, &meta, &failures)
}

fn filter(ctx: &Ctx, a: &InputArgs, config: Option<&Path>) -> Result<Outcome> {
    let cfg = match config {
        Some(p) => FilterConfig::load(p)?,
        None => FilterConfig::default(),
    };
    let meta = meta_for("filter", (&a.input, &cfg));
    let records = read_records(&a.input)?;
    let (kept, stats) = pool(ctx.jobs)?.install(|| filter_records(records, &cfg));
    write_records(&ctx.out.join("filtered.jsonl"), Some(&meta), &kept)?;
    write_json(&ctx.out.join("filter_stats.json"), Some(&meta), &stats)?;
    Ok(no_ledger())
}

fn dedup_cmd(ctx: &Ctx, a: &InputArgs) -> Result<Outcome> {
    let meta = meta_for("dedup", &a.input);
    let records = read_records(&a.input)?;
    let (kept, stats) = pool(ctx.jobs)?.install(|| dedup(records));
    write_records(&ctx.out.join("deduped.jsonl"), Some(&meta), &kept)?;
    write_json(&ctx.out.join("dedup_stats.json"), Some(&meta), &stats)?;
    Ok(no_ledger())
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    rows: Vec<CorpusStatsRow>,
}

fn stats(ctx: &Ctx, a: &StatsArgs) -> Result<Outcome> {
    let fmt = match a.format {
        TableFormat::Csv => "csv",
        TableFormat::Tsv => "tsv",
    };
    let meta = meta_for("stats", (&a.input, &a.before, fmt));
    let records = read_records(&a.input)?;
    let before_src = match &a.before {
        Some(p) => read_records(p)?,
        None => records.clone(),
    };
    let mut before: BTreeMap<LanguageId, u64> = BTreeMap::new();
    for r in &before_src {
        *before.entry(r.language).or_default() += r.byte_size;
    }
    let rows = corpus_stats(&records, &before);
    let bundle = emit_report(ReportKind::StatsTable, &ReportInput::Stats(rows.clone()), None)?;
    let delim = if fmt == "tsv" { b'\t' } else { b',' };
    atomic_write(&ctx.out.join(format!("stats.{fmt}")), &bundle.to_csv(Some(&meta), delim))?;
    write_json(&ctx.out.join("stats.json"), Some(&meta), &StatsFile { rows })?;
    Ok(no_ledger())
}

fn train_tokenizer(ctx: &Ctx, a: &TrainArgs) -> Result<Outcome> {
    let sec = ctx.config.tokenizer.clone().unwrap_or_default();
    let fraction = a.fraction.or(sec.fraction).unwrap_or(0.05);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} must lie in (0, 1]")));
    }
    let opts = TrainOptions {
        vocab_size: a.vocab_size.or(sec.vocab_size).unwrap_or(DEFAULT_VOCAB_SIZE),
        multi_whitespace: a.multi_whitespace,
    };
    let order = a.ngram_order.or(sec.ngram_order);
    let alpha = a.ngram_alpha.or(sec.ngram_alpha).unwrap_or(0.01);
    let meta = meta_for(
        "train-tokenizer",
        (&a.input, fraction, opts.vocab_size, opts.multi_whitespace, order, alpha, ctx.seed),
    );
    let records = read_records(&a.input)?;
    let subset = sample_subset(&records, fraction, ctx.seed);
    let texts: Vec<&[u8]> = subset.iter().map(|r| r.content.as_slice()).collect();
    let vocab = pool(ctx.jobs)?.install(|| train_bpe_with(texts.iter().copied(), &opts))?;
    vocab.save_with(&ctx.out.join("vocab.bpe"), Some(&meta))?;
    if let Some(order) = order {
        let model = NGramBackend::<f64>::train(vocab, texts.iter().copied(), order, alpha)?;
        model.save_with(&ctx.out.join("ngram.json"), Some(&meta))?;
    }
    log::info!("trained on {} of {} files", subset.len(), records.len());
    Ok(no_ledger())
}

#[derive(Serialize)]
struct LexLine {
    kind: codecorpus::lexer::TokenKind,
    start: usize,
    end: usize,
}

fn lex(a: &LexArgs) -> Result<Outcome> {
    let lang: LanguageId = a.lang.parse().map_err(|e| Error::Config(format!("{e}")))?;
    let bytes = std::fs::read(&a.file).map_err(|e| Error::io(&a.file, e))?;
    let (_, toks) = lex_bytes(&bytes, lang);
    let mut buf = Vec::new();
    for (kind, span) in toks {
        serde_json::to_writer(&mut buf, &LexLine { kind, start: span.start, end: span.end })
            .expect("token serializes");
        buf.push(b'\n');
    }
    std::io::stdout()
        .lock()
        .write_all(&buf)
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(no_ledger())
}

fn backend_config(ctx: &Ctx, flag: &Option<String>) -> Result<BackendConfig> {
    match (flag, &ctx.config.backend) {
        (Some(spec), _) => Ok(BackendConfig::from_spec(spec)),
        (None, Some(cfg)) => Ok(cfg.clone()),
        (None, None) => Err(Error::Config("no backend: pass --backend or set [backend] in the config".into())),
    }
}

fn eval_ppl(ctx: &Ctx, a: &EvalPplArgs) -> Result<Outcome> {
    let bcfg = backend_config(ctx, &a.backend)?;
    let backend = backend::from_config(&bcfg)?;
    let set = read_eval_set_dir(&a.eval_set)?;
    // `--out report.json` names the report file; otherwise a directory
    let (dir, report_path) = if ctx.out.extension().is_some_and(|e| e == "json") {
        let dir = ctx.out.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, ctx.out.clone())
    } else {
        (ctx.out.clone(), ctx.out.join("report.json"))
    };
    let meta = meta_for("eval-ppl", (&bcfg, set.id()));
    let report = pool(ctx.jobs)?.install(|| run_perplexity_eval(backend.as_ref(), &set));
    write_json(&report_path, Some(&meta), &report)?;
    let bundle = emit_report(ReportKind::Perplexity, &ReportInput::Perplexity(vec![report.clone()]), None)?;
    atomic_write(&dir.join("perplexity.csv"), &bundle.to_csv(Some(&meta), b','))?;
    let failures: Vec<LedgerEntry> = report
        .failures
        .iter()
        .map(|f| LedgerEntry {
            stage: "eval-ppl",
            item: format!("{}:{}", f.repo, f.path),
            message: f.message.clone(),
        })
        .chain(report.rows.iter().filter_map(|r| {
            r.absent_reason.as_ref().map(|m| LedgerEntry {
                stage: "eval-ppl",
                item: r.language.to_string(),
                message: format!("row absent: {m}"),
            })
        }))
        .collect();
    ledger(&dir, &meta, &failures)
}

/// Written next to `samples.jsonl` so the table can be rebuilt from it.
#[derive(Debug, Serialize, Deserialize)]
struct RunInfo {
    n: usize,
    ks: Vec<usize>,
    temperatures: Vec<f64>,
    top_p: f64,
    max_tokens: usize,
    backend: String,
}

fn eval_humaneval(ctx: &Ctx, a: &HumanEvalArgs) -> Result<Outcome> {
    let sec = ctx.config.humaneval.clone().unwrap_or_default();
    let defaults = HumanEvalConfig::default();
    let cfg = HumanEvalConfig {
        temperatures: a.temps.clone().or(sec.temperatures).unwrap_or(defaults.temperatures),
        n: a.n.or(sec.n).unwrap_or(defaults.n),
        top_p: a.top_p.or(sec.top_p).unwrap_or(defaults.top_p),
        max_tokens: a.max_tokens.or(sec.max_tokens).unwrap_or(defaults.max_tokens),
        stops: defaults.stops,
        seed: ctx.seed,
        timeout_s: a.timeout.or(sec.timeout_s).unwrap_or(defaults.timeout_s),
        jobs: ctx.jobs,
    };
    cfg.validate()?;
    let bcfg = backend_config(ctx, &a.backend)?;
    let backend = backend::from_config(&bcfg)?;
    let problems = load_problems(&a.problems)?;
    let runner: Option<Vec<String>> = match &a.runner {
        Some(r) => Some(r.split_whitespace().map(str::to_string).collect()),
        None => sec.runner.clone(),
    };
    let executor: Box<dyn Executor> = match (&a.verdicts, runner) {
        (Some(p), _) => Box::new(RecordedVerdicts::load(p)?),
        (None, Some(cmd)) if !cmd.is_empty() => {
            let workers = a.runner_workers.or(sec.runner_workers).unwrap_or(ctx.jobs);
            Box::new(SandboxPool::spawn(&cmd[0], &cmd[1..], workers)?)
        }
        _ => {
            return Err(Error::Config(
                "an executor is required: pass --verdicts <file> or --runner <command>".into(),
            ))
        }
    };
    let mut settings = cfg.clone();
    settings.jobs = 0; // parallelism does not change results
    let meta = meta_for("eval-humaneval", (&settings, &bcfg, &a.problems, &a.verdicts));

    let run = run_humaneval(backend.as_ref(), &problems, &cfg, executor.as_ref())?;
    let samples_path = ctx.out.join("samples.jsonl");
    write_jsonl(&samples_path, Some(&meta), &run.results)?;
    let info = RunInfo {
        n: cfg.n,
        ks: default_ks(cfg.n),
        temperatures: cfg.temperatures.clone(),
        top_p: cfg.top_p,
        max_tokens: cfg.max_tokens,
        backend: backend.name().to_string(),
    };
    write_json(&ctx.out.join("run.json"), Some(&meta), &info)?;

    let mut failures: Vec<LedgerEntry> = run
        .backend_failures()
        .map(|r| LedgerEntry {
            stage: "backend",
            item: format!("{} T={} sample {}", r.task_id, r.temperature, r.sample_index),
            message: r.backend_error.clone().unwrap_or_default(),
        })
        .collect();
    if let Some(e) = run.aborted {
        failures.push(LedgerEntry {
            stage: "executor",
            item: "run".into(),
            message: e.to_string(),
        });
        ledger(&ctx.out, &meta, &failures)?;
        return Err(e.into());
    }

    // aggregate from the persisted file, not from memory
    let persisted: Vec<CandidateResult> = read_jsonl(&samples_path)?;
    let table = PassAtKTable::from_results(&persisted, info.n, &info.ks)?;
    let bundle = emit_report(ReportKind::PassAtK, &ReportInput::PassAtK(table.clone()), None)?;
    atomic_write(&ctx.out.join("passk.csv"), &bundle.to_csv(Some(&meta), b','))?;
    write_json(&ctx.out.join("passk.json"), Some(&meta), &table)?;
    write_json(
        &ctx.out.join("best.json"),
        Some(&meta),
        &serde_json::json!({ "best": best_over_temperatures(&table)? }),
    )?;
    ledger(&ctx.out, &meta, &failures)
}

fn load_table(input: &Path) -> Result<PassAtKTable> {
    let dir = if input.is_dir() {
        input.to_path_buf()
    } else {
        input.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let samples = if input.is_dir() { dir.join("samples.jsonl") } else { input.to_path_buf() };
    let info: RunInfo = read_json(&dir.join("run.json"))?;
    let results: Vec<CandidateResult> = read_jsonl(&samples)?;
    Ok(PassAtKTable::from_results(&results, info.n, &info.ks)?)
}

fn in_dir(p: &Path, name: &str) -> PathBuf {
    if p.is_dir() {
        p.join(name)
    } else {
        p.to_path_buf()
    }
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<Outcome> {
    let (kind, name) = match a.kind {
        KindArg::Stats => (ReportKind::StatsTable, "stats"),
        KindArg::Passk => (ReportKind::PassAtK, "passk"),
        KindArg::Perplexity => (ReportKind::Perplexity, "perplexity"),
        KindArg::TemperatureSweep => (ReportKind::TemperatureSweep, "temperature_sweep"),
        KindArg::Scaling => (ReportKind::ScalingCurve, "scaling"),
    };
    if kind != ReportKind::Perplexity && a.input.len() != 1 {
        return Err(Error::Config(format!("report --kind {name} takes exactly one --in")));
    }
    let first = &a.input[0];
    let input = match kind {
        ReportKind::StatsTable => {
            let f: StatsFile = read_json(&in_dir(first, "stats.json"))?;
            ReportInput::Stats(f.rows)
        }
        ReportKind::PassAtK | ReportKind::TemperatureSweep => ReportInput::PassAtK(load_table(first)?),
        ReportKind::Perplexity => ReportInput::Perplexity(
            a.input
                .iter()
                .map(|p| read_json::<PerplexityReport>(&in_dir(p, "report.json")))
                .collect::<Result<_>>()?,
        ),
        ReportKind::ScalingCurve => ReportInput::Scaling(read_scaling_csv(first)?),
    };
    let meta = meta_for("report", (name, &a.input, a.cap, a.svg));
    let bundle = emit_report(kind, &input, a.cap)?;
    atomic_write(&ctx.out.join(format!("{name}.csv")), &bundle.to_csv(Some(&meta), b','))?;
    if a.svg {
        atomic_write(&ctx.out.join(format!("{name}.svg")), bundle.to_svg()?.as_bytes())?;
    }
    Ok(no_ledger())
}
