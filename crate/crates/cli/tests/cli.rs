use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codecorpus::ingest::{write_eval_set_dir, write_records, EvalSet, SourceFileRecord};
use codecorpus::LanguageId;

fn bin(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_codecorpus"));
    for var in ["CODECORPUS_CONFIG", "CODECORPUS_JOBS", "CODECORPUS_SEED", "CODECORPUS_OUT"] {
        cmd.env_remove(var);
    }
    cmd.args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Rows of a CSV written by the tool, without the provenance comment.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn source(lang: LanguageId, i: usize) -> String {
    let mut body = format!("// {} file {i}\n", lang.name());
    for j in 0..60 {
        body.push_str(&format!("value_{i}_{j} = compute({j}, {}) + offset\n", i * j));
    }
    body
}

fn corpus(dir: &Path) -> PathBuf {
    let mut records = Vec::new();
    for (n, lang) in LanguageId::ALL.into_iter().enumerate() {
        for i in 0..2 {
            let path = format!("src/f{i}.{}", lang.extensions()[0]);
            records.push(SourceFileRecord::new(format!("https://example.com/{n}"), path, lang, source(lang, n * 2 + i).into_bytes()));
        }
    }
    // one exact duplicate and one file under the token threshold
    let dup = records[0].clone();
    records.push(SourceFileRecord { path: "copy.c".into(), ..dup });
    records.push(SourceFileRecord::new("https://example.com/x", "tiny.py", LanguageId::Python, b"x = 1\n".to_vec()));
    let p = dir.join("records.jsonl");
    write_records(&p, None, &records).unwrap();
    p
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(bin(&["stats", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_error_exits_1_with_category() {
    let out = bin(&["stats", "--in", "/nonexistent/records.jsonl", "--out", "/tmp/unused-out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));
}

#[test]
fn stats_on_empty_corpus_has_twelve_zero_rows_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let out = dir.path().join("out");
    ok(&["stats", "--in", s(&input), "--out", s(&out)]);
    let rows = csv_rows(&out.join("stats.csv"));
    assert_eq!(rows.len(), 14, "{rows:?}");
    let names: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    let mut expected: Vec<&str> = LanguageId::ALL.iter().map(|l| l.name()).collect();
    expected.push("Total");
    assert_eq!(names, expected);
    for r in &rows[1..] {
        assert!(r[1..].iter().all(|c| c.parse::<f64>().unwrap() == 0.0), "{r:?}");
    }
}

/// filter → dedup → stats → train-tokenizer → eval-ppl → eval-humaneval →
/// report, all into `out`.
fn pipeline(work: &Path, out: &Path) {
    let records = corpus(work);
    let o = s(out);
    ok(&["filter", "--in", s(&records), "--out", o]);
    ok(&["dedup", "--in", s(&out.join("filtered.jsonl")), "--out", o]);
    let deduped = out.join("deduped.jsonl");
    ok(&["stats", "--in", s(&deduped), "--before", s(&records), "--out", o]);
    ok(&[
        "train-tokenizer", "--in", s(&deduped), "--fraction", "1.0", "--vocab-size", "320",
        "--ngram-order", "3", "--seed", "5", "--jobs", "2", "--out", o,
    ]);
    assert!(out.join("vocab.bpe").exists() && out.join("ngram.json").exists());

    let mut set = EvalSet::default();
    set.files.insert(
        LanguageId::Python,
        vec![SourceFileRecord::new("r", "a.py", LanguageId::Python, b"def f(x):\n    return x + 1\n".to_vec())],
    );
    set.files.insert(
        LanguageId::Go,
        vec![SourceFileRecord::new("r", "a.go", LanguageId::Go, b"func f(x int) int { return x + 1 }\n".to_vec())],
    );
    let eval_set = work.join("eval_set");
    write_eval_set_dir(&eval_set, &set, None).unwrap();
    let ngram = out.join("ngram.json");
    ok(&["eval-ppl", "--backend", s(&ngram), "--eval-set", s(&eval_set), "--jobs", "2", "--out", o]);

    let dry = fixtures().join("dryrun");
    ok(&[
        "eval-humaneval", "--backend", s(&ngram),
        "--problems", s(&dry.join("problems.jsonl")),
        "--verdicts", s(&dry.join("verdicts.jsonl")),
        "--n", "16", "--temps", "0.2,0.8", "--max-tokens", "12", "--seed", "9", "--jobs", "3", "--out", o,
    ]);
    ok(&["report", "--kind", "passk", "--in", o, "--svg", "--out", o]);
    ok(&["report", "--kind", "temperature-sweep", "--in", o, "--out", o]);
    ok(&["report", "--kind", "perplexity", "--in", o, "--svg", "--out", o]);
    ok(&["report", "--kind", "stats", "--in", o, "--out", o]);
}

#[test]
fn pipeline_outputs_and_recorded_verdict_table() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    pipeline(work.path(), &out);

    let filtered = codecorpus::ingest::read_records(&out.join("filtered.jsonl")).unwrap();
    assert_eq!(filtered.len(), 25);
    let deduped = codecorpus::ingest::read_records(&out.join("deduped.jsonl")).unwrap();
    assert_eq!(deduped.len(), 24);

    let passk = csv_rows(&out.join("passk.csv"));
    assert_eq!(passk[0], vec!["temperature", "pass@1", "pass@10"]);
    assert_eq!(passk[1], vec!["0.2", "0.28125", "0.5625"]);
    assert_eq!(passk[2], vec!["0.8", "0.046875", "0.46875"]);
    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("best.json")).unwrap()).unwrap();
    let best = best["best"].as_array().unwrap();
    assert!(best.iter().all(|b| b["temperature"] == 0.2));
    assert!(std::fs::read_to_string(out.join("passk.svg")).unwrap().starts_with("<svg"));

    let ppl = csv_rows(&out.join("perplexity.csv"));
    assert_eq!(ppl.len(), 3, "{ppl:?}");
    assert!(ppl[1..].iter().all(|r| r[2].parse::<f64>().unwrap() > 1.0));

    let lexed = ok(&["lex", "--lang", "python", s(&fixtures().join("../golden/python.src"))]);
    let lines = String::from_utf8(lexed.stdout).unwrap();
    let golden = std::fs::read_to_string(fixtures().join("../golden/python.tokens.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), golden.lines().count());
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    // Paths are part of the provenance fingerprint, so both runs use the
    // same output directory.
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    pipeline(work.path(), &out);
    let ta = tree(&out);
    std::fs::remove_dir_all(&out).unwrap();
    pipeline(work.path(), &out);
    let tb = tree(&out);
    assert!(ta.len() > 10);
    assert_eq!(ta.iter().map(|f| &f.0).collect::<Vec<_>>(), tb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in ta.iter().zip(&tb) {
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn passk_report_layout_for_default_sweep() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    let records = corpus(work.path());
    let o = s(&out);
    ok(&["train-tokenizer", "--in", s(&records), "--fraction", "1.0", "--vocab-size", "300", "--ngram-order", "2", "--out", o]);

    // Verdicts without a temperature apply to every temperature.
    let mut verdicts = String::new();
    for task in 0..4 {
        for i in 0..100 {
            let v = if i < task * 10 { "pass" } else { "fail" };
            verdicts.push_str(&format!("{{\"task_id\":\"Mini/{task}\",\"sample_index\":{i},\"verdict\":\"{v}\"}}\n"));
        }
    }
    let vpath = work.path().join("verdicts.jsonl");
    std::fs::write(&vpath, verdicts).unwrap();
    ok(&[
        "eval-humaneval", "--backend", s(&out.join("ngram.json")),
        "--problems", s(&fixtures().join("dryrun/problems.jsonl")),
        "--verdicts", s(&vpath), "--n", "100", "--temps", "0.8,0.2,0.6,0.4", "--max-tokens", "4", "--out", o,
    ]);
    ok(&["report", "--kind", "passk", "--in", o, "--out", o]);
    let rows = csv_rows(&out.join("passk.csv"));
    assert_eq!(rows[0], vec!["temperature", "pass@1", "pass@10", "pass@100"]);
    let temps: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(temps, vec!["0.2", "0.4", "0.6", "0.8"]);
    // counts 0, 10, 20, 30 of 100: pass@1 is their mean fraction and
    // pass@100 the fraction of problems with any pass
    for r in &rows[1..] {
        let p1: f64 = r[1].parse().unwrap();
        assert!((p1 - 0.15).abs() < 1e-12, "{r:?}");
        assert_eq!(r[3], "0.75");
    }
}

#[test]
fn failed_items_exit_1_and_fill_the_ledger() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    let records = corpus(work.path());
    let o = s(&out);
    ok(&["train-tokenizer", "--in", s(&records), "--fraction", "1.0", "--vocab-size", "300", "--ngram-order", "2", "--out", o]);
    let mut set = EvalSet::default();
    set.files.insert(
        LanguageId::Ruby,
        vec![
            SourceFileRecord::new("r", "ok.rb", LanguageId::Ruby, b"puts 1\n".to_vec()),
            SourceFileRecord::new("r", "empty.rb", LanguageId::Ruby, Vec::new()),
        ],
    );
    let eval_set = work.path().join("eval_set");
    write_eval_set_dir(&eval_set, &set, None).unwrap();
    let res = bin(&["eval-ppl", "--backend", s(&out.join("ngram.json")), "--eval-set", s(&eval_set), "--out", o]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error[partial]"));
    let ledger = std::fs::read_to_string(out.join("ledger.jsonl")).unwrap();
    assert!(ledger.contains("empty.rb"));
    assert!(out.join("report.json").exists());
}
