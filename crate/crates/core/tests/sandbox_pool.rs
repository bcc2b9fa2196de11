use std::path::PathBuf;
use std::process::Command;

use codecorpus::backend::{Backend, BackendError, CompletionRequest, CompletionSample, FinishReason, Score};
use codecorpus::extrinsic::executor::{ExecutionJob, Executor, SandboxPool};
use codecorpus::extrinsic::{
    default_ks, load_problems, run_humaneval, EvalError, HumanEvalConfig, PassAtKTable, ProblemRecord, Verdict,
};

fn python() -> Option<&'static str> {
    let ok = Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok {
        eprintln!("python3 not found; skipping");
    }
    ok.then_some("python3")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn pool(workers: usize) -> Option<SandboxPool> {
    let py = python()?;
    let script = fixtures().join("mock_runner.py").display().to_string();
    Some(SandboxPool::spawn(py, &[script], workers).unwrap())
}

fn job(task: &str, program: &str) -> ExecutionJob {
    ExecutionJob {
        task_id: task.into(),
        program: program.into(),
        timeout_s: 5.0,
        temperature: 0.2,
        sample_index: 0,
    }
}

#[test]
fn parallel_jobs_get_their_own_verdicts() {
    let Some(pool) = pool(3) else { return };
    assert_eq!(pool.size(), 3);
    let jobs: Vec<(ExecutionJob, Verdict)> = (0..30)
        .map(|i| match i % 3 {
            0 => (job(&format!("t{i}"), "assert 1 + 1 == 2\n"), Verdict::Pass),
            1 => (job(&format!("t{i}"), "assert 1 + 1 == 3\n"), Verdict::Fail),
            _ => (job(&format!("t{i}"), "raise KeyError('k')\n"), Verdict::Error),
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(j, want)| {
                let pool = &pool;
                s.spawn(move || {
                    let v = pool.execute(j).unwrap();
                    assert_eq!(v.task_id, j.task_id);
                    assert_eq!(v.verdict, *want);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    });
}

#[test]
fn runner_exit_and_wrong_id_are_executor_errors() {
    let Some(pool) = pool(2) else { return };
    assert!(matches!(pool.execute(&job("a", "WRONG_ID = 1\n")), Err(EvalError::Executor(_))));
    assert!(matches!(pool.execute(&job("b", "MISBEHAVE = 1\n")), Err(EvalError::Executor(_))));
    // Both runners are gone; the pool must fail rather than block.
    assert!(matches!(pool.execute(&job("c", "pass\n")), Err(EvalError::Executor(_))));
}

#[test]
fn unhealthy_runner_fails_spawn() {
    if python().is_none() {
        return;
    }
    let args = vec!["-c".to_string(), "print('hello')".to_string()];
    assert!(SandboxPool::spawn("python3", &args, 1).is_err());
    assert!(SandboxPool::spawn("/nonexistent/runner", &[], 1).is_err());
}

/// Completes every prompt with the canonical solution of its problem, or a
/// wrong body for tasks listed in `wrong`.
struct Oracle {
    problems: Vec<ProblemRecord>,
    wrong: Vec<&'static str>,
}

impl Backend for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<CompletionSample>, BackendError> {
        let p = self.problems.iter().find(|p| p.prompt == req.prompt).unwrap();
        let body = if self.wrong.contains(&p.task_id.as_str()) {
            "    return None\n".to_string()
        } else {
            p.canonical_solution.clone()
        };
        let text = format!("{body}\nprint('trailing')\n");
        Ok((0..req.n)
            .map(|_| CompletionSample {
                text: text.clone(),
                token_logprobs: vec![(text.clone(), -0.5)],
                finish_reason: FinishReason::Length,
            })
            .collect())
    }
    fn score_logprobs(&self, _: &str) -> Result<Score, BackendError> {
        Err(BackendError::InvalidRequest("unused".into()))
    }
}

#[test]
fn humaneval_through_runner_pool() {
    let Some(pool) = pool(2) else { return };
    let problems = load_problems(&fixtures().join("dryrun/problems.jsonl")).unwrap();
    let backend = Oracle {
        problems: problems.clone(),
        wrong: vec!["Mini/2"],
    };
    let cfg = HumanEvalConfig {
        temperatures: vec![0.2, 0.6],
        n: 3,
        jobs: 2,
        ..HumanEvalConfig::default()
    };
    let run = run_humaneval(&backend, &problems, &cfg, &pool).unwrap();
    assert!(run.aborted.is_none());
    assert_eq!(run.results.len(), 24);
    for r in &run.results {
        assert!(!r.truncated_text.contains("trailing"));
        let want = if r.task_id == "Mini/2" { Verdict::Fail } else { Verdict::Pass };
        assert_eq!(r.verdict, want, "{}", r.task_id);
    }
    let table = PassAtKTable::from_results(&run.results, 3, &default_ks(3)).unwrap();
    assert_eq!(table.ks, vec![1]);
    assert!(table.rows.iter().all(|row| row.estimates == vec![0.75]));
}
