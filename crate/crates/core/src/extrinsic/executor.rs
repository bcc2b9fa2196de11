//! Program execution: a pool of sandbox runner processes speaking
//! line-delimited JSON over stdio, and a recorded-verdict stand-in.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::{EvalError, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionJob {
    pub task_id: String,
    pub program: String,
    pub timeout_s: f64,
    #[serde(skip)]
    pub temperature: f64,
    #[serde(skip)]
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionVerdict {
    pub task_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub detail: String,
    #[serde(default)]
    pub duration_s: f64,
}

/// Runs one job to a verdict. An `Err` means the executor itself broke and
/// the evaluation must stop.
pub trait Executor: Send + Sync {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionVerdict, EvalError>;
}

#[derive(Debug, Deserialize)]
struct RecordedEntry {
    task_id: String,
    #[serde(default)]
    temperature: Option<f64>,
    sample_index: usize,
    verdict: Verdict,
    #[serde(default)]
    detail: String,
    #[serde(default)]
    duration_s: f64,
}

/// Verdicts looked up from a fixture instead of running anything.
///
/// Entries without a temperature apply to every temperature; an entry with
/// one takes precedence.
#[derive(Debug, Default)]
pub struct RecordedVerdicts {
    exact: HashMap<(String, u64, usize), ExecutionVerdict>,
    any_temp: HashMap<(String, usize), ExecutionVerdict>,
}

impl RecordedVerdicts {
    pub fn insert(&mut self, task_id: &str, temperature: Option<f64>, sample_index: usize, verdict: Verdict) {
        let v = ExecutionVerdict {
            task_id: task_id.to_string(),
            verdict,
            detail: String::new(),
            duration_s: 0.0,
        };
        match temperature {
            Some(t) => self.exact.insert((task_id.to_string(), t.to_bits(), sample_index), v),
            None => self.any_temp.insert((task_id.to_string(), sample_index), v),
        };
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.any_temp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSONL of `{task_id, temperature?, sample_index, verdict, detail?, duration_s?}`.
    pub fn load(path: &Path) -> crate::Result<Self> {
        let entries: Vec<RecordedEntry> = crate::report::persist::read_jsonl(path)?;
        let mut out = Self::default();
        for e in entries {
            let v = ExecutionVerdict {
                task_id: e.task_id.clone(),
                verdict: e.verdict,
                detail: e.detail,
                duration_s: e.duration_s,
            };
            let dup = match e.temperature {
                Some(t) => out.exact.insert((e.task_id.clone(), t.to_bits(), e.sample_index), v),
                None => out.any_temp.insert((e.task_id.clone(), e.sample_index), v),
            };
            if dup.is_some() {
                return Err(crate::Error::Schema(format!(
                    "{}: verdict for {} sample {} given twice",
                    path.display(),
                    e.task_id,
                    e.sample_index
                )));
            }
        }
        Ok(out)
    }
}

impl Executor for RecordedVerdicts {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionVerdict, EvalError> {
        self.exact
            .get(&(job.task_id.clone(), job.temperature.to_bits(), job.sample_index))
            .or_else(|| self.any_temp.get(&(job.task_id.clone(), job.sample_index)))
            .cloned()
            .ok_or_else(|| {
                EvalError::Executor(format!(
                    "no recorded verdict for {} T={} sample {}",
                    job.task_id, job.temperature, job.sample_index
                ))
            })
    }
}

#[derive(Serialize)]
struct WireJob<'a> {
    task_id: &'a str,
    program: &'a str,
    timeout_s: f64,
}

struct Runner {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Runner {
    fn spawn(program: &str, args: &[String]) -> Result<Self, EvalError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Executor(format!("cannot start runner {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut r = Self { child, stdin, stdout };
        let reply = r.roundtrip("{\"cmd\":\"ping\"}")?;
        let ok: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| EvalError::Executor(format!("bad ping reply {reply:?}: {e}")))?;
        if ok.get("ok") != Some(&serde_json::Value::Bool(true)) {
            return Err(EvalError::Executor(format!("runner unhealthy: {reply}")));
        }
        Ok(r)
    }

    fn roundtrip(&mut self, line: &str) -> Result<String, EvalError> {
        let io = |e: std::io::Error| EvalError::Executor(format!("runner i/o: {e}"));
        self.stdin.write_all(line.as_bytes()).map_err(io)?;
        self.stdin.write_all(b"\n").map_err(io)?;
        self.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(io)? == 0 {
            return Err(EvalError::Executor("runner exited".into()));
        }
        Ok(reply.trim_end().to_string())
    }
}

impl Drop for Runner {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A fixed pool of runner processes; each handles one job at a time.
pub struct SandboxPool {
    state: Mutex<PoolState>,
    ready: Condvar,
    size: usize,
}

struct PoolState {
    idle: Vec<Runner>,
    /// Runners not yet discarded, idle or checked out.
    alive: usize,
}

impl SandboxPool {
    /// Start `workers` copies of `program args..` and health-check each.
    pub fn spawn(program: &str, args: &[String], workers: usize) -> Result<Self, EvalError> {
        let workers = workers.max(1);
        let runners = (0..workers)
            .map(|_| Runner::spawn(program, args))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            state: Mutex::new(PoolState {
                idle: runners,
                alive: workers,
            }),
            ready: Condvar::new(),
            size: workers,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn checkout(&self) -> Result<Runner, EvalError> {
        let mut st = self.state.lock().expect("pool lock");
        loop {
            if let Some(r) = st.idle.pop() {
                return Ok(r);
            }
            if st.alive == 0 {
                return Err(EvalError::Executor("no healthy runners left".into()));
            }
            st = self.ready.wait(st).expect("pool lock");
        }
    }

    fn checkin(&self, r: Runner) {
        self.state.lock().expect("pool lock").idle.push(r);
        self.ready.notify_one();
    }

    fn discard(&self, r: Runner) {
        drop(r);
        self.state.lock().expect("pool lock").alive -= 1;
        self.ready.notify_all();
    }
}

impl Executor for SandboxPool {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionVerdict, EvalError> {
        let mut runner = self.checkout()?;
        let line = serde_json::to_string(&WireJob {
            task_id: &job.task_id,
            program: &job.program,
            timeout_s: job.timeout_s,
        })
        .expect("job serializes");
        // a runner that misbehaves is killed, never reused
        let reply = match runner.roundtrip(&line) {
            Ok(r) => r,
            Err(e) => {
                self.discard(runner);
                return Err(e);
            }
        };
        let v: ExecutionVerdict = match serde_json::from_str(&reply) {
            Ok(v) => v,
            Err(e) => {
                self.discard(runner);
                return Err(EvalError::Executor(format!("bad runner reply {reply:?}: {e}")));
            }
        };
        if v.task_id != job.task_id {
            self.discard(runner);
            return Err(EvalError::Executor(format!(
                "runner answered {} for job {}",
                v.task_id, job.task_id
            )));
        }
        self.checkin(runner);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(task: &str, t: f64, i: usize) -> ExecutionJob {
        ExecutionJob {
            task_id: task.into(),
            program: String::new(),
            timeout_s: 1.0,
            temperature: t,
            sample_index: i,
        }
    }

    #[test]
    fn recorded_lookup_prefers_exact_temperature() {
        let mut r = RecordedVerdicts::default();
        r.insert("a", None, 0, Verdict::Fail);
        r.insert("a", Some(0.4), 0, Verdict::Pass);
        assert_eq!(r.execute(&job("a", 0.2, 0)).unwrap().verdict, Verdict::Fail);
        assert_eq!(r.execute(&job("a", 0.4, 0)).unwrap().verdict, Verdict::Pass);
        assert!(matches!(r.execute(&job("a", 0.2, 1)), Err(EvalError::Executor(_))));
    }

    #[test]
    fn wire_job_omits_local_fields() {
        let j = job("a", 0.2, 3);
        let v = serde_json::to_value(&j).unwrap();
        assert_eq!(v, serde_json::json!({"task_id":"a","program":"","timeout_s":1.0}));
    }

    #[test]
    fn recorded_load_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        std::fs::write(
            &p,
            "{\"task_id\":\"a\",\"sample_index\":0,\"verdict\":\"pass\"}\n{\"task_id\":\"a\",\"sample_index\":0,\"verdict\":\"fail\"}\n",
        )
        .unwrap();
        assert!(RecordedVerdicts::load(&p).is_err());
    }
}
