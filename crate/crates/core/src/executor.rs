//! Runs candidate programs as external processes with a wall-clock limit,
//! capped output capture and an allowlisted environment, plus the repair
//! loop that feeds failures back to the fixer role.
//!
//! Candidates are not isolated from the network. Put an external jail in
//! `executor.jail_command` when that matters.

use std::collections::BTreeMap;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::metrics::parse_metric_output;
use crate::types::{MetricVector, ProgramSource};

/// Fraction of the wall clock a candidate may overrun before it is killed
/// outright. It receives SIGTERM at the limit and SIGKILL halfway through
/// the margin.
pub const GRACE_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
    UnparseableOutput,
}

impl ExecStatus {
    pub fn name(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::UnparseableOutput => "unparseable_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    /// Wall-clock seconds.
    pub duration: f64,
    pub metrics: Option<MetricVector>,
    pub stdout_truncated: bool,
}

impl ExecutionResult {
    /// What the fixer gets to see about a failure.
    pub fn error_trace(&self) -> String {
        match self.status {
            ExecStatus::Ok => String::new(),
            ExecStatus::Timeout => format!("{}\n[killed: exceeded the wall-clock limit after {:.1}s]", self.stderr, self.duration)
                .trim_start()
                .to_string(),
            ExecStatus::RuntimeError => {
                let mut t = self.stderr.clone();
                if t.trim().is_empty() && !self.stdout.trim().is_empty() {
                    t = self.stdout.clone();
                }
                if let Some(code) = self.exit_code {
                    if !t.trim().is_empty() {
                        t.push_str(&format!("\n[exit code {code}]"));
                    }
                }
                t
            }
            ExecStatus::UnparseableOutput => format!(
                "The program exited successfully but printed no valid `metrics = {{...}}` line.\nstdout:\n{}\nstderr:\n{}",
                self.stdout, self.stderr
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionLimits {
    pub wall_clock: Duration,
    pub stdout_cap: usize,
    /// Parent directory for per-run workdirs (system temp dir if unset).
    pub scratch_root: Option<PathBuf>,
    pub retain_workdir: bool,
    /// The complete child environment.
    pub env: BTreeMap<String, String>,
}

impl ExecutionLimits {
    pub fn from_config(cfg: &SearchConfig) -> Self {
        let ex = &cfg.executor;
        let mut env = BTreeMap::new();
        for name in &ex.env_passthrough {
            if let Ok(v) = std::env::var(name) {
                env.insert(name.clone(), v);
            }
        }
        env.insert("TRAIN_PATH".into(), ex.train_path.clone());
        env.insert("VALID_PATH".into(), ex.valid_path.clone());
        env.insert("TEST_PATH".into(), ex.test_path.clone());
        env.insert("SPLIT_SEED".into(), ex.split_seed.to_string());
        ExecutionLimits {
            wall_clock: Duration::from_secs_f64(cfg.exec_timeout_secs),
            stdout_cap: ex.stdout_cap,
            scratch_root: ex.scratch_root.clone(),
            retain_workdir: ex.retain_workdirs,
            env,
        }
    }
}

struct Capture {
    text: String,
    truncated: bool,
}

fn spawn_reader<R: Read + Send + 'static>(mut r: R, cap: usize) -> thread::JoinHandle<Capture> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        if truncated {
            // Drop the partial line at the cut.
            let end = kept.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            kept.truncate(end);
        }
        Capture {
            text: String::from_utf8_lossy(&kept).into_owned(),
            truncated,
        }
    })
}

fn signal_group(pid: u32, sig: i32) {
    // SAFETY: plain syscall; a stale group yields ESRCH, which is ignored.
    unsafe {
        libc::killpg(pid as libc::pid_t, sig);
    }
}

/// Runs one program and classifies the outcome. Only failures of the
/// executor itself are errors; a misbehaving candidate is a result.
pub fn execute(
    program: &ProgramSource,
    limits: &ExecutionLimits,
    runtime_command: &[String],
    file_name: &str,
) -> Result<ExecutionResult> {
    if runtime_command.is_empty() {
        return Err(Error::config("runtime command is empty"));
    }
    let infra = |what: &str, e: std::io::Error| Error::Infrastructure(format!("{what}: {e}"));
    let mut builder = tempfile::Builder::new();
    builder.prefix("agentsearch-");
    let dir = match &limits.scratch_root {
        Some(root) => builder.tempdir_in(root),
        None => builder.tempdir(),
    }
    .map_err(|e| infra("cannot create workdir", e))?;
    let path = dir.path().join(file_name);
    std::fs::write(&path, &program.source_text).map_err(|e| infra("cannot write program", e))?;

    let mut cmd = Command::new(&runtime_command[0]);
    cmd.args(&runtime_command[1..])
        .arg(&path)
        .current_dir(dir.path())
        .env_clear()
        .envs(&limits.env)
        .env("SCRATCH_PATH", dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| infra(&format!("cannot launch {}", runtime_command[0]), e))?;
    let pid = child.id();
    let out = spawn_reader(child.stdout.take().expect("piped"), limits.stdout_cap);
    let err = spawn_reader(child.stderr.take().expect("piped"), limits.stdout_cap);

    let term_at = limits.wall_clock;
    let kill_at = limits.wall_clock.mul_f64(1.0 + GRACE_MARGIN / 2.0);
    let mut poll = Duration::from_micros(200);
    let mut timed_out = false;
    let status = loop {
        if let Some(st) = child.try_wait().map_err(|e| infra("wait failed", e))? {
            break st;
        }
        let elapsed = start.elapsed();
        if elapsed >= kill_at {
            signal_group(pid, libc::SIGKILL);
            timed_out = true;
            break child.wait().map_err(|e| infra("wait failed", e))?;
        }
        if elapsed >= term_at && !timed_out {
            signal_group(pid, libc::SIGTERM);
            timed_out = true;
        }
        let next = if timed_out { kill_at } else { term_at };
        thread::sleep(poll.min(next.saturating_sub(elapsed)).max(Duration::from_micros(50)));
        poll = (poll * 2).min(Duration::from_millis(20));
    };
    // Leftover descendants would keep the pipes open.
    signal_group(pid, libc::SIGKILL);
    let duration = start.elapsed().as_secs_f64();
    let out = out.join().expect("reader thread");
    let err = err.join().expect("reader thread");

    if limits.retain_workdir {
        let _ = dir.keep();
    }

    let exit_code = status.code().or_else(|| status.signal().map(|s| 128 + s));
    let (status, metrics) = if timed_out {
        (ExecStatus::Timeout, None)
    } else if status.code() != Some(0) {
        (ExecStatus::RuntimeError, None)
    } else {
        match parse_metric_output(&out.text) {
            Ok(m) => (ExecStatus::Ok, Some(m)),
            Err(_) => (ExecStatus::UnparseableOutput, None),
        }
    };
    Ok(ExecutionResult {
        status,
        stdout: out.text,
        stderr: err.text,
        exit_code,
        duration,
        metrics,
        stdout_truncated: out.truncated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub program: ProgramSource,
    pub result: ExecutionResult,
    pub attempts_used: u32,
    /// Status of every execution, original first.
    pub history: Vec<ExecStatus>,
    /// Set when the repair loop stopped early on a generator failure.
    pub generator_error: Option<String>,
}

/// Execution settings bundled for the search loops.
#[derive(Debug, Clone)]
pub struct Executor {
    pub runtime_command: Vec<String>,
    pub file_name: String,
    pub limits: ExecutionLimits,
    pub repair_attempts: u32,
}

impl Executor {
    pub fn from_config(cfg: &SearchConfig) -> Self {
        let mut runtime_command = cfg.executor.jail_command.clone();
        runtime_command.extend(cfg.executor.runtime_command.iter().cloned());
        Executor {
            runtime_command,
            file_name: cfg.executor.program_file_name.clone(),
            limits: ExecutionLimits::from_config(cfg),
            repair_attempts: cfg.repair_attempts,
        }
    }

    pub fn execute(&self, program: &ProgramSource) -> Result<ExecutionResult> {
        execute(program, &self.limits, &self.runtime_command, &self.file_name)
    }

    /// Executes, then asks the fixer for a new version after every failure,
    /// up to `repair_attempts` times. Repaired programs keep the id and
    /// record the attempt index in their lineage.
    pub fn execute_with_repair(&self, program: &ProgramSource, generator: &Generator) -> Result<RepairOutcome> {
        let mut current = program.clone();
        let mut result = self.execute(&current)?;
        let mut history = vec![result.status];
        let mut attempts_used = 0;
        let mut generator_error = None;
        while result.status != ExecStatus::Ok && attempts_used < self.repair_attempts {
            let attempt = attempts_used + 1;
            let fixed = match generator.repair(&current.source_text, &result.error_trace(), attempt) {
                Ok(code) => code,
                Err(e) => {
                    generator_error = Some(e.to_string());
                    break;
                }
            };
            attempts_used = attempt;
            let mut lineage = current.lineage.clone();
            lineage.repair_attempt = Some(attempt);
            current = ProgramSource {
                source_text: fixed,
                lineage,
                ..current
            };
            result = self.execute(&current)?;
            history.push(result.status);
        }
        Ok(RepairOutcome {
            program: current,
            result,
            attempts_used,
            history,
            generator_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Lineage, NodeId, Origin};

    fn prog(text: &str) -> ProgramSource {
        ProgramSource::new(
            NodeId(1),
            text.into(),
            Lineage::new(Origin::RootInit, vec![]),
            "t".into(),
        )
    }

    fn limits(secs: f64) -> ExecutionLimits {
        ExecutionLimits::from_config(&SearchConfig {
            exec_timeout_secs: secs,
            ..Default::default()
        })
    }

    fn sh() -> Vec<String> {
        vec!["sh".into()]
    }

    const GOOD: &str =
        "echo 'score = 0.5'\necho 'metrics = {\"er\": 0.1, \"norm_gini\": 0.9, \"spearman\": 0.8, \"rmse\": 12.5}'\n";

    #[test]
    fn happy_path_parses_metrics() {
        let r = execute(&prog(GOOD), &limits(10.0), &sh(), "c").unwrap();
        assert_eq!(r.status, ExecStatus::Ok);
        let m = r.metrics.unwrap();
        assert_eq!((m.er, m.rmse, m.scalar_score), (0.1, 12.5, Some(0.5)));
        assert_eq!(r.exit_code, Some(0));
    }

    #[test]
    fn failures_are_classified() {
        let r = execute(&prog("echo boom >&2\nexit 3\n"), &limits(10.0), &sh(), "c").unwrap();
        assert_eq!(r.status, ExecStatus::RuntimeError);
        assert_eq!(r.stderr, "boom\n");
        assert_eq!(r.exit_code, Some(3));
        let r = execute(&prog("echo hello\n"), &limits(10.0), &sh(), "c").unwrap();
        assert_eq!(r.status, ExecStatus::UnparseableOutput);
        assert!(r.metrics.is_none());
    }

    #[test]
    fn environment_is_allowlisted() {
        std::env::set_var("AGENTSEARCH_TEST_SECRET", "x");
        let r = execute(
            &prog("echo \"[$TRAIN_PATH][$SPLIT_SEED][$AGENTSEARCH_TEST_SECRET]\"\n"),
            &limits(10.0),
            &sh(),
            "c",
        )
        .unwrap();
        assert_eq!(r.stdout, "[data/train.csv][0][]\n");
    }

    #[test]
    fn sleep_forever_is_killed_in_time() {
        let l = limits(0.5);
        let t = Instant::now();
        let r = execute(&prog("sleep 1000\n"), &l, &sh(), "c").unwrap();
        let took = t.elapsed().as_secs_f64();
        assert_eq!(r.status, ExecStatus::Timeout);
        assert!(took <= 0.5 * (1.0 + GRACE_MARGIN), "took {took}");
    }

    #[test]
    fn stdout_cap_keeps_whole_lines() {
        let mut l = limits(10.0);
        l.stdout_cap = 100;
        let text = format!("{GOOD}i=0\nwhile [ $i -lt 100 ]; do echo padding-line-$i; i=$((i+1)); done\n");
        let r = execute(&prog(&text), &l, &sh(), "c").unwrap();
        assert!(r.stdout_truncated);
        assert!(r.stdout.len() <= 100 && r.stdout.ends_with('\n'));
    }
}
