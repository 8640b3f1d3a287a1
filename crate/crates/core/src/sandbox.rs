//! Runs untrusted Python in child processes, one process per test vector.
//!
//! Batches start one interpreter per candidate which forks a fresh child per
//! vector after its imports, so startup cost is paid once. The interpreter
//! gets an empty temporary working directory holding only the harness shim,
//! a cleared environment, an address-space rlimit and a wall-clock deadline. The shim installs an audit hook that denies file
//! opens, new imports, sockets and process creation before any candidate
//! code runs. This is a defense-in-depth boundary, not a hard security one.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::model::{ArgumentTuple, Outcome};
use crate::value::Value;

const HARNESS_SHIM: &str = include_str!("harness.py");
const SHIM_FILE: &str = "harness.py";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    #[serde(with = "millis")]
    pub wall_timeout: Duration,
    pub memory_cap: u64,
    pub max_stdout: usize,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self { wall_timeout: Duration::from_secs(5), memory_cap: 256 << 20, max_stdout: 64 << 10 }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.wall_timeout.is_zero() || self.memory_cap == 0 || self.max_stdout == 0 {
            return Err(SandboxError::InvalidLimits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandboxError {
    #[error("harness failure: {0}")]
    HarnessFailure(String),
    #[error("execution limits must all be positive")]
    InvalidLimits,
    #[error("nothing to run: {0}")]
    EmptyInput(&'static str),
}

/// Counting semaphore capping concurrent child processes.
#[derive(Debug)]
pub struct Semaphore {
    total: usize,
    available: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore, usize);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self { total: permits.max(1), available: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn acquire(&self) -> Permit<'_> {
        self.acquire_many(1)
    }

    /// Takes `n` permits at once (capped at the total), so two callers can
    /// never deadlock each holding part of what they need.
    pub fn acquire_many(&self, n: usize) -> Permit<'_> {
        let want = n.clamp(1, self.total);
        let mut free = self.available.lock().unwrap();
        while *free < want {
            free = self.cv.wait(free).unwrap();
        }
        *free -= want;
        Permit(self, want)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += self.1;
        self.0.cv.notify_all();
    }
}

pub const DEFAULT_CONCURRENCY: usize = 4;

fn global_semaphore() -> Arc<Semaphore> {
    static GLOBAL: OnceLock<Arc<Semaphore>> = OnceLock::new();
    GLOBAL.get_or_init(|| Arc::new(Semaphore::new(DEFAULT_CONCURRENCY))).clone()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignatureCheck {
    Ok,
    Mismatch(String),
}

/// One call's outcome plus whatever the candidate printed.
#[derive(Debug, Clone, PartialEq)]
pub struct CallReport {
    pub outcome: Outcome,
    pub stdout: String,
    pub stdout_truncated: bool,
    pub elapsed: Duration,
}

#[derive(Serialize)]
struct ShimRequest<'a> {
    mode: &'a str,
    source: &'a str,
    function: &'a str,
    args: &'a [Value],
    arity: usize,
    max_stdout: usize,
    nonce: &'a str,
    #[serde(flatten)]
    batch: Option<BatchSpec<'a>>,
}

#[derive(Serialize)]
struct BatchSpec<'a> {
    vectors: Vec<&'a [Value]>,
    timeout: f64,
    parallel: usize,
    reply_cap: usize,
}

#[derive(Deserialize)]
struct BatchItem {
    outcome: Outcome,
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stdout_truncated: bool,
    elapsed: f64,
}

#[derive(Deserialize)]
struct ShimReply {
    nonce: String,
    #[serde(default)]
    outcome: Option<Outcome>,
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stdout_truncated: bool,
    #[serde(default)]
    probe: Option<String>,
    #[serde(default)]
    detail: String,
    #[serde(default)]
    batch: Option<Vec<BatchItem>>,
}

struct RawRun {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    status: Option<ExitStatus>,
    elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    python: PathBuf,
    semaphore: Arc<Semaphore>,
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::new("python3")
    }
}

fn read_capped(mut r: impl Read, cap: usize) -> Vec<u8> {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match r.read(&mut buf) {
            Ok(0) | Err(_) => return kept,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
}

fn nonce() -> String {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("{:x}-{n}-{}", std::process::id(), uuid::Uuid::new_v4().simple())
}

impl Sandbox {
    /// Uses the process-wide semaphore shared by every sandbox.
    pub fn new(python: impl Into<PathBuf>) -> Self {
        Self { python: python.into(), semaphore: global_semaphore() }
    }

    pub fn with_semaphore(mut self, semaphore: Arc<Semaphore>) -> Self {
        self.semaphore = semaphore;
        self
    }

    pub fn python(&self) -> &std::path::Path {
        &self.python
    }

    fn spawn(&self, request: &ShimRequest<'_>, limits: &ExecutionLimits) -> Result<RawRun, SandboxError> {
        self.spawn_with(request, limits, limits.wall_timeout, 1)
    }

    /// Runs the shim once. `deadline` bounds the whole process and `permits`
    /// is how many concurrent children it may fork.
    fn spawn_with(
        &self,
        request: &ShimRequest<'_>,
        limits: &ExecutionLimits,
        deadline: Duration,
        permits: usize,
    ) -> Result<RawRun, SandboxError> {
        let _permit = self.semaphore.acquire_many(permits);
        let harness_err = |what: &str, e: std::io::Error| SandboxError::HarnessFailure(format!("{what}: {e}"));

        let workdir = tempfile::tempdir().map_err(|e| harness_err("creating working directory", e))?;
        std::fs::write(workdir.path().join(SHIM_FILE), HARNESS_SHIM).map_err(|e| harness_err("writing shim", e))?;
        let payload = serde_json::to_vec(request).expect("request serializes");

        let memory_cap = limits.memory_cap;
        let cpu_secs = limits.wall_timeout.as_secs() + 2;
        let mut cmd = Command::new(&self.python);
        cmd.args(["-I", "-S", "-B", SHIM_FILE])
            .current_dir(workdir.path())
            .env_clear()
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONIOENCODING", "utf-8")
            .env("LANG", "C.UTF-8")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                libc::setsid();
                let mem = libc::rlimit { rlim_cur: memory_cap as libc::rlim_t, rlim_max: memory_cap as libc::rlim_t };
                libc::setrlimit(libc::RLIMIT_AS, &mem);
                let cpu = libc::rlimit { rlim_cur: cpu_secs as libc::rlim_t, rlim_max: cpu_secs as libc::rlim_t };
                libc::setrlimit(libc::RLIMIT_CPU, &cpu);
                let core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                libc::setrlimit(libc::RLIMIT_CORE, &core);
                Ok(())
            });
        }

        let start = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|e| harness_err(&format!("starting {}", self.python.display()), e))?;
        let pid = child.id() as libc::pid_t;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let out_cap = limits.max_stdout.saturating_mul(8) + (1 << 20);
        let stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || read_capped(stdout, out_cap));
        let stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || read_capped(stderr, 16 << 10));

        let waited = child.wait_timeout(deadline);
        let status = match waited {
            Ok(Some(status)) => Some(status),
            Ok(None) | Err(_) => {
                // SAFETY: pid is our child's process group (setsid above).
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                }
                let _ = child.kill();
                let _ = child.wait();
                None
            }
        };
        let elapsed = start.elapsed();
        let _ = writer.join();
        let stdout = reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        Ok(RawRun { stdout, stderr, status, elapsed })
    }

    fn parse_reply(raw: &RawRun, nonce: &str) -> Option<ShimReply> {
        let text = String::from_utf8_lossy(&raw.stdout);
        let line = text.lines().rev().find(|l| !l.trim().is_empty())?;
        let reply: ShimReply = serde_json::from_str(line).ok()?;
        (reply.nonce == nonce || reply.nonce.is_empty()).then_some(reply)
    }

    /// Runs `function_name(*args)` once in a fresh process.
    pub fn run_one(
        &self,
        source: &str,
        function_name: &str,
        args: &ArgumentTuple,
        limits: &ExecutionLimits,
    ) -> Result<CallReport, SandboxError> {
        let nonce = nonce();
        let request = ShimRequest {
            mode: "call",
            source,
            function: function_name,
            args: &args.values,
            arity: args.arity(),
            max_stdout: limits.max_stdout,
            nonce: &nonce,
            batch: None,
        };
        let raw = self.spawn(&request, limits)?;
        let Some(status) = raw.status else {
            return Ok(CallReport { outcome: Outcome::TimedOut, stdout: String::new(), stdout_truncated: false, elapsed: raw.elapsed });
        };
        let report = match Self::parse_reply(&raw, &nonce) {
            Some(ShimReply { outcome: Some(outcome), stdout, stdout_truncated, .. }) => {
                CallReport { outcome, stdout, stdout_truncated, elapsed: raw.elapsed }
            }
            _ => {
                let stderr = String::from_utf8_lossy(&raw.stderr);
                let outcome = if stderr.contains("MemoryError") {
                    Outcome::MemoryExceeded
                } else if is_cpu_limit(&status) {
                    Outcome::TimedOut
                } else {
                    Outcome::Raised(format!("process exited without a result ({status})"))
                };
                CallReport { outcome, stdout: String::new(), stdout_truncated: false, elapsed: raw.elapsed }
            }
        };
        Ok(report)
    }

    /// One outcome per vector, in order, each from its own process.
    pub fn run_candidate(
        &self,
        source: &str,
        function_name: &str,
        vectors: &[ArgumentTuple],
        limits: &ExecutionLimits,
    ) -> Result<Vec<Outcome>, SandboxError> {
        Ok(self.run_reports(source, function_name, vectors, limits)?.into_iter().map(|r| r.outcome).collect())
    }

    /// Like `run_candidate` but keeps captured stdout and timings.
    pub fn run_reports(
        &self,
        source: &str,
        function_name: &str,
        vectors: &[ArgumentTuple],
        limits: &ExecutionLimits,
    ) -> Result<Vec<CallReport>, SandboxError> {
        if source.trim().is_empty() {
            return Err(SandboxError::EmptyInput("source"));
        }
        if vectors.is_empty() {
            return Err(SandboxError::EmptyInput("vectors"));
        }
        limits.validate()?;
        if vectors.len() > 1 {
            if let Some(reports) = self.run_batch(source, function_name, vectors, limits)? {
                return Ok(reports);
            }
            tracing::warn!("batch run gave no usable reply; running vectors one process at a time");
        }
        let workers = vectors.len().min(self.semaphore.total());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<CallReport, SandboxError>>>> = vectors.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= vectors.len() {
                        break;
                    }
                    let r = self.run_one(source, function_name, &vectors[i], limits);
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        slots.into_iter().map(|s| s.into_inner().unwrap().expect("every slot filled")).collect()
    }

    /// All vectors through one forking shim. `None` when the shim produced no
    /// usable reply, in which case the caller falls back to single runs.
    fn run_batch(
        &self,
        source: &str,
        function_name: &str,
        vectors: &[ArgumentTuple],
        limits: &ExecutionLimits,
    ) -> Result<Option<Vec<CallReport>>, SandboxError> {
        let parallel = vectors.len().min(self.semaphore.total());
        let nonce = nonce();
        let reply_cap = limits.max_stdout.saturating_mul(8) + (1 << 20);
        let request = ShimRequest {
            mode: "batch",
            source,
            function: function_name,
            args: &[],
            arity: 0,
            max_stdout: limits.max_stdout,
            nonce: &nonce,
            batch: Some(BatchSpec {
                vectors: vectors.iter().map(|v| v.values.as_slice()).collect(),
                timeout: limits.wall_timeout.as_secs_f64(),
                parallel,
                reply_cap,
            }),
        };
        // Backstop only; the shim enforces the per-call timeout itself.
        let rounds = vectors.len().div_ceil(parallel) as u32;
        let deadline = (limits.wall_timeout + Duration::from_millis(500)) * rounds + Duration::from_secs(5);
        let raw = self.spawn_with(&request, limits, deadline, parallel)?;
        let Some(reply) = Self::parse_reply(&raw, &nonce) else {
            return Ok(None);
        };
        if let Some(Outcome::HarnessFailure(e)) = reply.outcome {
            return Err(SandboxError::HarnessFailure(e));
        }
        match reply.batch {
            Some(items) if items.len() == vectors.len() => Ok(Some(
                items
                    .into_iter()
                    .map(|i| CallReport {
                        outcome: i.outcome,
                        stdout: i.stdout,
                        stdout_truncated: i.stdout_truncated,
                        elapsed: Duration::from_secs_f64(i.elapsed.max(0.0)),
                    })
                    .collect(),
            )),
            _ => Ok(None),
        }
    }

    /// Checks that `function_name` accepts `arity` positional arguments.
    /// Sources that fail before the function exists report `Ok`; the call
    /// itself then surfaces the error.
    pub fn probe_signature(&self, source: &str, function_name: &str, arity: usize) -> Result<SignatureCheck, SandboxError> {
        self.probe_signature_with(source, function_name, arity, &ExecutionLimits::default())
    }

    pub fn probe_signature_with(
        &self,
        source: &str,
        function_name: &str,
        arity: usize,
        limits: &ExecutionLimits,
    ) -> Result<SignatureCheck, SandboxError> {
        let nonce = nonce();
        let request = ShimRequest {
            mode: "probe",
            source,
            function: function_name,
            args: &[],
            arity,
            max_stdout: limits.max_stdout,
            nonce: &nonce,
            batch: None,
        };
        let raw = self.spawn(&request, limits)?;
        match Self::parse_reply(&raw, &nonce) {
            Some(ShimReply { probe: Some(p), detail, .. }) if p == "mismatch" => Ok(SignatureCheck::Mismatch(detail)),
            Some(ShimReply { outcome: Some(Outcome::HarnessFailure(e)), .. }) => Err(SandboxError::HarnessFailure(e)),
            _ => Ok(SignatureCheck::Ok),
        }
    }
}

fn is_cpu_limit(status: &ExitStatus) -> bool {
    use std::os::unix::process::ExitStatusExt;
    matches!(status.signal(), Some(libc::SIGXCPU) | Some(libc::SIGKILL))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(items: &[&str]) -> Vec<ArgumentTuple> {
        items.iter().map(|s| s.parse().unwrap()).collect()
    }

    fn fast() -> ExecutionLimits {
        ExecutionLimits { wall_timeout: Duration::from_secs(1), ..Default::default() }
    }

    #[test]
    fn identity_preserves_order_and_types() {
        let sb = Sandbox::default();
        let out = sb
            .run_candidate("def foo(x):\n    return x", "foo", &vecs(&["(1,)", "('a',)", "([1.5, None, True],)"]), &fast())
            .unwrap();
        assert_eq!(
            out,
            vec![
                Outcome::Returned(Value::Int(1)),
                Outcome::Returned("a".into()),
                Outcome::Returned(Value::List(vec![Value::Float(1.5), Value::None, Value::Bool(true)])),
            ]
        );
    }

    #[test]
    fn print_is_not_a_return_value() {
        let sb = Sandbox::default();
        let reports = sb.run_reports("def foo(s):\n    print(s[::-1])", "foo", &vecs(&["('ab',)"]), &fast()).unwrap();
        assert_eq!(reports[0].outcome, Outcome::Returned(Value::None));
        assert_eq!(reports[0].stdout, "ba\n");
    }

    #[test]
    fn stdout_truncated_at_cap() {
        let sb = Sandbox::default();
        let limits = ExecutionLimits { max_stdout: 10, ..fast() };
        let r = sb.run_reports("def foo():\n    print('x' * 1000)\n    return 1", "foo", &vecs(&["()"]), &limits).unwrap();
        assert_eq!(r[0].stdout.len(), 10);
        assert!(r[0].stdout_truncated);
        assert_eq!(r[0].outcome, Outcome::Returned(Value::Int(1)));
    }

    #[test]
    fn nonterminating_candidate_times_out() {
        let sb = Sandbox::default();
        let limits = ExecutionLimits { wall_timeout: Duration::from_millis(700), ..Default::default() };
        let r = sb.run_reports("def foo(x):\n    while True: pass", "foo", &vecs(&["(1,)"]), &limits).unwrap();
        assert_eq!(r[0].outcome, Outcome::TimedOut);
        assert!(r[0].elapsed <= limits.wall_timeout + Duration::from_millis(500), "{:?}", r[0].elapsed);
    }

    #[test]
    fn batch_times_out_only_the_looping_vectors() {
        let sb = Sandbox::default();
        let limits = ExecutionLimits { wall_timeout: Duration::from_millis(700), ..Default::default() };
        let src = "def foo(x):\n    while x == 0:\n        pass\n    return x";
        let out = sb.run_candidate(src, "foo", &vecs(&["(0,)", "(1,)", "(2,)", "(0,)", "(3,)"]), &limits).unwrap();
        let want = [Outcome::TimedOut, Outcome::Returned(Value::Int(1)), Outcome::Returned(Value::Int(2)), Outcome::TimedOut, Outcome::Returned(Value::Int(3))];
        assert_eq!(out, want);
    }

    #[test]
    fn candidate_cannot_forge_replies() {
        let src = "import os\ndef foo(x):\n    os.write(1, b'{\"nonce\": \"\", \"batch\": []}\\n')\n    os.close(3)\n    return x";
        let out = Sandbox::default().run_candidate(src, "foo", &vecs(&["(1,)", "(2,)"]), &fast()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|o| !matches!(o, Outcome::HarnessFailure(_))), "{out:?}");
    }

    #[test]
    fn raised_errors_carry_text() {
        let sb = Sandbox::default();
        let out = sb.run_candidate("def foo(x):\n    return 1 // x", "foo", &vecs(&["(0,)"]), &fast()).unwrap();
        match &out[0] {
            Outcome::Raised(e) => assert!(e.contains("ZeroDivisionError"), "{e}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn memory_cap_enforced() {
        let sb = Sandbox::default();
        let limits = ExecutionLimits { memory_cap: 128 << 20, ..fast() };
        let out = sb.run_candidate("def foo():\n    return len([0] * (10 ** 9))", "foo", &vecs(&["()"]), &limits).unwrap();
        assert_eq!(out[0], Outcome::MemoryExceeded);
    }

    #[test]
    fn unencodable_and_big_returns() {
        let sb = Sandbox::default();
        let out = sb
            .run_candidate("def foo(k):\n    return [{1: 2}, 2 ** 80, (1, 2), float('inf')][k]", "foo", &vecs(&["(0,)", "(1,)", "(2,)", "(3,)"]), &fast())
            .unwrap();
        assert!(matches!(&out[0], Outcome::Raised(e) if e.starts_with("unencodable return type")));
        assert!(matches!(&out[1], Outcome::Raised(e) if e.starts_with("unencodable return type")));
        assert_eq!(out[2], Outcome::Returned(vec![1i64, 2].into()));
        assert_eq!(out[3], Outcome::Returned(Value::Float(f64::INFINITY)));
    }

    #[test]
    fn state_does_not_leak_between_vectors() {
        let src = "calls = []\ndef foo(x):\n    calls.append(x)\n    return len(calls)";
        let out = Sandbox::default().run_candidate(src, "foo", &vecs(&["(1,)", "(2,)", "(3,)"]), &fast()).unwrap();
        assert!(out.iter().all(|o| *o == Outcome::Returned(Value::Int(1))));
    }

    #[test]
    fn allowed_imports_work_and_others_are_denied() {
        let sb = Sandbox::default();
        let ok = sb.run_candidate("import math\ndef foo(x):\n    return math.isqrt(x)", "foo", &vecs(&["(17,)"]), &fast()).unwrap();
        assert_eq!(ok[0], Outcome::Returned(Value::Int(4)));
        let denied = sb.run_candidate("import socket\ndef foo():\n    return 1", "foo", &vecs(&["()"]), &fast()).unwrap();
        assert!(matches!(&denied[0], Outcome::Raised(e) if e.contains("denied")), "{denied:?}");
    }

    #[test]
    fn missing_function_is_raised() {
        let out = Sandbox::default().run_candidate("def bar():\n    return 1", "foo", &vecs(&["()"]), &fast()).unwrap();
        assert!(matches!(&out[0], Outcome::Raised(e) if e.contains("NameError")));
    }

    #[test]
    fn missing_runtime_is_harness_failure() {
        let sb = Sandbox::new("/nonexistent/python3");
        let err = sb.run_candidate("def foo():\n    return 1", "foo", &vecs(&["()"]), &fast()).unwrap_err();
        assert!(matches!(err, SandboxError::HarnessFailure(_)));
    }

    #[test]
    fn empty_inputs_rejected() {
        let sb = Sandbox::default();
        assert!(matches!(sb.run_candidate("", "foo", &vecs(&["()"]), &fast()), Err(SandboxError::EmptyInput(_))));
        assert!(matches!(sb.run_candidate("def foo(): pass", "foo", &[], &fast()), Err(SandboxError::EmptyInput(_))));
        let zero = ExecutionLimits { max_stdout: 0, ..fast() };
        assert_eq!(sb.run_candidate("def foo(): pass", "foo", &vecs(&["()"]), &zero), Err(SandboxError::InvalidLimits));
    }

    #[test]
    fn signature_probe() {
        let sb = Sandbox::default();
        assert_eq!(sb.probe_signature("def foo(a, b):\n    return a", "foo", 2).unwrap(), SignatureCheck::Ok);
        assert!(matches!(sb.probe_signature("def foo(a):\n    return a", "foo", 2).unwrap(), SignatureCheck::Mismatch(_)));
        assert_eq!(sb.probe_signature("def foo(*args):\n    return args", "foo", 3).unwrap(), SignatureCheck::Ok);
        assert_eq!(sb.probe_signature("def foo(a, b=1):\n    return a", "foo", 1).unwrap(), SignatureCheck::Ok);
        assert!(matches!(sb.probe_signature("def foo():\n    return 1", "foo", 1).unwrap(), SignatureCheck::Mismatch(_)));
    }

    #[test]
    fn varargs_probe_agrees_with_a_real_call() {
        let sb = Sandbox::default();
        let out = sb.run_candidate("def foo(*args):\n    return len(args)", "foo", &vecs(&["(1, 2, 3)"]), &fast()).unwrap();
        assert_eq!(out[0], Outcome::Returned(Value::Int(3)));
    }

    #[test]
    fn semaphore_caps_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(20));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
