//! Functional equivalence of a candidate against a question's reference,
//! decided over the question's fixed test vectors.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ArgumentTuple, Outcome, Question, TestResult, Verdict, VerdictKind};
use crate::sandbox::{ExecutionLimits, Sandbox, SandboxError};
use crate::value::Value;

pub const DEFAULT_FLOAT_TOL: f64 = 1e-9;
pub const FUNCTION_NAME: &str = "foo";

/// Structural equality with a relative float tolerance. Integers and floats
/// compare numerically; booleans only equal booleans.
pub fn value_equal(a: &Value, b: &Value, float_tol: f64) -> bool {
    match (a, b) {
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(x), Value::Float(y)) | (Value::Float(y), Value::Int(x)) => floats_close(*x as f64, *y, float_tol),
        (Value::Float(x), Value::Float(y)) => floats_close(*x, *y, float_tol),
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::None, Value::None) => true,
        (Value::List(xs), Value::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| value_equal(x, y, float_tol))
        }
        _ => false,
    }
}

fn floats_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a.is_infinite() || b.is_infinite() {
        return false;
    }
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("harness failure: {0}")]
    Harness(String),
    #[error("reference for {question} failed on vector {index}: {outcome}")]
    ReferenceFailed { question: String, index: usize, outcome: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub verdict: Verdict,
    pub per_test: Vec<TestResult>,
}

type CacheKey = [u8; 32];
type CacheSlot = Arc<Mutex<Option<Arc<Vec<Value>>>>>;

fn cache_key(q: &Question) -> CacheKey {
    let mut h = Sha256::new();
    h.update(q.id.as_bytes());
    h.update([0]);
    h.update(q.reference_source.as_bytes());
    for v in &q.test_vectors {
        h.update([0]);
        h.update(v.to_string().as_bytes());
    }
    h.finalize().into()
}

/// Runs candidates against cached reference outputs.
#[derive(Debug)]
pub struct Judge {
    sandbox: Sandbox,
    float_tol: f64,
    cache: Mutex<HashMap<CacheKey, CacheSlot>>,
}

impl Judge {
    pub fn new(sandbox: Sandbox) -> Self {
        Self { sandbox, float_tol: DEFAULT_FLOAT_TOL, cache: Mutex::default() }
    }

    pub fn with_float_tol(mut self, tol: f64) -> Self {
        self.float_tol = tol;
        self
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    /// Reference return values for every vector, computed once per question.
    pub fn reference_values(&self, q: &Question, limits: &ExecutionLimits) -> Result<Arc<Vec<Value>>, JudgeError> {
        let slot = self.cache.lock().unwrap().entry(cache_key(q)).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(values) = guard.as_ref() {
            return Ok(values.clone());
        }
        let outcomes = self.sandbox.run_candidate(&q.reference_source, FUNCTION_NAME, &q.test_vectors, limits)?;
        let mut values = Vec::with_capacity(outcomes.len());
        for (index, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Outcome::Returned(v) => values.push(v),
                other => {
                    return Err(JudgeError::ReferenceFailed { question: q.id.clone(), index, outcome: other.to_string() })
                }
            }
        }
        let values = Arc::new(values);
        *guard = Some(values.clone());
        Ok(values)
    }

    pub fn judge(&self, candidate_source: &str, q: &Question, limits: &ExecutionLimits) -> Result<Judgement, JudgeError> {
        let expected = self.reference_values(q, limits)?;
        let actual = self.sandbox.run_candidate(candidate_source, FUNCTION_NAME, &q.test_vectors, limits)?;
        self.compare(&expected, actual)
    }

    /// Builds per-test results and the verdict from the first failing vector.
    pub fn compare(&self, expected: &[Value], actual: Vec<Outcome>) -> Result<Judgement, JudgeError> {
        let mut per_test = Vec::with_capacity(actual.len());
        let mut verdict = None;
        for (i, (exp, act)) in expected.iter().zip(actual).enumerate() {
            if let Outcome::HarnessFailure(e) = &act {
                return Err(JudgeError::Harness(e.clone()));
            }
            let passed = matches!(&act, Outcome::Returned(v) if value_equal(v, exp, self.float_tol));
            if !passed && verdict.is_none() {
                verdict = Some(failure_verdict(i, exp, &act));
            }
            per_test.push(TestResult { expected: exp.clone(), actual: act, passed });
        }
        Ok(Judgement { verdict: verdict.unwrap_or_else(Verdict::correct), per_test })
    }
}

fn failure_verdict(index: usize, expected: &Value, actual: &Outcome) -> Verdict {
    let n = index + 1;
    match actual {
        Outcome::Returned(v) => Verdict::incorrect(index, format!("test {n}: expected {expected}, got {v}")),
        Outcome::Raised(e) => Verdict::other(VerdictKind::RuntimeError, format!("test {n}: {e}")),
        Outcome::TimedOut => Verdict::other(VerdictKind::Timeout, format!("test {n}: time limit exceeded")),
        Outcome::MemoryExceeded => Verdict::other(VerdictKind::RuntimeError, format!("test {n}: memory limit exceeded")),
        Outcome::HarnessFailure(e) => unreachable!("handled by caller: {e}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub candidate: usize,
    pub vector: usize,
    pub judge_passed: bool,
    pub oracle_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgreementReport {
    pub vectors: usize,
    pub candidates: usize,
    pub comparisons: usize,
    /// Vectors where the reference itself differs from the oracle.
    pub reference_mismatches: Vec<usize>,
    pub disagreements: Vec<Disagreement>,
}

impl AgreementReport {
    pub fn agreement(&self) -> f64 {
        if self.comparisons == 0 {
            return 1.0;
        }
        1.0 - self.disagreements.len() as f64 / self.comparisons as f64
    }

    pub fn is_total(&self) -> bool {
        self.disagreements.is_empty() && self.reference_mismatches.is_empty()
    }
}

/// Compares the judge's per-vector decisions with an independent oracle over
/// an enumerated input domain, for each candidate source.
///
/// The judge side checks candidate output against the Python reference with
/// `value_equal`; the oracle side checks it against `oracle(args)` with plain
/// structural equality.
pub fn oracle_check(
    judge: &Judge,
    q: &Question,
    domain: Vec<ArgumentTuple>,
    candidates: &[&str],
    oracle: impl Fn(&ArgumentTuple) -> Value,
    limits: &ExecutionLimits,
) -> Result<AgreementReport, JudgeError> {
    let mut q = q.clone();
    q.test_vectors = domain;
    let expected = judge.reference_values(&q, limits)?;
    let oracle_values: Vec<Value> = q.test_vectors.iter().map(&oracle).collect();

    let mut report = AgreementReport { vectors: q.test_vectors.len(), candidates: candidates.len(), ..Default::default() };
    report.reference_mismatches = expected
        .iter()
        .zip(&oracle_values)
        .enumerate()
        .filter(|(_, (r, o))| r != o)
        .map(|(i, _)| i)
        .collect();

    for (ci, source) in candidates.iter().enumerate() {
        let outcomes = judge.sandbox().run_candidate(source, FUNCTION_NAME, &q.test_vectors, limits)?;
        let judged = judge.compare(&expected, outcomes)?;
        for (vi, (test, want)) in judged.per_test.iter().zip(&oracle_values).enumerate() {
            let oracle_passed = matches!(&test.actual, Outcome::Returned(v) if v == want);
            report.comparisons += 1;
            if oracle_passed != test.passed {
                report.disagreements.push(Disagreement { candidate: ci, vector: vi, judge_passed: test.passed, oracle_passed });
            }
        }
    }
    Ok(report)
}
