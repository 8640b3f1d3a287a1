//! Shared domain types: questions, verdicts, attempts and the attempt policy.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::value::{LiteralError, LiteralParser, Value};

/// Positional arguments for one call of the function under test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArgumentTuple {
    pub values: Vec<Value>,
}

impl ArgumentTuple {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }

    /// True if any argument is an empty string, empty list or zero.
    pub fn is_edge_case(&self) -> bool {
        self.values.iter().any(|v| match v {
            Value::Text(s) => s.is_empty(),
            Value::List(items) => items.is_empty(),
            Value::Int(0) => true,
            _ => false,
        })
    }
}

impl fmt::Display for ArgumentTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.values.len() == 1 {
            f.write_str(",")?;
        }
        f.write_str(")")
    }
}

impl FromStr for ArgumentTuple {
    type Err = LiteralError;

    /// Accepts `(a, b)` or `[a, b]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = LiteralParser::new(s);
        let values = if p.eat('(') {
            p.sequence(')', 0)?
        } else {
            p.expect('[')?;
            p.sequence(']', 0)?
        };
        p.finish()?;
        Ok(Self { values })
    }
}

impl Serialize for ArgumentTuple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArgumentTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentLanguage {
    C,
    Python,
}

/// Which language the student is asked to respond in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstructionMode {
    English,
    MotherTongue,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub title: String,
    pub segment_language: SegmentLanguage,
    pub displayed_code: String,
    pub reference_source: String,
    pub test_vectors: Vec<ArgumentTuple>,
    pub instruction_language_mode: InstructionMode,
}

impl Question {
    /// Arity of the first vector; `validate_question` checks the rest agree.
    pub fn arity(&self) -> usize {
        self.test_vectors.first().map_or(0, ArgumentTuple::arity)
    }
}

/// Static checks on a single question. Violations are returned as data.
pub fn validate_question(q: &Question) -> Vec<String> {
    let mut out = Vec::new();
    if q.id.trim().is_empty() {
        out.push("id empty".to_owned());
    }
    if q.reference_source.trim().is_empty() {
        out.push("reference_source empty".to_owned());
    }
    if q.test_vectors.is_empty() {
        out.push("test_vectors empty".to_owned());
        return out;
    }
    let arity = q.arity();
    if q.test_vectors.iter().any(|v| v.arity() != arity) {
        out.push("inconsistent arity".to_owned());
    }
    let permits_edge = q.test_vectors.iter().any(|t| {
        t.values.iter().any(|v| matches!(v, Value::Text(_) | Value::List(_) | Value::Int(_)))
    });
    if permits_edge && !q.test_vectors.iter().any(ArgumentTuple::is_edge_case) {
        out.push("no edge-case vector".to_owned());
    }
    out
}

/// Bank-level checks: per-question violations prefixed by id, plus duplicate ids.
pub fn validate_bank<'a>(questions: impl IntoIterator<Item = &'a Question>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for q in questions {
        if !seen.insert(q.id.as_str()) {
            out.push(format!("{}: duplicate id", q.id));
        }
        out.extend(validate_question(q).into_iter().map(|v| format!("{}: {v}", q.id)));
    }
    out
}

/// Result of one call in the sandbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Returned(Value),
    Raised(String),
    TimedOut,
    MemoryExceeded,
    HarnessFailure(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Returned(v) => write!(f, "{v}"),
            Outcome::Raised(e) => write!(f, "raised {e}"),
            Outcome::TimedOut => f.write_str("timed out"),
            Outcome::MemoryExceeded => f.write_str("memory limit exceeded"),
            Outcome::HarnessFailure(e) => write!(f, "harness failure: {e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Correct,
    Incorrect,
    GenerationError,
    ExtractionError,
    RuntimeError,
    Timeout,
    SignatureMismatch,
    AttemptsExhausted,
}

impl VerdictKind {
    /// Ordering used when picking a "best" verdict for progress views.
    pub fn rank(self) -> u8 {
        match self {
            VerdictKind::Correct => 3,
            VerdictKind::Incorrect => 2,
            VerdictKind::AttemptsExhausted => 0,
            _ => 1,
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// `failed_vector_index` is set exactly when `kind` is `Incorrect`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct Verdict {
    pub kind: VerdictKind,
    pub failed_vector_index: Option<usize>,
    pub detail: String,
}

#[derive(Deserialize)]
struct RawVerdict {
    kind: VerdictKind,
    failed_vector_index: Option<usize>,
    detail: String,
}

impl TryFrom<RawVerdict> for Verdict {
    type Error = String;

    fn try_from(raw: RawVerdict) -> Result<Self, String> {
        if (raw.kind == VerdictKind::Incorrect) != raw.failed_vector_index.is_some() {
            return Err("failed_vector_index must be present iff kind is Incorrect".into());
        }
        Ok(Verdict { kind: raw.kind, failed_vector_index: raw.failed_vector_index, detail: raw.detail })
    }
}

impl Verdict {
    pub fn correct() -> Self {
        Self { kind: VerdictKind::Correct, failed_vector_index: None, detail: "all tests passed".into() }
    }

    pub fn incorrect(index: usize, detail: impl Into<String>) -> Self {
        Self { kind: VerdictKind::Incorrect, failed_vector_index: Some(index), detail: detail.into() }
    }

    /// Any non-Incorrect kind. Panics on `Incorrect`, which needs an index.
    pub fn other(kind: VerdictKind, detail: impl Into<String>) -> Self {
        assert_ne!(kind, VerdictKind::Incorrect, "use Verdict::incorrect");
        Self { kind, failed_vector_index: None, detail: detail.into() }
    }

    pub fn is_correct(&self) -> bool {
        self.kind == VerdictKind::Correct
    }
}

/// One graded test vector, as shown to the student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub expected: Value,
    pub actual: Outcome,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeAttempt {
    pub attempt_number: u32,
    pub question_id: String,
    pub response_text: String,
    pub declared_language: Option<String>,
    pub assembled_prompt: String,
    pub raw_completion: String,
    pub extracted_code: Option<String>,
    pub per_test: Vec<TestResult>,
    pub verdict: Verdict,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("attempt_cap must be at least 1")]
pub struct InvalidPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct AttemptPolicy {
    attempt_cap: u32,
    allow_after_correct: bool,
}

#[derive(Deserialize)]
struct RawPolicy {
    #[serde(default = "default_cap")]
    attempt_cap: u32,
    #[serde(default = "default_true")]
    allow_after_correct: bool,
}

fn default_cap() -> u32 {
    20
}

fn default_true() -> bool {
    true
}

impl TryFrom<RawPolicy> for AttemptPolicy {
    type Error = InvalidPolicy;

    fn try_from(raw: RawPolicy) -> Result<Self, InvalidPolicy> {
        AttemptPolicy::new(raw.attempt_cap, raw.allow_after_correct)
    }
}

impl AttemptPolicy {
    pub fn new(attempt_cap: u32, allow_after_correct: bool) -> Result<Self, InvalidPolicy> {
        if attempt_cap == 0 {
            return Err(InvalidPolicy);
        }
        Ok(Self { attempt_cap, allow_after_correct })
    }

    pub fn attempt_cap(&self) -> u32 {
        self.attempt_cap
    }

    pub fn allow_after_correct(&self) -> bool {
        self.allow_after_correct
    }
}

impl Default for AttemptPolicy {
    fn default() -> Self {
        Self { attempt_cap: default_cap(), allow_after_correct: true }
    }
}
