//! Submission pipeline and per-session attempt accounting.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::QuestionBank;
use crate::equivalence::{Judge, JudgeError, FUNCTION_NAME};
use crate::journal::{Journal, JournalError};
use crate::llm::{CompletionBackend, CompletionRequest, CompletionResult, GatewayError};
use crate::model::{AttemptPolicy, GradeAttempt, Question, TestResult, Verdict, VerdictKind};
use crate::prompt::{build_prompt, extract_code, PromptError, PromptTemplate};
use crate::sandbox::{ExecutionLimits, SignatureCheck};

pub const DEFAULT_LANGUAGE: &str = "English";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradeError {
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("response text is empty")]
    EmptyResponse,
    #[error("question already answered correctly")]
    AlreadyCorrect,
    #[error("completion backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("internal grading error: {0}")]
    Internal(String),
}

impl From<JournalError> for GradeError {
    fn from(e: JournalError) -> Self {
        GradeError::Storage(e.to_string())
    }
}

/// Settings shared by interactive grading and batch evaluation.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub template: PromptTemplate,
    pub limits: ExecutionLimits,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let req = CompletionRequest::new("-");
        Self {
            template: PromptTemplate::default(),
            limits: ExecutionLimits::default(),
            model_name: req.model_name,
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
            request_timeout: req.timeout,
        }
    }
}

/// Everything after the completion: extraction, signature probe, judging.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub extracted_code: Option<String>,
    pub per_test: Vec<TestResult>,
    pub verdict: Verdict,
}

/// prompt -> completion -> extraction -> signature probe -> judge.
pub struct Pipeline {
    backend: Arc<dyn CompletionBackend>,
    judge: Arc<Judge>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(backend: Arc<dyn CompletionBackend>, judge: Arc<Judge>, config: PipelineConfig) -> Self {
        Self { backend, judge, config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    pub fn prompt(&self, language_name: &str, response_text: &str) -> Result<String, PromptError> {
        build_prompt(&self.config.template, language_name, response_text)
    }

    pub fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            model_name: self.config.model_name.clone(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
            timeout: self.config.request_timeout,
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<CompletionResult, GatewayError> {
        self.backend.complete(&self.request(prompt.to_owned()))
    }

    pub fn evaluate(&self, q: &Question, raw_completion: &str) -> Result<Evaluation, JudgeError> {
        let code = match extract_code(raw_completion) {
            Ok(code) => code,
            Err(e) => {
                return Ok(Evaluation {
                    extracted_code: None,
                    per_test: Vec::new(),
                    verdict: Verdict::other(VerdictKind::ExtractionError, e.to_string()),
                })
            }
        };
        let probe = self.judge.sandbox().probe_signature_with(&code, FUNCTION_NAME, q.arity(), &self.config.limits)?;
        if let SignatureCheck::Mismatch(detail) = probe {
            return Ok(Evaluation {
                extracted_code: Some(code),
                per_test: Vec::new(),
                verdict: Verdict::other(
                    VerdictKind::SignatureMismatch,
                    format!("generated function does not accept {} argument(s): {detail}", q.arity()),
                ),
            });
        }
        let judged = self.judge.judge(&code, q, &self.config.limits)?;
        Ok(Evaluation { extracted_code: Some(code), per_test: judged.per_test, verdict: judged.verdict })
    }
}

/// Gateway failures that are the infrastructure's fault, not the student's.
pub fn is_transient(e: &GatewayError) -> bool {
    matches!(e, GatewayError::BackendUnavailable(_) | GatewayError::StorageFailure(_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum JournalRecord {
    SessionCreated { session_id: String, policy: AttemptPolicy, created_at: DateTime<Utc> },
    Attempt { session_id: String, attempt: Box<GradeAttempt> },
}

/// A session's attempt counters. Counters only grow and never pass the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub policy: AttemptPolicy,
    counters: HashMap<String, u32>,
    best: HashMap<String, VerdictKind>,
}

impl Session {
    fn new(session_id: String, policy: AttemptPolicy) -> Self {
        Self { session_id, policy, counters: HashMap::new(), best: HashMap::new() }
    }

    pub fn attempts_used(&self, question_id: &str) -> u32 {
        self.counters.get(question_id).copied().unwrap_or(0)
    }

    pub fn attempts_remaining(&self, question_id: &str) -> u32 {
        self.policy.attempt_cap().saturating_sub(self.attempts_used(question_id))
    }

    fn apply(&mut self, attempt: &GradeAttempt) {
        let used = self.counters.entry(attempt.question_id.clone()).or_insert(0);
        *used = (*used).max(attempt.attempt_number);
        let kind = attempt.verdict.kind;
        self.best
            .entry(attempt.question_id.clone())
            .and_modify(|b| {
                if kind.rank() > b.rank() {
                    *b = kind;
                }
            })
            .or_insert(kind);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionProgress {
    pub attempts_used: u32,
    pub best_verdict: Option<VerdictKind>,
}

pub struct Grader {
    bank: Arc<QuestionBank>,
    pipeline: Pipeline,
    default_policy: AttemptPolicy,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    journal: Journal<JournalRecord>,
}

impl Grader {
    /// Opens the attempt journal and replays it into session state.
    pub fn open(
        bank: Arc<QuestionBank>,
        pipeline: Pipeline,
        default_policy: AttemptPolicy,
        journal_path: &Path,
    ) -> Result<Self, GradeError> {
        let (journal, records) = Journal::open(journal_path)?;
        let mut sessions: HashMap<String, Session> = HashMap::new();
        for rec in records {
            match rec {
                JournalRecord::SessionCreated { session_id, policy, .. } => {
                    sessions.insert(session_id.clone(), Session::new(session_id, policy));
                }
                JournalRecord::Attempt { session_id, attempt } => match sessions.get_mut(&session_id) {
                    Some(s) => s.apply(&attempt),
                    None => tracing::warn!(%session_id, "attempt for unknown session in journal"),
                },
            }
        }
        let sessions = sessions.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect();
        Ok(Self { bank, pipeline, default_policy, sessions: Mutex::new(sessions), journal })
    }

    pub fn bank(&self) -> &Arc<QuestionBank> {
        &self.bank
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn create_session(&self, policy: Option<AttemptPolicy>) -> Result<String, GradeError> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let policy = policy.unwrap_or(self.default_policy);
        self.journal.append(&JournalRecord::SessionCreated {
            session_id: session_id.clone(),
            policy,
            created_at: Utc::now(),
        })?;
        self.sessions
            .lock()
            .unwrap()
            .insert(session_id.clone(), Arc::new(Mutex::new(Session::new(session_id.clone(), policy))));
        Ok(session_id)
    }

    fn session(&self, session_id: &str) -> Result<Arc<Mutex<Session>>, GradeError> {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| GradeError::UnknownSession(session_id.to_owned()))
    }

    pub fn session_snapshot(&self, session_id: &str) -> Result<Session, GradeError> {
        Ok(self.session(session_id)?.lock().unwrap().clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Grades one submission. Submissions within a session are serialized.
    pub fn submit(
        &self,
        session_id: &str,
        question_id: &str,
        response_text: &str,
        declared_language: Option<&str>,
    ) -> Result<GradeAttempt, GradeError> {
        let question = self.bank.get(question_id).cloned().ok_or_else(|| GradeError::UnknownQuestion(question_id.to_owned()))?;
        let session = self.session(session_id)?;
        if response_text.trim().is_empty() {
            return Err(GradeError::EmptyResponse);
        }
        let declared_language = declared_language.map(str::trim).filter(|l| !l.is_empty());
        let language = declared_language.unwrap_or(DEFAULT_LANGUAGE);
        let prompt = self.pipeline.prompt(language, response_text).map_err(|e| match e {
            PromptError::EmptyResponse => GradeError::EmptyResponse,
            other => GradeError::Internal(other.to_string()),
        })?;

        let mut session = session.lock().unwrap();
        let used = session.attempts_used(question_id);
        let mut attempt = GradeAttempt {
            attempt_number: used,
            question_id: question_id.to_owned(),
            response_text: response_text.to_owned(),
            declared_language: declared_language.map(str::to_owned),
            assembled_prompt: prompt,
            raw_completion: String::new(),
            extracted_code: None,
            per_test: Vec::new(),
            verdict: Verdict::other(VerdictKind::AttemptsExhausted, format!("all {used} attempts used")),
            timestamp: Utc::now(),
        };
        if used >= session.policy.attempt_cap() {
            return Ok(attempt);
        }
        if !session.policy.allow_after_correct() && session.best.get(question_id) == Some(&VerdictKind::Correct) {
            return Err(GradeError::AlreadyCorrect);
        }

        match self.pipeline.complete(&attempt.assembled_prompt) {
            Ok(result) => {
                attempt.raw_completion = result.text;
                let eval = self.pipeline.evaluate(&question, &attempt.raw_completion).map_err(|e| GradeError::Internal(e.to_string()))?;
                attempt.extracted_code = eval.extracted_code;
                attempt.per_test = eval.per_test;
                attempt.verdict = eval.verdict;
            }
            Err(e) if is_transient(&e) => return Err(GradeError::BackendUnavailable(e.to_string())),
            Err(e) => attempt.verdict = Verdict::other(VerdictKind::GenerationError, e.to_string()),
        }
        attempt.attempt_number = used + 1;
        attempt.timestamp = Utc::now();
        self.journal.append(&JournalRecord::Attempt { session_id: session_id.to_owned(), attempt: Box::new(attempt.clone()) })?;
        session.apply(&attempt);
        Ok(attempt)
    }

    /// Attempts used and best verdict for every question in the bank.
    pub fn progress(&self, session_id: &str) -> Result<BTreeMap<String, QuestionProgress>, GradeError> {
        let session = self.session(session_id)?;
        let session = session.lock().unwrap();
        Ok(self
            .bank
            .questions()
            .iter()
            .map(|q| {
                let p = QuestionProgress {
                    attempts_used: session.attempts_used(&q.id),
                    best_verdict: session.best.get(&q.id).copied(),
                };
                (q.id.clone(), p)
            })
            .collect())
    }
}
