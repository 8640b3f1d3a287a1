//! Batch evaluation of translated responses and the per-language
//! correctness matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bank::QuestionBank;
use crate::grader::{is_transient, Pipeline};
use crate::journal::{Journal, JournalError};
use crate::model::{Verdict, VerdictKind};
use crate::sandbox::DEFAULT_CONCURRENCY;

/// Languages accepted in translation datasets, in report column order.
pub const LANGUAGES: [&str; 10] =
    ["Gujarati", "Hindi", "Punjabi", "Marathi", "Bengali", "Telugu", "Urdu", "Kannada", "Odia", "Tamil"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: unknown question {id:?}")]
    UnknownQuestion { row: usize, id: String },
    #[error("row {row}: unknown language {name:?}")]
    UnknownLanguage { row: usize, name: String },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("harness failure: {0}")]
    Harness(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub language: String,
    pub question_id: String,
    pub response_text: String,
    #[serde(default)]
    pub respondent_id: Option<String>,
}

impl DatasetRow {
    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.language, &self.question_id, &self.response_text] {
            h.update(part.len().to_le_bytes());
            h.update(part.as_bytes());
        }
        h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TranslationDataset {
    pub rows: Vec<DatasetRow>,
}

pub fn canonical_language(name: &str) -> Option<&'static str> {
    LANGUAGES.iter().copied().find(|l| l.eq_ignore_ascii_case(name.trim()))
}

/// Reads a CSV dataset with header `language,question_id,response_text[,respondent_id]`.
/// Rows are numbered from 1 (the first data row).
pub fn load_dataset(path: &Path, bank: &QuestionBank) -> Result<TranslationDataset, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::Io { path: path.to_owned(), message: e.to_string() })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<DatasetRow>().enumerate() {
        let row = i + 1;
        let mut rec = rec.map_err(|e| EvalError::Parse { row, message: e.to_string() })?;
        rec.language = canonical_language(&rec.language)
            .ok_or_else(|| EvalError::UnknownLanguage { row, name: rec.language.clone() })?
            .to_owned();
        if bank.get(&rec.question_id).is_none() {
            return Err(EvalError::UnknownQuestion { row, id: rec.question_id });
        }
        rec.respondent_id = rec.respondent_id.filter(|r| !r.trim().is_empty());
        rows.push(rec);
    }
    Ok(TranslationDataset { rows })
}

/// Records in the batch outcomes journal. A completion is persisted as soon
/// as it arrives so a resumed run never asks the backend twice for a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum BatchRecord {
    Completion { row: usize, fingerprint: String, raw_completion: String },
    Outcome(OutcomeRow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub row: usize,
    pub fingerprint: String,
    pub language: String,
    pub question_id: String,
    #[serde(default)]
    pub respondent_id: Option<String>,
    pub verdict: Verdict,
    #[serde(default)]
    pub extracted_code: Option<String>,
    /// Failed for an infrastructure reason; redone on resume.
    #[serde(default)]
    pub retriable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub workers: usize,
    /// Checked before each row; set to stop a run early.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchSummary {
    /// Final outcome per dataset row index (rows skipped by cancellation are absent).
    pub outcomes: BTreeMap<usize, OutcomeRow>,
    pub backend_calls: usize,
    pub reused_outcomes: usize,
    pub reused_completions: usize,
}

impl BatchSummary {
    pub fn rows(&self) -> Vec<OutcomeRow> {
        self.outcomes.values().cloned().collect()
    }
}

/// Grades every row through `pipeline`, appending to the journal at
/// `outcomes_path`. Rows with a stored outcome are not regraded; rows with a
/// stored completion are regraded without calling the backend.
pub fn run_batch(
    dataset: &TranslationDataset,
    bank: &QuestionBank,
    pipeline: &Pipeline,
    outcomes_path: &Path,
    options: &BatchOptions,
) -> Result<BatchSummary, EvalError> {
    let (journal, records) = Journal::<BatchRecord>::open(outcomes_path)?;
    let mut done: BTreeMap<usize, OutcomeRow> = BTreeMap::new();
    let mut completions: HashMap<usize, String> = HashMap::new();
    for rec in records {
        let (row, fp) = match &rec {
            BatchRecord::Completion { row, fingerprint, .. } => (*row, fingerprint),
            BatchRecord::Outcome(o) => (o.row, &o.fingerprint),
        };
        if dataset.rows.get(row).is_none_or(|r| &r.fingerprint() != fp) {
            continue;
        }
        match rec {
            BatchRecord::Completion { row, raw_completion, .. } => {
                completions.insert(row, raw_completion);
            }
            BatchRecord::Outcome(o) if !o.retriable => {
                done.insert(o.row, o);
            }
            BatchRecord::Outcome(_) => {}
        }
    }
    let reused_outcomes = done.len();
    let pending: Vec<usize> = (0..dataset.rows.len()).filter(|i| !done.contains_key(i)).collect();
    let reused_completions = pending.iter().filter(|i| completions.contains_key(i)).count();

    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let results = Mutex::new(done);
    let fatal: Mutex<Option<EvalError>> = Mutex::new(None);
    let workers = if options.workers == 0 { DEFAULT_CONCURRENCY } else { options.workers }.min(pending.len().max(1));
    let cancelled = || options.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancelled() || fatal.lock().unwrap().is_some() {
                    break;
                }
                let Some(&index) = pending.get(next.fetch_add(1, Ordering::SeqCst)) else {
                    break;
                };
                let stored = completions.get(&index).cloned();
                match grade_row(index, &dataset.rows[index], bank, pipeline, &journal, stored, &calls) {
                    Ok(outcome) => {
                        results.lock().unwrap().insert(index, outcome);
                    }
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    Ok(BatchSummary {
        outcomes: results.into_inner().unwrap(),
        backend_calls: calls.into_inner(),
        reused_outcomes,
        reused_completions,
    })
}

fn grade_row(
    index: usize,
    row: &DatasetRow,
    bank: &QuestionBank,
    pipeline: &Pipeline,
    journal: &Journal<BatchRecord>,
    stored_completion: Option<String>,
    calls: &AtomicUsize,
) -> Result<OutcomeRow, EvalError> {
    let fingerprint = row.fingerprint();
    let question = bank.get(&row.question_id).ok_or_else(|| EvalError::UnknownQuestion { row: index + 1, id: row.question_id.clone() })?;
    let mut outcome = OutcomeRow {
        row: index,
        fingerprint: fingerprint.clone(),
        language: row.language.clone(),
        question_id: row.question_id.clone(),
        respondent_id: row.respondent_id.clone(),
        verdict: Verdict::correct(),
        extracted_code: None,
        retriable: false,
    };

    let completion = match stored_completion {
        Some(text) => Ok(text),
        None => match pipeline.prompt(&row.language, &row.response_text) {
            Err(e) => Err((Verdict::other(VerdictKind::GenerationError, e.to_string()), false)),
            Ok(prompt) => {
                calls.fetch_add(1, Ordering::SeqCst);
                match pipeline.complete(&prompt) {
                    Ok(result) => {
                        journal.append(&BatchRecord::Completion {
                            row: index,
                            fingerprint: fingerprint.clone(),
                            raw_completion: result.text.clone(),
                        })?;
                        Ok(result.text)
                    }
                    Err(e) => Err((Verdict::other(VerdictKind::GenerationError, e.to_string()), is_transient(&e))),
                }
            }
        },
    };
    match completion {
        Ok(text) => {
            let eval = pipeline.evaluate(question, &text).map_err(|e| EvalError::Harness(e.to_string()))?;
            outcome.verdict = eval.verdict;
            outcome.extracted_code = eval.extracted_code;
        }
        Err((verdict, retriable)) => {
            outcome.verdict = verdict;
            outcome.retriable = retriable;
        }
    }
    journal.append(&BatchRecord::Outcome(outcome.clone()))?;
    Ok(outcome)
}

/// Reads the final outcomes from a batch journal (later records win).
pub fn load_outcomes(path: &Path) -> Result<Vec<OutcomeRow>, EvalError> {
    if !path.exists() {
        return Err(EvalError::Io { path: path.to_owned(), message: "no such file".into() });
    }
    let (_, records) = Journal::<BatchRecord>::open(path)?;
    let mut by_row: BTreeMap<usize, OutcomeRow> = BTreeMap::new();
    for rec in records {
        if let BatchRecord::Outcome(o) = rec {
            by_row.insert(o.row, o);
        }
    }
    Ok(by_row.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    Yellow,
    Green,
    LightBlue,
    Purple,
    Grey,
}

impl Bucket {
    pub fn css_class(self) -> &'static str {
        match self {
            Bucket::Purple => "purple",
            Bucket::LightBlue => "lightblue",
            Bucket::Green => "green",
            Bucket::Yellow => "yellow",
            Bucket::Grey => "grey",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Colour band of a pass rate: `[0,25)` yellow, `[25,50)` green, `[50,75)`
/// light blue, `[75,100]` purple, grey when there were no responses.
/// Computed in integers, so boundaries are exact.
pub fn bucket_of(passed: u64, total: u64) -> Bucket {
    debug_assert!(passed <= total);
    if total == 0 {
        return Bucket::Grey;
    }
    let scaled = passed * 100;
    if scaled < 25 * total {
        Bucket::Yellow
    } else if scaled < 50 * total {
        Bucket::Green
    } else if scaled < 75 * total {
        Bucket::LightBlue
    } else {
        Bucket::Purple
    }
}

fn round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Percentage text: `"100%"` for a full pass, `"N/A"` for no responses,
/// otherwise one decimal obtained by rounding to hundredths and then to
/// tenths, half-up.
pub fn format_rate(passed: u64, total: u64) -> String {
    if total == 0 {
        return "N/A".into();
    }
    if passed == total {
        return "100%".into();
    }
    let hundredths = round_half_up(passed as u128 * 10_000, total as u128);
    let tenths = round_half_up(hundredths, 10);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub passed: u64,
    pub total: u64,
}

impl Cell {
    pub fn bucket(&self) -> Bucket {
        bucket_of(self.passed, self.total)
    }

    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.passed as f64 / self.total as f64)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({})", self.passed, self.total, format_rate(self.passed, self.total))
    }
}

/// Row of the matrix: question id plus its display title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectnessMatrix {
    pub languages: Vec<String>,
    pub questions: Vec<MatrixRow>,
    cells: HashMap<(String, String), Cell>,
}

impl CorrectnessMatrix {
    pub fn cell(&self, language: &str, question_id: &str) -> Cell {
        self.cells.get(&(language.to_owned(), question_id.to_owned())).copied().unwrap_or_default()
    }

    pub fn total(&self, language: &str) -> Cell {
        self.questions.iter().fold(Cell::default(), |acc, q| {
            let c = self.cell(language, &q.id);
            Cell { passed: acc.passed + c.passed, total: acc.total + c.total }
        })
    }

    pub fn grand_total(&self) -> Cell {
        self.languages.iter().fold(Cell::default(), |acc, l| {
            let c = self.total(l);
            Cell { passed: acc.passed + c.passed, total: acc.total + c.total }
        })
    }
}

/// Counts Correct verdicts per (language, question). Every other verdict
/// kind counts as a failure. Languages and questions not listed are
/// appended in order of first appearance.
pub fn aggregate(outcomes: &[OutcomeRow], languages: &[String], questions: &[MatrixRow]) -> CorrectnessMatrix {
    let mut m = CorrectnessMatrix { languages: languages.to_vec(), questions: questions.to_vec(), cells: HashMap::new() };
    let mut seen_lang: HashSet<String> = languages.iter().cloned().collect();
    let mut seen_q: HashSet<String> = questions.iter().map(|q| q.id.clone()).collect();
    for o in outcomes {
        if seen_lang.insert(o.language.clone()) {
            m.languages.push(o.language.clone());
        }
        if seen_q.insert(o.question_id.clone()) {
            m.questions.push(MatrixRow { id: o.question_id.clone(), title: o.question_id.clone() });
        }
        let cell = m.cells.entry((o.language.clone(), o.question_id.clone())).or_default();
        cell.total += 1;
        if o.verdict.is_correct() {
            cell.passed += 1;
        }
    }
    m
}

/// Matrix axes for a bank: the ten dataset languages and the bank's questions.
pub fn default_axes(bank: &QuestionBank) -> (Vec<String>, Vec<MatrixRow>) {
    let languages = LANGUAGES.iter().map(|l| l.to_string()).collect();
    let questions = bank.questions().iter().map(|q| MatrixRow { id: q.id.clone(), title: q.title.clone() }).collect();
    (languages, questions)
}

pub const REPORT_CSV: &str = "correctness.csv";
pub const REPORT_HTML: &str = "correctness.html";
pub const TOTAL_ROW: &str = "TOTAL";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_csv(m: &CorrectnessMatrix) -> String {
    let mut out = String::from("language,question_id,passed,total,text,bucket\n");
    for lang in &m.languages {
        let rows = m.questions.iter().map(|q| (q.id.as_str(), m.cell(lang, &q.id)));
        for (qid, cell) in rows.chain(std::iter::once((TOTAL_ROW, m.total(lang)))) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(lang),
                csv_field(qid),
                cell.passed,
                cell.total,
                csv_field(&cell.to_string()),
                cell.bucket()
            );
        }
    }
    out
}

pub fn render_html(m: &CorrectnessMatrix) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Correctness by language</title>\n<style>\n\
         table { border-collapse: collapse; font-family: sans-serif; font-size: 14px; }\n\
         th, td { border: 1px solid #444; padding: 4px 8px; text-align: left; }\n\
         td.purple { background: #e6d5f2; }\n\
         td.lightblue { background: #d5e8f7; }\n\
         td.green { background: #d8f0d2; }\n\
         td.yellow { background: #fbf3c8; }\n\
         td.grey { background: #e0e0e0; }\n\
         </style>\n</head>\n<body>\n<table>\n<thead>\n<tr><th>QID</th>",
    );
    for lang in &m.languages {
        let _ = write!(out, "<th>{}</th>", html_escape(lang));
    }
    out.push_str("</tr>\n</thead>\n<tbody>\n");
    let cell_html = |out: &mut String, cell: Cell| {
        let _ = write!(out, "<td class=\"{}\">{}</td>", cell.bucket().css_class(), html_escape(&cell.to_string()));
    };
    for q in &m.questions {
        let _ = write!(out, "<tr><th>{}</th>", html_escape(&q.title));
        for lang in &m.languages {
            cell_html(&mut out, m.cell(lang, &q.id));
        }
        out.push_str("</tr>\n");
    }
    if !m.questions.is_empty() {
        out.push_str("<tr><th>Totals:</th>");
        for lang in &m.languages {
            cell_html(&mut out, m.total(lang));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</tbody>\n</table>\n</body>\n</html>\n");
    out
}

/// Writes `correctness.csv` and `correctness.html` into `out_dir`.
pub fn render_report(m: &CorrectnessMatrix, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |path: &Path, e: std::io::Error| EvalError::Io { path: path.to_owned(), message: e.to_string() };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let csv_path = out_dir.join(REPORT_CSV);
    let html_path = out_dir.join(REPORT_HTML);
    fs::write(&csv_path, render_csv(m)).map_err(|e| io(&csv_path, e))?;
    fs::write(&html_path, render_html(m)).map_err(|e| io(&html_path, e))?;
    Ok(vec![csv_path, html_path])
}
