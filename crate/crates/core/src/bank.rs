//! Question bank: one TOML file per question in a directory, plus optional
//! deployment profiles that select, order and re-mode a subset.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{validate_bank, InstructionMode, Question};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid bank: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("profile references unknown question {0:?}")]
    UnknownQuestion(String),
}

#[derive(Debug, Clone, Default)]
pub struct QuestionBank {
    questions: Vec<Arc<Question>>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Deserialize)]
struct Profile {
    questions: Vec<ProfileEntry>,
}

#[derive(Debug, Deserialize)]
struct ProfileEntry {
    id: String,
    mode: InstructionMode,
}

impl QuestionBank {
    pub fn new(questions: Vec<Question>) -> Result<Self, BankError> {
        let violations = validate_bank(&questions);
        if !violations.is_empty() {
            return Err(BankError::Invalid(violations));
        }
        let questions: Vec<Arc<Question>> = questions.into_iter().map(Arc::new).collect();
        let index = questions.iter().enumerate().map(|(i, q)| (q.id.clone(), i)).collect();
        Ok(Self { questions, index })
    }

    /// Loads every `*.toml` file directly inside `dir`, ordered by file name.
    /// A missing or empty directory yields an empty bank.
    pub fn load_dir(dir: &Path) -> Result<Self, BankError> {
        let io = |source| BankError::Io { path: dir.to_owned(), source };
        let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
            Ok(entries) => entries
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(io)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "toml"));
        paths.sort();
        let mut questions = Vec::with_capacity(paths.len());
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|source| BankError::Io { path: path.clone(), source })?;
            let q: Question = toml::from_str(&text)
                .map_err(|e| BankError::Parse { path: path.clone(), message: e.to_string() })?;
            questions.push(q);
        }
        Self::new(questions)
    }

    /// Restricts the bank to the profile's questions, in profile order, with
    /// the profile's instruction modes.
    pub fn with_profile(&self, profile_path: &Path) -> Result<Self, BankError> {
        let text = fs::read_to_string(profile_path)
            .map_err(|source| BankError::Io { path: profile_path.to_owned(), source })?;
        let profile: Profile = toml::from_str(&text)
            .map_err(|e| BankError::Parse { path: profile_path.to_owned(), message: e.to_string() })?;
        let mut selected = Vec::with_capacity(profile.questions.len());
        for entry in profile.questions {
            let q = self.get(&entry.id).ok_or_else(|| BankError::UnknownQuestion(entry.id.clone()))?;
            let mut q = Question::clone(q);
            q.instruction_language_mode = entry.mode;
            selected.push(q);
        }
        Self::new(selected)
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Question>> {
        self.index.get(id).map(|&i| &self.questions[i])
    }

    pub fn questions(&self) -> &[Arc<Question>] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}
