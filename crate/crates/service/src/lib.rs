//! HTTP grading service and the `eipl` command-line tools.

pub mod api;
pub mod backend;
pub mod config;

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use eipl_core::bank::QuestionBank;
use eipl_core::equivalence::Judge;
use eipl_core::grader::{Grader, Pipeline};
use eipl_core::llm::CompletionBackend;
use eipl_core::sandbox::Sandbox;

use crate::config::Config;

/// Loads the bank directory, optionally narrowed by a profile file.
pub fn load_bank(dir: &Path, profile: Option<&Path>) -> anyhow::Result<QuestionBank> {
    let bank = QuestionBank::load_dir(dir).with_context(|| format!("loading bank {}", dir.display()))?;
    match profile {
        Some(p) => bank.with_profile(p).with_context(|| format!("applying profile {}", p.display())),
        None => Ok(bank),
    }
}

pub fn pipeline(cfg: &Config, backend: Arc<dyn CompletionBackend>) -> anyhow::Result<Pipeline> {
    let judge = Arc::new(Judge::new(Sandbox::new(&cfg.sandbox.python)));
    Ok(Pipeline::new(backend, judge, cfg.pipeline()?))
}

pub fn open_grader(
    cfg: &Config,
    bank: QuestionBank,
    backend: Arc<dyn CompletionBackend>,
    journal: &Path,
) -> anyhow::Result<Grader> {
    let pipeline = pipeline(cfg, backend)?;
    Grader::open(Arc::new(bank), pipeline, cfg.policy, journal).with_context(|| format!("opening journal {}", journal.display()))
}
