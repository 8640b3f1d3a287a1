//! Completion backend selection for `serve` and `eval run`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::ValueEnum;
use eipl_core::llm::{CompletionBackend, FixtureWriter, LiveBackend, LoggedBackend, MockReply, ReplayBackend, ScriptedMock};
use serde_json::Value;

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone)]
pub struct BackendOptions {
    pub kind: BackendKind,
    /// Replay source, or where live completions are recorded.
    pub fixtures: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    /// Appends the key of every backend request to this file.
    pub call_log: Option<PathBuf>,
}

/// Mock scripts hold one JSON value per line: a string is returned as the
/// completion text, `{"unavailable": true}` simulates an outage.
pub fn parse_mock_script(text: &str) -> anyhow::Result<Vec<MockReply>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(line).with_context(|| format!("mock script line {}", i + 1))? {
            Value::String(s) => MockReply::Text(s),
            Value::Object(o) if o.get("unavailable") == Some(&Value::Bool(true)) => MockReply::Unavailable,
            other => bail!("mock script line {}: expected a string or {{\"unavailable\": true}}, got {other}", i + 1),
        };
        out.push(reply);
    }
    Ok(out)
}

fn load_mock(path: Option<&Path>) -> anyhow::Result<ScriptedMock> {
    let replies = match path {
        Some(p) => parse_mock_script(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Vec::new(),
    };
    Ok(ScriptedMock::new(replies))
}

pub fn build_backend(opts: &BackendOptions, cfg: &Config) -> anyhow::Result<Arc<dyn CompletionBackend>> {
    let inner: Box<dyn CompletionBackend> = match opts.kind {
        BackendKind::Live => {
            let mut live = LiveBackend::from_env(cfg.live())?;
            if let Some(path) = &opts.fixtures {
                live = live.with_recorder(FixtureWriter::open(path)?);
            }
            Box::new(live)
        }
        BackendKind::Replay => {
            let Some(path) = &opts.fixtures else { bail!("--backend replay needs --fixtures <path>") };
            Box::new(ReplayBackend::load(path).with_context(|| format!("loading fixtures {}", path.display()))?)
        }
        BackendKind::Mock => Box::new(load_mock(opts.mock_script.as_deref())?),
    };
    Ok(match &opts.call_log {
        Some(log) => Arc::new(LoggedBackend::new(inner, log)?),
        None => Arc::from(inner),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use eipl_core::llm::CompletionRequest;

    #[test]
    fn mock_script_lines() {
        let replies = parse_mock_script("\"def foo(): return 1\"\n\n{\"unavailable\": true}\n").unwrap();
        assert_eq!(replies, vec![MockReply::Text("def foo(): return 1".into()), MockReply::Unavailable]);
        assert!(parse_mock_script("42\n").is_err());
        assert!(parse_mock_script("not json\n").is_err());
    }

    #[test]
    fn replay_requires_fixtures() {
        let opts = BackendOptions { kind: BackendKind::Replay, fixtures: None, mock_script: None, call_log: None };
        assert!(build_backend(&opts, &Config::default()).is_err());
    }

    #[test]
    fn logged_mock() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("mock.jsonl");
        std::fs::write(&script, "\"a\"\n").unwrap();
        let log = dir.path().join("calls.log");
        let opts = BackendOptions {
            kind: BackendKind::Mock,
            fixtures: None,
            mock_script: Some(script),
            call_log: Some(log.clone()),
        };
        let b = build_backend(&opts, &Config::default()).unwrap();
        assert_eq!(b.complete(&CompletionRequest::new("p")).unwrap().text, "a");
        assert!(b.complete(&CompletionRequest::new("p")).is_err());
        assert_eq!(std::fs::read_to_string(log).unwrap().lines().count(), 2);
    }
}
