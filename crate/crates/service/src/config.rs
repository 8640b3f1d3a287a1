//! Service and CLI configuration file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use eipl_core::grader::PipelineConfig;
use eipl_core::llm::LiveConfig;
use eipl_core::prompt::PromptTemplate;
use eipl_core::sandbox::ExecutionLimits;
use eipl_core::AttemptPolicy;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub limits: ExecutionLimits,
    pub policy: AttemptPolicy,
    pub llm: LlmConfig,
    pub prompt: PromptConfig,
    pub sandbox: SandboxConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let live = LiveConfig::default();
        let pipeline = PipelineConfig::default();
        Self {
            endpoint: live.endpoint,
            model: live.model,
            api_key_env: live.api_key_env,
            temperature: pipeline.temperature,
            max_output_tokens: pipeline.max_output_tokens,
            timeout_secs: pipeline.request_timeout.as_secs(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Replaces the built-in template.
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub python: PathBuf,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self { python: "python3".into() }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.limits.validate().with_context(|| format!("config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn template(&self) -> anyhow::Result<PromptTemplate> {
        match &self.prompt.template {
            Some(p) => PromptTemplate::from_file(p).with_context(|| format!("prompt template {}", p.display())),
            None => Ok(PromptTemplate::default()),
        }
    }

    pub fn live(&self) -> LiveConfig {
        LiveConfig { endpoint: self.llm.endpoint.clone(), model: self.llm.model.clone(), api_key_env: self.llm.api_key_env.clone() }
    }

    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        Ok(PipelineConfig {
            template: self.template()?,
            limits: self.limits,
            model_name: self.llm.model.clone(),
            temperature: self.llm.temperature,
            max_output_tokens: self.llm.max_output_tokens,
            request_timeout: Duration::from_secs(self.llm.timeout_secs),
        })
    }
}
