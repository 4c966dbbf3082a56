//! Run configuration: a single TOML file with `${VAR}` environment
//! interpolation for secrets. Precedence: CLI flag > environment variable >
//! config file > built-in default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{RunMode, Sampling, DEFAULT_MAX_CALLS, DEFAULT_MAX_TURNS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("undefined environment variable ${{{0}}} referenced in config")]
    UndefinedVar(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Per-role LLM endpoint; unset fields inherit the base endpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleEndpoint {
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    pub search_endpoint: Option<String>,
    pub search_api_key: Option<String>,
    pub llm_api_base: Option<String>,
    pub llm_api_key: Option<String>,
    pub llm_model: Option<String>,
    pub summarizer: RoleEndpoint,
    pub judge: RoleEndpoint,
    /// Offline fixture path; mutually exclusive with live endpoints.
    pub mock_fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub max_turns: usize,
    pub max_calls: usize,
    pub concurrency: usize,
    pub parallel_runs: usize,
    pub top_k: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub gateways: GatewayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Hybrid,
            max_turns: DEFAULT_MAX_TURNS,
            max_calls: DEFAULT_MAX_CALLS,
            concurrency: 16,
            parallel_runs: 4,
            top_k: 10,
            sampling: Sampling::default(),
            seed: 0,
            cache_dir: None,
            prompt_dir: None,
            gateways: GatewayConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("max_turns", self.max_turns),
            ("max_calls", self.max_calls),
            ("concurrency", self.concurrency),
            ("parallel_runs", self.parallel_runs),
            ("top_k", self.top_k),
        ] {
            if value < 1 {
                return Err(ConfigError::Invalid(format!("{name} must be >= 1")));
            }
        }
        let live = self.gateways.llm_api_base.is_some() || self.gateways.search_endpoint.is_some();
        if live && self.gateways.mock_fixture.is_some() {
            return Err(ConfigError::Invalid(
                "configure either live endpoints or a mock fixture, not both".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Load from file: interpolate `${VAR}` references, parse, then apply
    /// the well-known environment overrides.
    pub fn load(path: &Path, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let interpolated = interpolate(&raw, env)?;
        let mut config = Self::from_toml(&interpolated)?;
        config.apply_env(env);
        config.validate()?;
        Ok(config)
    }

    /// Environment variables override file values but lose to CLI flags,
    /// which callers apply after this.
    pub fn apply_env(&mut self, env: &dyn Fn(&str) -> Option<String>) {
        if let Some(v) = env("SEARCH_API_KEY") {
            self.gateways.search_api_key = Some(v);
        }
        if let Some(v) = env("LLM_API_BASE") {
            self.gateways.llm_api_base = Some(v);
        }
        if let Some(v) = env("LLM_API_KEY") {
            self.gateways.llm_api_key = Some(v);
        }
        if let Some(v) = env("LLM_SUMMARIZER_API_BASE") {
            self.gateways.summarizer.api_base = Some(v);
        }
        if let Some(v) = env("LLM_SUMMARIZER_API_KEY") {
            self.gateways.summarizer.api_key = Some(v);
        }
        if let Some(v) = env("LLM_SUMMARIZER_MODEL") {
            self.gateways.summarizer.model = Some(v);
        }
        if let Some(v) = env("LLM_JUDGE_API_BASE") {
            self.gateways.judge.api_base = Some(v);
        }
        if let Some(v) = env("LLM_JUDGE_API_KEY") {
            self.gateways.judge.api_key = Some(v);
        }
        if let Some(v) = env("LLM_JUDGE_MODEL") {
            self.gateways.judge.model = Some(v);
        }
    }
}

/// Replace `${VAR}` with the variable's value; `$${VAR}` escapes to a
/// literal `${VAR}`. Undefined variables are an error, not an empty string.
pub fn interpolate(text: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("${") {
        if pos > 0 && rest.as_bytes()[pos - 1] == b'$' {
            out.push_str(&rest[..pos - 1]);
            out.push_str("${");
            rest = &rest[pos + 2..];
            continue;
        }
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 2..];
        let Some(end) = after.find('}') else {
            return Err(ConfigError::Invalid("unterminated ${ in config".into()));
        };
        let name = &after[..end];
        let value = env(name).ok_or_else(|| ConfigError::UndefinedVar(name.to_owned()))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
