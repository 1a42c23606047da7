//! Run configuration, read from one TOML file.
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line overrides are applied on top by the caller.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{LoopConfig, DEFAULT_MEMORY_WINDOW};
use crate::checklist::UpdatePolicy;
use crate::gateway::RetryPolicy;
use crate::grounding::Viewport;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Seeds the session id and backoff jitter.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: TaskConfig,
    pub driver: DriverConfig,
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub checklist: ChecklistConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub prompts: PromptsConfig,
    #[serde(default)]
    pub clock: ClockConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub url: Option<String>,
    pub description: Option<String>,
    pub persona: Option<String>,
    #[serde(default = "yes")]
    pub login_prohibited: bool,
}

fn yes() -> bool {
    true
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { url: None, description: None, persona: None, login_prohibited: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    /// Simulated site described by a JSON page graph.
    Sim { site: PathBuf },
    /// Chromium reached over the DevTools protocol.
    Cdp {
        #[serde(default = "default_cdp_endpoint")]
        endpoint: String,
        #[serde(default)]
        viewport: Option<[u32; 2]>,
        #[serde(default = "default_timeout_s")]
        timeout_s: u64,
    },
}

fn default_cdp_endpoint() -> String {
    "http://127.0.0.1:9222".into()
}

fn default_timeout_s() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(flatten)]
    pub backend: BackendConfig,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ms: u64,
    /// Largest prompt, in characters, before memory is compressed.
    pub context_budget_chars: Option<usize>,
}

fn default_max_retries() -> u32 {
    RetryPolicy::default().max_retries
}
fn default_base_delay() -> u64 {
    RetryPolicy::default().base_delay_ms
}
fn default_max_delay() -> u64 {
    RetryPolicy::default().max_delay_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Ordered role-tagged replies from a JSONL file.
    Scripted { script: PathBuf },
    /// OpenAI-compatible chat completion endpoints, one per role.
    Http {
        roles: BTreeMap<String, HttpRole>,
        #[serde(default = "default_http_timeout")]
        timeout_s: u64,
    },
}

fn default_http_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpRole {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchConfig {
    #[default]
    None,
    Fixture { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_steps: u32,
    /// Re-prompts per model exchange after invalid output.
    pub step_retries: u32,
    pub memory_window: usize,
    pub loop_warn_after: u32,
    pub loop_break_after: u32,
    pub loop_grid: u16,
    /// Draw tag boxes and numbers onto screenshots sent to the model
    /// (SVG screenshots only).
    pub rasterize_tags: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let l = LoopConfig::default();
        Self {
            max_steps: 40,
            step_retries: 2,
            memory_window: DEFAULT_MEMORY_WINDOW,
            loop_warn_after: l.warn_after,
            loop_break_after: l.break_after,
            loop_grid: l.grid,
            rasterize_tags: false,
        }
    }
}

impl AgentConfig {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig { warn_after: self.loop_warn_after, break_after: self.loop_break_after, grid: self.loop_grid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecklistConfig {
    pub strict: bool,
    pub allow_reversal: bool,
    pub retries: u32,
}

impl Default for ChecklistConfig {
    fn default() -> Self {
        Self { strict: false, allow_reversal: false, retries: 2 }
    }
}

impl ChecklistConfig {
    pub fn policy(&self) -> UpdatePolicy {
        UpdatePolicy { strict: self.strict, allow_reversal: self.allow_reversal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    #[default]
    Model,
    RuleBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub mode: SynthesisKind,
    pub trim_outliers: bool,
    pub retries: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { mode: SynthesisKind::Model, trim_outliers: false, retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Ask the ux engine for diagnoses and recommendations.
    pub analyst: bool,
    /// TOML table replacing the built-in remedies.
    pub remedies: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    /// Directory whose `*.txt` files replace built-in templates.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    /// Fixed start time. Timestamps then advance by the simulated settle
    /// time of each step, which makes runs reproducible.
    pub start: Option<DateTime<Utc>>,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse { path: path.into(), message })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Makes every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DriverConfig::Sim { site } = &mut self.driver {
            fix(site);
        }
        if let BackendConfig::Scripted { script } = &mut self.gateway.backend {
            fix(script);
        }
        if let SearchConfig::Fixture { file } = &mut self.search {
            fix(file);
        }
        if let Some(d) = &mut self.prompts.dir {
            fix(d);
        }
        if let Some(r) = &mut self.report.remedies {
            fix(r);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let a = &self.agent;
        if a.max_steps == 0 {
            return bad("agent.max_steps must be at least 1".into());
        }
        if a.memory_window == 0 {
            return bad("agent.memory_window must be at least 1".into());
        }
        if a.loop_warn_after == 0 || a.loop_break_after < a.loop_warn_after {
            return bad(format!(
                "agent.loop_warn_after ({}) must be >= 1 and <= agent.loop_break_after ({})",
                a.loop_warn_after, a.loop_break_after
            ));
        }
        if let BackendConfig::Http { roles, .. } = &self.gateway.backend {
            for r in ["reasoning", "ux", "checklist"] {
                if !roles.contains_key(r) {
                    return bad(format!("gateway.roles.{r} is missing"));
                }
            }
            if let Some(k) = roles.keys().find(|k| !["reasoning", "ux", "checklist"].contains(&k.as_str())) {
                return bad(format!("gateway.roles.{k}: unknown role"));
            }
        }
        if let DriverConfig::Cdp { viewport: Some([w, h]), .. } = self.driver {
            Viewport::new(w, h).map_err(|e| ConfigError::Invalid(format!("driver.viewport: {e}")))?;
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.gateway.max_retries,
            base_delay_ms: self.gateway.base_delay_ms,
            max_delay_ms: self.gateway.max_delay_ms,
            seed: self.seed,
        }
    }

    /// True when no network or browser is needed.
    pub fn is_offline(&self) -> bool {
        matches!(self.driver, DriverConfig::Sim { .. }) && matches!(self.gateway.backend, BackendConfig::Scripted { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [driver]
        kind = "sim"
        site = "site.json"

        [gateway]
        kind = "scripted"
        script = "script.jsonl"
    "#;

    #[test]
    fn defaults() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.agent.max_steps, 40);
        assert_eq!(c.agent.loop_config(), LoopConfig::default());
        assert_eq!(c.agent.memory_window, 5);
        assert!(c.task.login_prohibited);
        assert!(!c.checklist.allow_reversal && !c.synthesis.trim_outliers);
        assert_eq!(c.synthesis.mode, SynthesisKind::Model);
        assert_eq!(c.search, SearchConfig::None);
        assert!(c.is_offline());
        c.validate().unwrap();
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut c = Config::parse(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/fx/discogs"));
        assert_eq!(c.driver, DriverConfig::Sim { site: "/fx/discogs/site.json".into() });
    }

    #[test]
    fn http_roles_required() {
        let text = r#"
            [driver]
            kind = "cdp"
            viewport = [1440, 900]
            [gateway]
            kind = "http"
            [gateway.roles.reasoning]
            endpoint = "https://api.example.test/v1"
            model = "m"
            api_key_env = "KEY"
        "#;
        let c = Config::parse(text).unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("gateway.roles.ux"), "{err}");
        assert!(!c.is_offline());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_loops() {
        assert!(Config::parse(&format!("{MINIMAL}\n[agent]\nmax_step = 3\n")).is_err());
        let c = Config::parse(&format!("{MINIMAL}\n[agent]\nloop_warn_after = 6\n")).unwrap();
        assert!(c.validate().is_err());
    }
}
