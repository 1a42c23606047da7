//! Uniform access to the three engine roles (reasoning, ux, checklist).
//!
//! A [`Gateway`] wraps a [`ModelBackend`] with the context budget check,
//! bounded retries with exponential backoff, and per-call metadata records
//! that end up in the session log.

#[cfg(feature = "live")]
mod http;
mod scripted;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "live")]
pub use http::{HttpBackend, RoleEndpoint};
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reasoning,
    Ux,
    Checklist,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Reasoning, Role::Ux, Role::Checklist];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Reasoning => "reasoning",
            Role::Ux => "ux",
            Role::Checklist => "checklist",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub image: Option<ImageAttachment>,
}

impl PromptBundle {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self { system: system.into(), user: user.into(), image: None }
    }

    pub fn with_image(mut self, image: Option<ImageAttachment>) -> Self {
        self.image = image;
        self
    }

    /// Text size checked against the context budget.
    pub fn text_chars(&self) -> usize {
        self.system.chars().count() + self.user.chars().count()
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        if let Some(img) = &self.image {
            h.update([0u8]);
            h.update(img.media_type.as_bytes());
            h.update(&img.bytes);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub latency_ms: u64,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
    #[error("fixture underrun at call {call_index}: no scripted response left")]
    FixtureUnderrun { call_index: u64 },
    #[error("fixture divergence at call {call_index}: script expects role {expected}, agent asked {got}")]
    FixtureRoleMismatch { call_index: u64, expected: Role, got: Role },
    #[error("fixture overrun: {remaining} scripted responses unused after call {consumed}")]
    FixtureOverrun { consumed: u64, remaining: usize },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_) | BackendError::Timeout)
    }

    pub fn is_fixture(&self) -> bool {
        matches!(
            self,
            BackendError::FixtureUnderrun { .. } | BackendError::FixtureRoleMismatch { .. } | BackendError::FixtureOverrun { .. }
        )
    }
}

/// A chat-completion provider for the engine roles.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, role: Role, bundle: &PromptBundle) -> Result<Completion, BackendError>;

    /// Model identifier serving `role`, recorded in the session header.
    fn model_id(&self, role: Role) -> String;

    /// Called once the session is over; scripted backends report unused entries.
    fn finish(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryRecord {
    pub attempt: u32,
    pub error: String,
    pub backoff_ms: u64,
}

/// Metadata for one gateway call. Prompts and responses are stored as
/// digests; credentials never appear here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCallRecord {
    pub call_index: u64,
    /// Loop step the call belongs to; 0 before the first step.
    pub step: u32,
    pub role: Role,
    pub model: String,
    pub request_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_digest: Option<String>,
    pub prompt_chars: usize,
    #[serde(default)]
    pub response_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u32>,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retries: Vec<RetryRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("prompt of {chars} chars exceeds the context budget of {budget}")]
    ContextOverflow { chars: usize, budget: usize },
    #[error("authentication failed for role {role}: {message}")]
    Auth { role: Role, message: String },
    #[error("role {role}: gave up after {attempts} attempts: {last}")]
    Exhausted { role: Role, attempts: u32, last: String },
    #[error("{0}")]
    Fixture(BackendError),
    #[error("role {role}: {message}")]
    Fatal { role: Role, message: String },
}

impl GatewayError {
    /// Errors that must end the whole run rather than one step.
    pub fn is_fatal(&self) -> bool {
        matches!(self, GatewayError::Auth { .. } | GatewayError::Fixture(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Seed for backoff jitter.
    pub seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 500, max_delay_ms: 8_000, seed: 0 }
    }
}

impl RetryPolicy {
    fn backoff_ms(&self, attempt: u32, rng: &mut ChaCha8Rng) -> u64 {
        let delay = self.base_delay_ms.saturating_mul(1u64 << (attempt - 1).min(20)).min(self.max_delay_ms);
        let jitter = rng.random_range(0..=delay / 2);
        (delay + jitter).min(self.max_delay_ms)
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

struct GatewayState {
    next_index: u64,
    step: u32,
    calls: Vec<ModelCallRecord>,
    rng: ChaCha8Rng,
}

pub const DEFAULT_CONTEXT_BUDGET_CHARS: usize = 400_000;

pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    retry: RetryPolicy,
    context_budget: usize,
    state: Mutex<GatewayState>,
    sleeper: Sleeper,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, retry: RetryPolicy) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(retry.seed);
        Self {
            backend,
            retry,
            context_budget: DEFAULT_CONTEXT_BUDGET_CHARS,
            state: Mutex::new(GatewayState { next_index: 1, step: 0, calls: Vec::new(), rng }),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_context_budget(mut self, chars: usize) -> Self {
        self.context_budget = chars;
        self
    }

    /// Replaces the backoff sleep; tests pass a no-op.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn context_budget(&self) -> usize {
        self.context_budget
    }

    pub fn backend(&self) -> &Arc<dyn ModelBackend> {
        &self.backend
    }

    pub fn model_id(&self, role: Role) -> String {
        self.backend.model_id(role)
    }

    /// Tags subsequent call records with the loop step.
    pub fn set_step(&self, step: u32) {
        self.state.lock().expect("gateway state poisoned").step = step;
    }

    /// Takes the call records accumulated since the last drain.
    pub fn drain_calls(&self) -> Vec<ModelCallRecord> {
        std::mem::take(&mut self.state.lock().expect("gateway state poisoned").calls)
    }

    pub fn finish(&self) -> Result<(), GatewayError> {
        self.backend.finish().map_err(GatewayError::Fixture)
    }

    pub fn complete(&self, role: Role, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let chars = bundle.text_chars();
        if chars > self.context_budget {
            return Err(GatewayError::ContextOverflow { chars, budget: self.context_budget });
        }
        let (call_index, step) = {
            let mut st = self.state.lock().expect("gateway state poisoned");
            let idx = st.next_index;
            st.next_index += 1;
            (idx, st.step)
        };
        let mut record = ModelCallRecord {
            call_index,
            step,
            role,
            model: self.backend.model_id(role),
            request_digest: bundle.digest(),
            response_digest: None,
            prompt_chars: chars,
            response_chars: 0,
            prompt_tokens: None,
            completion_tokens: None,
            latency_ms: 0,
            retries: Vec::new(),
            error: None,
        };

        let mut attempt = 1u32;
        let result = loop {
            match self.backend.complete(role, bundle) {
                Ok(c) => {
                    record.latency_ms += c.latency_ms;
                    record.response_digest = Some(crate::session::sha256_hex(c.text.as_bytes()));
                    record.response_chars = c.text.chars().count();
                    record.prompt_tokens = c.prompt_tokens;
                    record.completion_tokens = c.completion_tokens;
                    break Ok(c.text);
                }
                Err(e) if e.is_retryable() && attempt <= self.retry.max_retries => {
                    let backoff_ms = {
                        let mut st = self.state.lock().expect("gateway state poisoned");
                        self.retry.backoff_ms(attempt, &mut st.rng)
                    };
                    log::warn!("gateway: {role} call {call_index} attempt {attempt} failed ({e}); retrying in {backoff_ms} ms");
                    record.retries.push(RetryRecord { attempt, error: e.to_string(), backoff_ms });
                    (self.sleeper)(Duration::from_millis(backoff_ms));
                    attempt += 1;
                }
                Err(e) => {
                    record.error = Some(e.to_string());
                    break Err(match e {
                        BackendError::Auth(message) => GatewayError::Auth { role, message },
                        e if e.is_fixture() => GatewayError::Fixture(e),
                        e if e.is_retryable() => GatewayError::Exhausted { role, attempts: attempt, last: e.to_string() },
                        e => GatewayError::Fatal { role, message: e.to_string() },
                    });
                }
            }
        };
        self.state.lock().expect("gateway state poisoned").calls.push(record);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    /// Fails the first `failures` calls with a timeout, then answers.
    struct FlakyBackend {
        failures: u32,
        calls: AtomicU32,
        error: BackendError,
    }

    impl ModelBackend for FlakyBackend {
        fn complete(&self, _role: Role, _bundle: &PromptBundle) -> Result<Completion, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(Completion { text: "ok".into(), latency_ms: 12, ..Default::default() })
            }
        }

        fn model_id(&self, _role: Role) -> String {
            "flaky".into()
        }
    }

    fn flaky(failures: u32, error: BackendError) -> (Arc<FlakyBackend>, Gateway) {
        let b = Arc::new(FlakyBackend { failures, calls: AtomicU32::new(0), error });
        let gw = Gateway::new(b.clone(), RetryPolicy { seed: 7, ..Default::default() }).with_sleeper(|_| {});
        (b, gw)
    }

    #[test]
    fn timeout_twice_then_success() {
        let (b, gw) = flaky(2, BackendError::Timeout);
        let out = gw.complete(Role::Ux, &PromptBundle::new("s", "u")).unwrap();
        assert_eq!(out, "ok");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
        let calls = gw.drain_calls();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].retries.len(), 2);
        assert_eq!(calls[0].retries[0].attempt, 1);
        assert!(calls[0].response_digest.is_some());
        assert!(gw.drain_calls().is_empty());
    }

    #[test]
    fn retry_budget_exhausted() {
        let (b, gw) = flaky(10, BackendError::Transient("503".into()));
        let err = gw.complete(Role::Reasoning, &PromptBundle::new("s", "u")).unwrap_err();
        assert!(matches!(err, GatewayError::Exhausted { attempts: 4, .. }), "{err}");
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
        let calls = gw.drain_calls();
        assert_eq!(calls[0].retries.len(), 3);
        assert!(calls[0].error.is_some());
    }

    #[test]
    fn auth_is_fatal_without_retry() {
        let (b, gw) = flaky(10, BackendError::Auth("401".into()));
        let err = gw.complete(Role::Checklist, &PromptBundle::new("s", "u")).unwrap_err();
        assert!(err.is_fatal());
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn context_budget_enforced_before_call() {
        let (b, gw) = flaky(0, BackendError::Timeout);
        let gw = gw.with_context_budget(10);
        let err = gw.complete(Role::Ux, &PromptBundle::new("12345", "678901")).unwrap_err();
        assert_eq!(err, GatewayError::ContextOverflow { chars: 11, budget: 10 });
        assert_eq!(b.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn backoff_grows_and_is_seeded() {
        let policy = RetryPolicy { max_retries: 5, base_delay_ms: 100, max_delay_ms: 1_000, seed: 3 };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
            (1..=5).map(|a| policy.backoff_ms(a, &mut rng)).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|&d| d <= 1_000));
        assert!(a[0] >= 100 && a[0] <= 150);
        assert!(a[2] >= 400);
    }

    #[test]
    fn digest_covers_image() {
        let a = PromptBundle::new("s", "u");
        let b = a.clone().with_image(Some(ImageAttachment { media_type: "image/png".into(), bytes: vec![1, 2] }));
        assert_ne!(a.digest(), b.digest());
    }
}
