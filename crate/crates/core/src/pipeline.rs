//! End-to-end session runner: planning, the observe/decide/act/assess loop,
//! SUS synthesis and the report.
//!
//! Output layout under the run directory:
//! `session.jsonl`, `observations/`, `report.json`, `report.md`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::action::{Action, TerminateStatus};
use crate::agent::{
    assess_step, decide_step, describe_page, detect_loop, enforce_policy, ActionSignature, AgentMemory, AssessError, AssessInput,
    DecideInput, LoopVerdict, LOOP_BREAK_REASON,
};
use crate::browser::{act, Driver, DriverError, SimDriver, SimFixture, Snapshot};
use crate::checklist::{generate_checklist, update_checklist, ChecklistError, StepContext};
use crate::config::{BackendConfig, Config, DriverConfig, SearchConfig, SynthesisKind};
use crate::gateway::{Gateway, GatewayError, ImageAttachment, ModelBackend, Role, ScriptedBackend};
use crate::grounding::{overlay_tags, GeometryGrounding, GroundingProvider, Observation, Viewport};
use crate::prompts::PromptSet;
use crate::report::{generate_report, write_reports, Remedies, UxReport};
use crate::roadmap::{plan_roadmap, FixtureSearch, SearchProvider};
use crate::session::{
    ActionOutcome, ActionRecord, EngineConfig, LogLine, ObservationStore, SessionHeader, SessionLog, SessionWriter, TargetElement,
    TaskSpec, Terminal, TerminalStatus, SESSION_SCHEMA_VERSION,
};
use crate::synthesis::{analyst_notes, build_friction_map, synthesize_sus, RuleOptions, SynthesisRequest};

pub const SESSION_FILE: &str = "session.jsonl";
pub const OBSERVATION_DIR: &str = "observations";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("browser: {0}")]
    Driver(#[from] DriverError),
    #[error("{0}")]
    Checklist(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl RunError {
    /// Short machine-readable category used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Gateway(GatewayError::Fixture(_)) => "fixture",
            RunError::Gateway(GatewayError::Auth { .. }) => "auth",
            RunError::Gateway(_) => "gateway",
            RunError::Driver(_) => "browser",
            RunError::Checklist(_) => "checklist",
            RunError::Io(_) => "io",
            RunError::Internal(_) => "internal",
        }
    }
}

/// Process exit code for a terminal status.
pub fn exit_code(status: TerminalStatus) -> i32 {
    match status {
        TerminalStatus::Success => 0,
        TerminalStatus::Failure => 2,
        TerminalStatus::BudgetExhausted => 3,
    }
}

/// Source of record timestamps.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Starts at a fixed instant and advances only by simulated time.
    Logical(DateTime<Utc>),
    Wall,
}

impl Clock {
    fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::Logical(t) => *t,
            Clock::Wall => Utc::now(),
        }
    }

    fn advance(&mut self, ms: u64) {
        if let Clock::Logical(t) = self {
            *t += chrono::Duration::milliseconds(ms.max(1) as i64);
        }
    }

    fn is_logical(&self) -> bool {
        matches!(self, Clock::Logical(_))
    }
}

/// Everything a session needs, already constructed.
pub struct SessionParts {
    pub task: TaskSpec,
    pub driver: Box<dyn Driver>,
    pub viewport: Viewport,
    pub gateway: Gateway,
    /// `None` skips roadmap planning.
    pub search: Option<Box<dyn SearchProvider>>,
    pub prompts: PromptSet,
    pub remedies: Remedies,
    pub clock: Clock,
    pub seed: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub log: SessionLog,
    pub report: UxReport,
    pub session_path: PathBuf,
}

impl RunOutcome {
    pub fn status(&self) -> TerminalStatus {
        self.log.terminal.as_ref().map(|t| t.status).unwrap_or(TerminalStatus::Failure)
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.status())
    }
}

/// Builds the task from config values.
pub fn task_from_config(cfg: &Config) -> Result<TaskSpec, RunError> {
    let url = cfg.task.url.as_deref().ok_or_else(|| RunError::Config("no target URL (set task.url or pass --url)".into()))?;
    let desc = cfg
        .task
        .description
        .as_deref()
        .ok_or_else(|| RunError::Config("no task description (set task.description or pass --task)".into()))?;
    let mut task = TaskSpec::new(url, desc).map_err(|e| RunError::Config(e.to_string()))?;
    task.persona_profile = cfg.task.persona.clone();
    task.policy.login_prohibited = cfg.task.login_prohibited;
    Ok(task)
}

fn build_backend(cfg: &Config) -> Result<Arc<dyn ModelBackend>, RunError> {
    match &cfg.gateway.backend {
        BackendConfig::Scripted { script } => Ok(Arc::new(ScriptedBackend::from_file(script).map_err(RunError::Config)?)),
        #[cfg(feature = "live")]
        BackendConfig::Http { roles, timeout_s } => {
            use crate::gateway::{HttpBackend, RoleEndpoint};
            let mut map = std::collections::BTreeMap::new();
            for role in Role::ALL {
                let r = &roles[role.as_str()];
                map.insert(
                    role,
                    RoleEndpoint { endpoint: r.endpoint.clone(), model: r.model.clone(), api_key_env: r.api_key_env.clone() },
                );
            }
            Ok(Arc::new(HttpBackend::new(map, std::time::Duration::from_secs(*timeout_s))?))
        }
        #[cfg(not(feature = "live"))]
        BackendConfig::Http { .. } => Err(RunError::Config("this build has no HTTP gateway (enable the `live` feature)".into())),
    }
}

fn build_driver(cfg: &Config) -> Result<(Box<dyn Driver>, Viewport), RunError> {
    match &cfg.driver {
        DriverConfig::Sim { site } => {
            let fixture = SimFixture::load(site).map_err(|e| RunError::Config(e.to_string()))?;
            let d = SimDriver::new(fixture);
            let vp = d.viewport();
            Ok((Box::new(d), vp))
        }
        #[cfg(feature = "live")]
        DriverConfig::Cdp { endpoint, viewport, timeout_s } => {
            use crate::browser::{CdpConfig, CdpDriver};
            let vp = match viewport {
                Some([w, h]) => Viewport::new(*w, *h).map_err(|e| RunError::Config(e.to_string()))?,
                None => Viewport::default(),
            };
            let config = CdpConfig {
                endpoint: endpoint.clone(),
                viewport: vp,
                command_timeout: std::time::Duration::from_secs(*timeout_s),
                ..CdpConfig::default()
            };
            Ok((Box::new(CdpDriver::connect(config)?), vp))
        }
        #[cfg(not(feature = "live"))]
        DriverConfig::Cdp { .. } => Err(RunError::Config("this build has no browser driver (enable the `live` feature)".into())),
    }
}

/// Constructs all session parts. The gateway is built first so that a
/// missing credential fails before any browser is touched.
pub fn parts_from_config(cfg: &Config) -> Result<SessionParts, RunError> {
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let task = task_from_config(cfg)?;
    let backend = build_backend(cfg)?;
    let mut gateway = Gateway::new(backend, cfg.retry_policy());
    if let Some(b) = cfg.gateway.context_budget_chars {
        gateway = gateway.with_context_budget(b);
    }
    if cfg.is_offline() {
        gateway = gateway.with_sleeper(|_| {});
    }
    let prompts = match &cfg.prompts.dir {
        Some(d) => PromptSet::with_overrides(d).map_err(|e| RunError::Config(e.to_string()))?,
        None => PromptSet::builtin(),
    };
    let remedies = match &cfg.report.remedies {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("cannot read {}: {e}", p.display())))?;
            Remedies::from_toml(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?
        }
        None => Remedies::builtin().clone(),
    };
    let search: Option<Box<dyn SearchProvider>> = match &cfg.search {
        SearchConfig::None => None,
        SearchConfig::Fixture { file } => Some(Box::new(FixtureSearch::load(file).map_err(RunError::Config)?)),
    };
    let clock = match (cfg.clock.start, cfg.is_offline()) {
        (Some(t), _) => Clock::Logical(t),
        (None, true) => Clock::Logical(DateTime::UNIX_EPOCH),
        (None, false) => Clock::Wall,
    };
    let (driver, viewport) = build_driver(cfg)?;
    Ok(SessionParts { task, driver, viewport, gateway, search, prompts, remedies, clock, seed: cfg.seed })
}

/// Loads a config, builds the parts and runs one session into `out_dir`.
pub fn run_config(cfg: &Config, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let parts = parts_from_config(cfg)?;
    run_session(parts, cfg, out_dir)
}

fn session_id(seed: u64, clock: &Clock) -> String {
    let seed = if clock.is_logical() {
        seed
    } else {
        seed ^ Utc::now().timestamp_nanos_opt().unwrap_or_default() as u64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    uuid::Builder::from_random_bytes(rng.random()).into_uuid().to_string()
}

fn image_of(snapshot: &Snapshot) -> ImageAttachment {
    ImageAttachment { media_type: snapshot.screenshot.media_type.clone(), bytes: snapshot.screenshot.bytes().to_vec() }
}

fn target_of(action: &Action, obs: &Observation) -> Option<TargetElement> {
    let el = match action {
        Action::Select { tag_id, .. } => obs.element(*tag_id),
        a => a.point().and_then(|p| obs.element_at(p)),
    }?;
    Some(TargetElement { tag_id: el.tag_id, role: el.role.as_str().to_string(), label: el.label.clone() })
}

struct Observed {
    obs: Observation,
    reference: String,
    image: Option<ImageAttachment>,
}

struct Runner<'a> {
    parts: SessionParts,
    cfg: &'a Config,
    log: SessionLog,
    writer: SessionWriter,
    store: ObservationStore,
    grounding: GeometryGrounding,
    overlay_warned: bool,
}

impl Runner<'_> {
    fn observe(&mut self) -> Result<Observed, RunError> {
        let snap = self.parts.driver.snapshot()?;
        let obs = self.grounding.ground(&snap.page, &snap.screenshot).map_err(|e| RunError::Internal(format!("grounding: {e}")))?;
        let reference = self.store.put(&obs, &snap.screenshot).map_err(|e| RunError::Internal(format!("observation store: {e}")))?;
        let mut image = self.parts.driver.capabilities().can_screenshot.then(|| image_of(&snap));
        if let (Some(img), true) = (image.as_mut(), self.cfg.agent.rasterize_tags) {
            match overlay_tags(&snap.screenshot, &obs) {
                Some(bytes) => img.bytes = bytes,
                None if !self.overlay_warned => {
                    self.overlay_warned = true;
                    self.warn(format!("tag overlay needs SVG screenshots; sending {} unmarked", snap.screenshot.media_type))?;
                }
                None => {}
            }
        }
        Ok(Observed { obs, reference, image })
    }

    fn warn(&mut self, message: String) -> Result<(), RunError> {
        log::info!("{message}");
        self.writer.write(&LogLine::Warning { message: message.clone() })?;
        self.log.warnings.push(message);
        Ok(())
    }

    fn flush_calls(&mut self) -> Result<(), RunError> {
        for c in self.parts.gateway.drain_calls() {
            self.writer.write(&LogLine::ModelCall(c.clone()))?;
            self.log.model_calls.push(c);
        }
        Ok(())
    }

    fn terminate(&mut self, status: TerminalStatus, reason: String) -> Result<(), RunError> {
        self.flush_calls()?;
        let t = Terminal { status, reason };
        self.writer.write(&LogLine::Terminal(t.clone()))?;
        self.log.terminal = Some(t);
        Ok(())
    }

    /// Ends the session after an error mid-loop: a failing terminal when
    /// steps were recorded, otherwise the error itself.
    fn fail_step(&mut self, err: RunError) -> Result<(), RunError> {
        let fatal = matches!(&err, RunError::Gateway(g) if g.is_fatal());
        if fatal || self.log.records.is_empty() {
            return Err(err);
        }
        self.terminate(TerminalStatus::Failure, format!("aborted: {err}"))
    }

    fn plan(&mut self) -> Result<(), RunError> {
        let retries = self.cfg.agent.step_retries;
        self.parts.gateway.set_step(0);
        if let Some(search) = self.parts.search.as_deref() {
            let plan = plan_roadmap(&self.parts.task, search, &self.parts.gateway, &self.parts.prompts, retries)?;
            self.flush_calls()?;
            for w in plan.warnings {
                self.warn(w)?;
            }
            if let Some(r) = plan.roadmap {
                self.writer.write(&LogLine::Roadmap(r.clone()))?;
                self.log.roadmap = Some(r);
            }
        }
        let checklist = generate_checklist(&self.parts.task, &self.parts.gateway, &self.parts.prompts, self.cfg.checklist.retries);
        self.flush_calls()?;
        let checklist = checklist.map_err(|e| match e {
            ChecklistError::Gateway(g) => RunError::Gateway(g),
            e => RunError::Checklist(e.to_string()),
        })?;
        self.writer.write(&LogLine::Checklist { checklist: checklist.clone() })?;
        self.log.initial_checklist = Some(checklist);
        Ok(())
    }

    fn run_loop(&mut self) -> Result<(), RunError> {
        let agent = self.cfg.agent.clone();
        let loop_cfg = agent.loop_config();
        let mut memory = AgentMemory::new(agent.memory_window);
        self.parts.driver.open(self.parts.task.target_url.as_str())?;
        let mut current: Option<Observed> = None;

        for step in 1..=agent.max_steps {
            self.parts.gateway.set_step(step);
            let before = match current.take() {
                Some(o) => o,
                None => match self.observe() {
                    Ok(o) => o,
                    Err(e) => return self.fail_step(e),
                },
            };
            let checklist = self.log.current_checklist().cloned().expect("checklist generated before the loop");
            let started = Instant::now();

            let input = DecideInput {
                task: &self.parts.task,
                observation: &before.obs,
                checklist: &checklist,
                roadmap: self.log.roadmap.as_ref(),
                step,
                max_steps: agent.max_steps,
                screenshot: before.image.as_ref(),
            };
            let decision = match decide_step(&input, &mut memory, &self.parts.gateway, &self.parts.prompts, agent.step_retries) {
                Ok(d) => d,
                Err(e) => return self.fail_step(e.into()),
            };
            for r in &decision.rejections {
                self.warn(format!("step {step}: rejected decision: {r}"))?;
            }

            let mut action = enforce_policy(&before.obs, decision.action.clone(), &self.parts.task.policy);
            let target = target_of(&action, &before.obs);
            let signature = ActionSignature::of(&action, target.as_ref().map(|t| t.tag_id), loop_cfg.grid);
            if !action.is_terminate() {
                match detect_loop(&memory, &signature, &loop_cfg) {
                    LoopVerdict::Break { count } => {
                        self.warn(format!("step {step}: same action {count} times in a row; stopping"))?;
                        action = Action::terminate(TerminateStatus::Failure, LOOP_BREAK_REASON);
                    }
                    LoopVerdict::Warn { count } => memory.set_loop_warning(Some(format!(
                        "you have now repeated the same action {count} times without progress; try something different"
                    ))),
                    LoopVerdict::Ok => memory.set_loop_warning(None),
                }
            }

            let acted = match act(self.parts.driver.as_mut(), &action, &before.obs) {
                Ok(r) => r,
                Err(DriverError::Unsupported(what)) => {
                    crate::browser::ActResult { outcome: ActionOutcome::failed(format!("unsupported: {what}")), settle_ms: 0 }
                }
                Err(e) => return self.fail_step(e.into()),
            };
            self.parts.clock.advance(acted.settle_ms);

            let after = if action.is_terminate() {
                None
            } else {
                match self.observe() {
                    Ok(o) => Some(o),
                    Err(e) => return self.fail_step(e),
                }
            };
            let after_ref = after.as_ref().unwrap_or(&before);
            let assess_input = AssessInput {
                task: &self.parts.task,
                action: &action,
                outcome: &acted.outcome,
                think_aloud: &decision.think_aloud,
                observation: &after_ref.obs,
                screenshot: after_ref.image.as_ref(),
            };
            let assessed = match assess_step(&assess_input, &self.parts.gateway, &self.parts.prompts, agent.step_retries) {
                Ok(a) => a,
                Err(AssessError::Gateway(g)) => return self.fail_step(g.into()),
                Err(e) => return self.fail_step(RunError::Internal(format!("step {step}: {e}"))),
            };

            let checklist_after = if action.is_terminate() {
                checklist.clone()
            } else {
                let action_text = action.to_string();
                let outcome_text = acted.outcome.describe();
                let page = describe_page(&after_ref.obs);
                let ctx = StepContext {
                    task: &self.parts.task,
                    action: &action_text,
                    outcome: &outcome_text,
                    think_aloud: &decision.think_aloud,
                    page: &page,
                };
                let policy = self.cfg.checklist.policy();
                match update_checklist(ctx, &checklist, &self.parts.gateway, &self.parts.prompts, policy, self.cfg.checklist.retries) {
                    Ok(u) => {
                        if let Some(w) = u.warning {
                            self.warn(format!("step {step}: {w}"))?;
                        }
                        u.checklist
                    }
                    Err(e) => return self.fail_step(e.into()),
                }
            };

            let latency_ms = if self.parts.clock.is_logical() { acted.settle_ms } else { started.elapsed().as_millis() as u64 };
            let record = ActionRecord {
                step_index: step,
                think_aloud: decision.think_aloud.clone(),
                action: action.clone(),
                action_outcome: acted.outcome.clone(),
                assessment: assessed.assessment,
                observation_ref: before.reference.clone(),
                checklist_after,
                timestamp: crate::session::millis(self.parts.clock.now()),
                latency_ms,
                target,
                raw_decision: decision.raw.clone(),
                raw_assessment: assessed.raw,
            };
            self.log.check_record(&record).map_err(|e| RunError::Internal(format!("log integrity: {e}")))?;
            self.flush_calls()?;
            self.writer.write(&LogLine::Record(record.clone()))?;
            self.log.records.push(record.clone());
            memory.push(record, signature);

            if let Action::Terminate { status, reason } = &action {
                let status = match status {
                    TerminateStatus::Success => TerminalStatus::Success,
                    TerminateStatus::Failure => TerminalStatus::Failure,
                };
                return self.terminate(status, reason.clone());
            }
            current = after;
        }
        self.terminate(TerminalStatus::BudgetExhausted, format!("step budget of {} exhausted", agent.max_steps))
    }

    fn synthesize(&mut self) -> Result<UxReport, RunError> {
        let post_step = self.log.records.len() as u32 + 1;
        self.parts.gateway.set_step(post_step);
        let request = match self.cfg.synthesis.mode {
            SynthesisKind::Model => SynthesisRequest::Model { retries: self.cfg.synthesis.retries },
            SynthesisKind::RuleBased => SynthesisRequest::RuleBased,
        };
        let options = RuleOptions { trim_outliers: self.cfg.synthesis.trim_outliers };
        let result = synthesize_sus(&self.log, request, Some(&self.parts.gateway), &self.parts.prompts, options);
        self.flush_calls()?;
        let result = result.map_err(|e| match e {
            crate::synthesis::SynthesisError::Gateway(g) => RunError::Gateway(g),
            e => RunError::Internal(e.to_string()),
        })?;
        if let Some(w) = result.warning {
            self.warn(w)?;
        }
        self.writer.write(&LogLine::Synthesis(result.sus.clone()))?;
        self.log.sus = Some(result.sus);

        let friction = build_friction_map(&self.log);
        let notes = if self.cfg.report.analyst {
            let n = analyst_notes(&self.log, &friction, &self.parts.gateway, &self.parts.prompts, self.cfg.synthesis.retries);
            self.flush_calls()?;
            let n = n?;
            if n.is_none() && !friction.is_empty() {
                self.warn("analyst: no valid reply; using templated recommendations".into())?;
            }
            if let Some(notes) = &n {
                self.writer.write(&LogLine::Analyst { notes: notes.clone() })?;
                self.log.analyst = n.clone();
            }
            n
        } else {
            None
        };
        generate_report(&self.log, &friction, notes.as_deref(), &self.parts.remedies).map_err(|e| RunError::Internal(e.to_string()))
    }
}

/// Runs one complete session. The session file is written line by line as
/// the run progresses, so it exists even when an error is returned.
pub fn run_session(parts: SessionParts, cfg: &Config, out_dir: &Path) -> Result<RunOutcome, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let engine_config = EngineConfig {
        reasoning: parts.gateway.model_id(Role::Reasoning),
        ux: parts.gateway.model_id(Role::Ux),
        checklist: parts.gateway.model_id(Role::Checklist),
    };
    let header = SessionHeader {
        schema_version: SESSION_SCHEMA_VERSION,
        session_id: session_id(parts.seed, &parts.clock),
        task: parts.task.clone(),
        engine_config,
        template_hash: parts.prompts.hash(),
        viewport: parts.viewport,
        created_at: crate::session::millis(parts.clock.now()),
        allow_checklist_reversal: cfg.checklist.allow_reversal,
    };
    let session_path = out_dir.join(SESSION_FILE);
    let writer = SessionWriter::create(&session_path, &header)?;
    let store = ObservationStore::open(out_dir.join(OBSERVATION_DIR))?;
    let mut runner = Runner { parts, cfg, log: SessionLog::new(header), writer, store, grounding: GeometryGrounding, overlay_warned: false };

    runner.plan()?;
    runner.run_loop()?;
    let report = runner.synthesize()?;
    write_reports(&report, out_dir)?;
    runner.flush_calls()?;
    runner.parts.gateway.finish()?;
    Ok(RunOutcome { log: runner.log, report, session_path })
}
