//! `uxprobe`: run usability sessions, replay fixtures, audit session logs
//! and render reports.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | session ended in success; score found no drift; report written |
//! | 1 | configuration, fixture, I/O or infrastructure error |
//! | 2 | session ended in failure (login wall, loop break, agent gave up) |
//! | 3 | step budget exhausted |
//! | 4 | `score` found stored metrics that disagree with the records |
//!
//! Every diagnostic on standard error starts with `uxprobe: error[<kind>]:`
//! or `uxprobe: warning:`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use uxprobe_core::audit::audit_session;
use uxprobe_core::config::{BackendConfig, Config, DriverConfig};
use uxprobe_core::pipeline::{run_config, RunError, RunOutcome, SESSION_FILE};
use uxprobe_core::prompts::PromptSet;
use uxprobe_core::report::{generate_report, write_reports, Remedies};
use uxprobe_core::session::{load_session, LoadMode};
use uxprobe_core::synthesis::{build_friction_map, synthesize_sus, RuleOptions, SynthesisRequest};

const EXIT_INFRA: u8 = 1;
const EXIT_DRIFT: u8 = 4;

#[derive(Parser)]
#[command(name = "uxprobe", version, about = "Automated usability testing with a web agent")]
struct Cli {
    /// More log output on stderr (repeat for debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session from a config file.
    Run(RunArgs),
    /// Replay recorded fixtures (simulated site + scripted model replies).
    Replay(ReplayArgs),
    /// Recompute metrics from a session log and check them against stored values.
    Score(ScoreArgs),
    /// Render report.json and report.md from a session log.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML).
    config: PathBuf,
    /// Target URL; overrides task.url.
    #[arg(long)]
    url: Option<String>,
    /// Task description; overrides task.description.
    #[arg(long)]
    task: Option<String>,
    /// Output directory for the session log, observations and reports.
    #[arg(long, default_value = "uxprobe-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Fixture directory; repeat to replay several.
    #[arg(long = "fixture", required = true)]
    fixtures: Vec<PathBuf>,
    /// Config file name inside each fixture directory.
    #[arg(long, default_value = "config.toml")]
    config: String,
    /// Output directory. With several fixtures each gets a subdirectory
    /// named after the fixture.
    #[arg(long)]
    out: PathBuf,
    /// Number of fixtures replayed concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct ScoreArgs {
    /// Session log (session.jsonl).
    #[arg(long)]
    session: PathBuf,
    /// Keep everything before the first unreadable line instead of failing.
    #[arg(long)]
    salvage: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Compute a rule-based SUS when the log has none.
    #[arg(long)]
    synthesize: bool,
    /// Remedy table (TOML) for templated recommendations.
    #[arg(long)]
    remedies: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let code = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
    };
    ExitCode::from(code)
}

fn fail(kind: &str, message: impl std::fmt::Display) -> u8 {
    eprintln!("uxprobe: error[{kind}]: {message}");
    EXIT_INFRA
}

fn finish(result: Result<RunOutcome, RunError>, out: &Path) -> u8 {
    match result {
        Ok(outcome) => {
            let r = &outcome.report;
            for w in &r.warnings {
                eprintln!("uxprobe: warning: {w}");
            }
            println!(
                "{}: {} after {} steps ({})",
                out.display(),
                r.outcome.status,
                r.outcome.steps,
                r.outcome.reason
            );
            println!("  SEQ mean {:?}, SUS {:?} grade {}", r.seq.mean, r.sus.score, r.sus.grade);
            outcome.exit_code() as u8
        }
        Err(e) => {
            let code = fail(e.kind(), &e);
            if out.join(SESSION_FILE).exists() {
                eprintln!("uxprobe: note: partial session log at {}", out.join(SESSION_FILE).display());
            }
            code
        }
    }
}

fn cmd_run(a: RunArgs) -> u8 {
    let mut cfg = match Config::load(&a.config) {
        Ok(c) => c,
        Err(e) => return fail("config", e),
    };
    if let Some(url) = a.url {
        cfg.task.url = Some(url);
    }
    if let Some(task) = a.task {
        cfg.task.description = Some(task);
    }
    finish(run_config(&cfg, &a.out), &a.out)
}

fn load_fixture(dir: &Path, name: &str) -> Result<Config, String> {
    let cfg = Config::load(dir.join(name)).map_err(|e| e.to_string())?;
    if !matches!(cfg.driver, DriverConfig::Sim { .. }) || !matches!(cfg.gateway.backend, BackendConfig::Scripted { .. }) {
        return Err(format!("{}: a replay fixture needs driver.kind = \"sim\" and gateway.kind = \"scripted\"", dir.display()));
    }
    Ok(cfg)
}

fn cmd_replay(a: ReplayArgs) -> u8 {
    let jobs: Vec<(PathBuf, PathBuf)> = if a.fixtures.len() == 1 {
        vec![(a.fixtures[0].clone(), a.out.clone())]
    } else {
        a.fixtures
            .iter()
            .map(|f| {
                let name = f.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "fixture".into());
                (f.clone(), a.out.join(name))
            })
            .collect()
    };
    let mut outs: Vec<&PathBuf> = jobs.iter().map(|(_, o)| o).collect();
    outs.sort();
    if outs.windows(2).any(|w| w[0] == w[1]) {
        return fail("config", "two fixtures share a directory name; replay them separately");
    }

    let codes = Mutex::new(vec![0u8; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = a.parallel.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((dir, out)) = jobs.get(i) else { break };
                let code = match load_fixture(dir, &a.config) {
                    Ok(cfg) => finish(run_config(&cfg, out), out),
                    Err(e) => fail("config", e),
                };
                codes.lock().expect("exit code table")[i] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("exit code table");
    if codes.contains(&EXIT_INFRA) {
        EXIT_INFRA
    } else {
        codes.into_iter().find(|&c| c != 0).unwrap_or(0)
    }
}

fn cmd_score(a: ScoreArgs) -> u8 {
    let mode = if a.salvage { LoadMode::Salvage } else { LoadMode::Strict };
    let loaded = match load_session(&a.session, mode) {
        Ok(l) => l,
        Err(e) => return fail("session", format_args!("{}: {e}", a.session.display())),
    };
    if let Some(dropped) = &loaded.salvaged {
        eprintln!("uxprobe: warning: salvaged {}: dropped trailing lines ({dropped})", a.session.display());
    }
    let audit = match audit_session(&loaded.log) {
        Ok(a) => a,
        Err(e) => return fail("metrics", e),
    };
    print!("{}", audit.render(&loaded.log));
    if audit.drift.is_empty() {
        0
    } else {
        eprintln!("uxprobe: warning: {} stored value(s) disagree with the records", audit.drift.len());
        EXIT_DRIFT
    }
}

fn cmd_report(a: ReportArgs) -> u8 {
    let mut log = match load_session(&a.session, LoadMode::Strict) {
        Ok(l) => l.log,
        Err(e) => return fail("session", format_args!("{}: {e}", a.session.display())),
    };
    let remedies = match &a.remedies {
        Some(p) => match std::fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|t| Remedies::from_toml(&t).map_err(|e| e.to_string())) {
            Ok(r) => r,
            Err(e) => return fail("config", format_args!("{}: {e}", p.display())),
        },
        None => Remedies::builtin().clone(),
    };
    if log.sus.is_none() && a.synthesize {
        match synthesize_sus(&log, SynthesisRequest::RuleBased, None, &PromptSet::builtin(), RuleOptions::default()) {
            Ok(r) => log.sus = Some(r.sus),
            Err(e) => return fail("metrics", e),
        }
    }
    let friction = build_friction_map(&log);
    let report = match generate_report(&log, &friction, log.analyst.as_deref(), &remedies) {
        Ok(r) => r,
        Err(e) => return fail("report", e),
    };
    if let Err(e) = write_reports(&report, &a.out) {
        return fail("io", e);
    }
    println!("{}", a.out.join("report.md").display());
    0
}
