//! Acceptance suite. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uxprobe_core::action::{parse_action, Action, TerminateStatus};
use uxprobe_core::agent::{enforce_policy, LOGIN_PROHIBITED_REASON, LOOP_BREAK_REASON};
use uxprobe_core::browser::{Driver, SimDriver, SimFixture};
use uxprobe_core::checklist::{apply_checklist_update, parse_checklist_reply, validate_generated, UpdatePolicy};
use uxprobe_core::grounding::{denormalize_point, ground_observation, normalize_point, NormPoint, PixelPoint, Viewport};
use uxprobe_core::metrics::{compute_sus, grade_sus, CgsGrade, SusResponses, SusScore};
use uxprobe_core::session::{Checklist, ChecklistItem, ChecklistStatus, PolicyFlags, TerminalStatus};
use uxprobe_core::synthesis::{rule_based_responses, RuleOptions};

use common::{check_log_integrity, fixture_dir, record, replay, replay_recording};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("SUS formula", c1_sus_formula),
        ("CGS grading", c2_grading),
        ("Recreation.gov replay", c3_recreation),
        ("Discogs replay", c4_discogs),
        ("checklist contract", c5_checklist),
        ("login policy gate", c6_policy_gate),
        ("action grammar", c7_grammar),
        ("coordinate mapping", c8_coordinates),
        ("rule-based SUS monotonicity", c9_monotonicity),
        ("determinism and budget", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why} ({ms} ms)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct summation over the ten answers: positive items score r-1,
/// negative items 5-r, total scaled by 2.5. Works in hundredths.
fn sus_oracle(r: &[i64; 10]) -> u32 {
    let mut total = 0i64;
    for (i, &v) in r.iter().enumerate() {
        total += if i % 2 == 0 { v - 1 } else { 5 - v };
    }
    (total * 250) as u32
}

fn c1_sus_formula() -> Outcome {
    let mut g = rng(1);
    for _ in 0..1000 {
        let r: [i64; 10] = std::array::from_fn(|_| g.random_range(1..=5));
        let got = compute_sus(&SusResponses::new(&r).unwrap()).hundredths();
        ensure!(got == sus_oracle(&r), "{r:?}: got {got}, oracle {}", sus_oracle(&r));
    }
    let score = |r: [i64; 10]| compute_sus(&SusResponses::new(&r).unwrap()).value();
    ensure!(score([3; 10]) == 50.0, "all-3s gave {}", score([3; 10]));
    ensure!(score([1, 5, 1, 5, 1, 5, 1, 5, 1, 5]) == 0.0, "worst answers not 0");
    ensure!(score([5, 1, 5, 1, 5, 1, 5, 1, 5, 1]) == 100.0, "best answers not 100");
    Ok("1000 random vectors match the oracle; 50.0 / 0.0 / 100.0".into())
}

fn c2_grading() -> Outcome {
    // Lower bound, an interior point, and the percentile range of every row.
    let rows: [(&str, f64, f64, (u8, u8)); 11] = [
        ("A+", 84.1, 92.0, (96, 100)),
        ("A", 80.8, 82.5, (90, 95)),
        ("A-", 78.9, 80.0, (85, 89)),
        ("B+", 77.2, 78.0, (80, 84)),
        ("B", 74.1, 75.5, (70, 79)),
        ("B-", 72.6, 73.5, (65, 69)),
        ("C+", 71.1, 72.0, (60, 64)),
        ("C", 65.0, 68.0, (41, 59)),
        ("C-", 62.7, 64.0, (35, 40)),
        ("D", 51.7, 55.0, (15, 34)),
        ("F", 0.0, 30.0, (0, 14)),
    ];
    let grade = |v: f64| grade_sus(SusScore::from_value(v).unwrap());
    for (label, low, mid, pct) in rows {
        let want = CgsGrade::from_label(label).ok_or(format!("no grade {label}"))?;
        ensure!(grade(low) == want, "{low} graded {} not {label}", grade(low));
        ensure!(grade(mid) == want, "{mid} graded {} not {label}", grade(mid));
        ensure!(want.percentile_range() == pct, "{label} percentile {:?}", want.percentile_range());
    }
    ensure!(grade(55.0).label() == "D", "55.0 graded {}", grade(55.0));
    ensure!(grade(87.5).label() == "A+", "87.5 graded {}", grade(87.5));
    Ok("11 rows at lower bound and interior; 55.0 -> D, 87.5 -> A+".into())
}

fn c3_recreation() -> Outcome {
    let started = Instant::now();
    let a = replay("recreation", "config.toml");
    let b = replay("recreation", "config.toml");
    let elapsed = started.elapsed();
    let r = &a.outcome.report;
    ensure!(r.seq.trajectory == vec![7, 7, 7, 1, 2, 6, 7, 6, 1, 1, 1, 7, 6, 3], "trajectory {:?}", r.seq.trajectory);
    let mean = a.outcome.log.records.iter().map(|x| x.assessment.seq.get() as f64).sum::<f64>() / 14.0;
    ensure!((mean - 62.0 / 14.0).abs() < 1e-9, "mean {mean}");
    ensure!((r.seq.mean - 4.43).abs() < 1e-12 && r.seq.sum == 62 && r.seq.count == 14, "report seq {:?}", r.seq);
    ensure!(r.seq.friction_steps == vec![4, 5, 9, 10, 11, 14], "friction {:?}", r.seq.friction_steps);
    ensure!(r.friction_map.len() == 6, "friction map has {} points", r.friction_map.len());
    ensure!(!r.seq.good_experience, "good_experience should be false");
    ensure!(r.sus.score == 55.0 && r.sus.grade.label() == "D", "SUS {} {}", r.sus.score, r.sus.grade);
    ensure!(a.report_bytes() == b.report_bytes(), "report.json differs between runs");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("14 steps, mean 62/14, friction {{4,5,9,10,11,14}}, SUS 55.0 D, identical reports; 2 runs in {elapsed:?}"))
}

fn c4_discogs() -> Outcome {
    let started = Instant::now();
    let run = replay("discogs", "config.toml");
    let elapsed = started.elapsed();
    let r = &run.outcome.report;
    ensure!(run.outcome.log.records.len() == 4, "{} steps", run.outcome.log.records.len());
    ensure!(run.outcome.status() == TerminalStatus::Success, "status {:?}", run.outcome.status());
    ensure!(r.seq.mean == 6.0 && r.seq.trajectory == vec![7, 5, 6, 6], "SEQ {:?} mean {}", r.seq.trajectory, r.seq.mean);
    ensure!(r.sus.score == 87.5 && r.sus.grade.label() == "A+", "SUS {} {}", r.sus.score, r.sus.grade);
    ensure!(r.friction_map.is_empty(), "friction map not empty");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("4 steps, success, mean 6.0, SUS 87.5 A+ in {elapsed:?}"))
}

const STATUSES: [ChecklistStatus; 4] =
    [ChecklistStatus::Pending, ChecklistStatus::InProgress, ChecklistStatus::Completed, ChecklistStatus::Failed];

fn words(g: &mut ChaCha8Rng, n: usize) -> String {
    const W: [&str; 8] = ["search", "results", "page", "shown", "date", "filter", "applied", "cart"];
    (0..n).map(|_| W[g.random_range(0..W.len())]).collect::<Vec<_>>().join(" ")
}

fn reply(items: &[(String, String)]) -> String {
    let list: Vec<_> = items.iter().map(|(t, s)| serde_json::json!({"text": t, "status": s})).collect();
    serde_json::json!({ "checklist": list }).to_string()
}

fn random_checklist(g: &mut ChaCha8Rng) -> Checklist {
    let n = g.random_range(2..=6);
    let items = (0..n)
        .map(|_| {
            let w = g.random_range(1..=10);
            ChecklistItem { text: words(g, w), status: STATUSES[g.random_range(0..4)] }
        })
        .collect();
    Checklist { items }
}

fn c5_checklist() -> Outcome {
    let mut g = rng(5);
    let policy = UpdatePolicy::default();
    let mut rejected = 0;
    for i in 0..1000 {
        match i % 5 {
            // Generation: wrong item count.
            0 => {
                let n = if g.random_bool(0.5) { g.random_range(0..2) } else { g.random_range(7..12) };
                let items: Vec<_> = (0..n).map(|_| (words(&mut g, 3), "pending".to_string())).collect();
                let r = parse_checklist_reply(&reply(&items)).and_then(validate_generated);
                ensure!(r.is_err(), "{n} items accepted");
            }
            // Generation: an item over ten words.
            1 => {
                let mut items: Vec<_> = (0..g.random_range(2..=6)).map(|_| (words(&mut g, 4), "pending".to_string())).collect();
                let k = g.random_range(0..items.len());
                let n = g.random_range(11..20);
                items[k].0 = words(&mut g, n);
                ensure!(parse_checklist_reply(&reply(&items)).and_then(validate_generated).is_err(), "long item accepted");
            }
            // Generation: a status that is not lowercase.
            2 => {
                let mut items: Vec<_> = (0..g.random_range(2..=6)).map(|_| (words(&mut g, 4), "pending".to_string())).collect();
                let k = g.random_range(0..items.len());
                items[k].1 = ["Pending", "PENDING", "pEnding", "Pending "][g.random_range(0..4)].into();
                ensure!(parse_checklist_reply(&reply(&items)).and_then(validate_generated).is_err(), "status {:?} accepted", items[k].1);
            }
            // Update: two or more items change.
            3 => {
                let cur = random_checklist(&mut g);
                let mut next = cur.clone();
                let n = next.items.len();
                let a = g.random_range(0..n);
                let b = (a + g.random_range(1..n)) % n;
                for k in [a, b] {
                    next.items[k].status = match cur.items[k].status {
                        ChecklistStatus::Pending => ChecklistStatus::InProgress,
                        ChecklistStatus::InProgress => ChecklistStatus::Completed,
                        ChecklistStatus::Completed => ChecklistStatus::Failed,
                        ChecklistStatus::Failed => ChecklistStatus::Completed,
                    };
                }
                ensure!(apply_checklist_update(&cur, &next, policy).is_err(), "two changes accepted");
            }
            // Update: one illegal transition.
            _ => {
                let mut cur = random_checklist(&mut g);
                let k = g.random_range(0..cur.items.len());
                let (from, to) = [
                    (ChecklistStatus::InProgress, ChecklistStatus::Pending),
                    (ChecklistStatus::Completed, ChecklistStatus::Pending),
                    (ChecklistStatus::Failed, ChecklistStatus::Pending),
                    (ChecklistStatus::Completed, ChecklistStatus::InProgress),
                    (ChecklistStatus::Completed, ChecklistStatus::Failed),
                    (ChecklistStatus::Failed, ChecklistStatus::InProgress),
                ][g.random_range(0..6)];
                cur.items[k].status = from;
                let mut next = cur.clone();
                next.items[k].status = to;
                ensure!(apply_checklist_update(&cur, &next, policy).is_err(), "{from} -> {to} accepted");
            }
        }
        rejected += 1;
    }
    let mut accepted = 0;
    for _ in 0..1000 {
        let cur = random_checklist(&mut g);
        let mut next = cur.clone();
        if g.random_bool(0.8) {
            let k = g.random_range(0..cur.items.len());
            let legal: Vec<_> = STATUSES.iter().filter(|s| cur.items[k].status.can_transition_to(**s, false)).collect();
            next.items[k].status = *legal[g.random_range(0..legal.len())];
        }
        let got = apply_checklist_update(&cur, &next, policy).map_err(|e| format!("legal update rejected: {e}"))?;
        ensure!(got == next, "accepted update altered the proposal");
        accepted += 1;
    }
    Ok(format!("{rejected}/1000 violations rejected, {accepted}/1000 legal updates accepted"))
}

fn c6_policy_gate() -> Outcome {
    let (outcome, commands) = replay_recording("login", "config.toml");
    let log = &outcome.log;
    let t = log.terminal.as_ref().ok_or("no terminal line")?;
    ensure!(t.status == TerminalStatus::Failure, "status {:?}", t.status);
    ensure!(t.reason == "login prohibited", "terminal_reason {:?}", t.reason);
    ensure!(commands.is_empty(), "driver received input: {commands:?}");
    ensure!(
        log.records[0].action == Action::terminate(TerminateStatus::Failure, "login prohibited"),
        "recorded action {}",
        log.records[0].action
    );
    ensure!(outcome.exit_code() == 2, "exit code {}", outcome.exit_code());

    // Any proposed action on a page with a password field is replaced.
    let fixture = SimFixture::load(fixture_dir("login").join("site.json")).map_err(|e| e.to_string())?;
    let vp = fixture.viewport;
    let mut driver = SimDriver::new(fixture);
    let snap = driver.snapshot().map_err(|e| e.to_string())?;
    let obs = ground_observation(&snap.page, vp).map_err(|e| e.to_string())?;
    let mut g = rng(6);
    for _ in 0..500 {
        let (x, y) = (g.random_range(0..=1000), g.random_range(0..=1000));
        let proposed = match g.random_range(0..5) {
            0 => Action::Click { x, y },
            1 => Action::Hover { x, y },
            2 => Action::Type { x, y, text: "me@example.com".into() },
            3 => Action::Scroll { direction: uxprobe_core::action::ScrollDirection::Down },
            _ => Action::terminate(TerminateStatus::Success, "done"),
        };
        let gated = enforce_policy(&obs, proposed, &PolicyFlags::default());
        ensure!(gated == Action::terminate(TerminateStatus::Failure, LOGIN_PROHIBITED_REASON), "{gated} passed the gate");
    }
    Ok("login fixture ends failure \"login prohibited\" with zero driver input; 500 proposals gated".into())
}

fn c7_grammar() -> Outcome {
    ensure!(parse_action("click(234, 550)") == Ok(Action::Click { x: 234, y: 550 }), "click(234, 550) misparsed");
    let mut g = rng(7);
    let mut rejected = 0;
    for _ in 0..1000 {
        let verb = ["click", "hover", "type"][g.random_range(0..3)];
        let text = if verb == "type" { ", \"hello\"" } else { "" };
        let bad = g.random_range(1001..100_000);
        let good = g.random_range(0..=1000);
        let coords = match g.random_range(0..6) {
            0 => format!("{bad}, {good}"),
            1 => format!("{good}, {bad}"),
            2 => format!("-{}, {good}", g.random_range(1..1000)),
            3 => format!("{good}"),
            4 => String::new(),
            _ => format!("{good}.5, {good}"),
        };
        let input = if verb == "type" && coords.is_empty() { "type(\"hello\")".to_string() } else { format!("{verb}({coords}{text})") };
        ensure!(parse_action(&input).is_err(), "`{input}` accepted");
        rejected += 1;
    }
    for _ in 0..500 {
        let (x, y) = (g.random_range(0..=1000), g.random_range(0..=1000));
        ensure!(parse_action(&format!("hover({x}, {y})")) == Ok(Action::Hover { x, y }), "hover({x}, {y}) rejected");
    }
    for goto in ["goto(\"https://example.com\")", "GOTO https://example.com", "navigate(\"https://example.com\")"] {
        ensure!(parse_action(goto).is_err(), "`{goto}` accepted");
    }

    let site = r#"{"schema_version": 1, "start_page": "p", "pages": [{"id": "p", "url": "https://t.test/", "elements": [
        {"id": "size", "role": "select", "label": "Size", "bbox": [100, 100, 200, 40],
         "behavior": {"type": "select_options", "key": "size", "options": ["S", "M"]}}]}]}"#;
    let fixture = SimFixture::from_json(site).map_err(|e| e.to_string())?;
    let vp = fixture.viewport;
    let obs = ground_observation(&SimDriver::new(fixture).snapshot().map_err(|e| e.to_string())?.page, vp).map_err(|e| e.to_string())?;
    let c = obs.elements[0].bbox_norm.center();
    ensure!(Action::Click { x: c.x, y: c.y }.validate_against(&obs).is_err(), "click on a dropdown accepted");
    ensure!(
        Action::Select { tag_id: obs.elements[0].tag_id, option: "M".into() }.validate_against(&obs).is_ok(),
        "select on the dropdown rejected"
    );
    Ok(format!("click(234, 550) parses; {rejected} malformed pointer actions, GOTO and dropdown clicks rejected"))
}

fn c8_coordinates() -> Outcome {
    let mut g = rng(8);
    for _ in 0..10_000 {
        let vp = Viewport::new(g.random_range(1..4000), g.random_range(1..4000)).unwrap();
        let p = PixelPoint { x: g.random_range(0.0..=vp.width as f64), y: g.random_range(0.0..=vp.height as f64) };
        let back = denormalize_point(normalize_point(p, vp).unwrap(), vp).unwrap();
        // One grid unit spans W/1000 px and rounding costs at most half of
        // it, so the one-pixel bound holds up to 2000 px per axis.
        let tol = |extent: u32| (extent as f64 / 2000.0).max(1.0);
        ensure!((back.x - p.x).abs() <= tol(vp.width) && (back.y - p.y).abs() <= tol(vp.height), "{p:?} -> {back:?} in {vp:?}");
        let mid = PixelPoint { x: vp.width as f64 / 2.0, y: vp.height as f64 / 2.0 };
        ensure!(normalize_point(mid, vp).unwrap() == NormPoint { x: 500, y: 500 }, "midpoint of {vp:?}");
        ensure!(denormalize_point(NormPoint { x: 500, y: 500 }, vp).unwrap() == mid, "midpoint back in {vp:?}");
        ensure!(normalize_point(PixelPoint { x: 0.0, y: 0.0 }, vp).unwrap() == NormPoint { x: 0, y: 0 }, "origin");
        ensure!(denormalize_point(NormPoint { x: 0, y: 0 }, vp).unwrap() == PixelPoint { x: 0.0, y: 0.0 }, "origin back");
    }
    let vp = Viewport::new(1280, 800).unwrap();
    ensure!(
        denormalize_point(NormPoint { x: 805, y: 876 }, vp).unwrap() == PixelPoint { x: 1030.4, y: 700.8 },
        "(805, 876) on 1280x800"
    );
    Ok("10000 random round trips within 1 px (half a grid unit above 2000 px); midpoint and origin exact".into())
}

fn c9_monotonicity() -> Outcome {
    let mut g = rng(9);
    let mut checks = 0;
    for _ in 0..200 {
        let n = g.random_range(1..=20);
        let mut scores: Vec<[u8; 4]> = (0..n).map(|_| std::array::from_fn(|_| g.random_range(1..=7))).collect();
        for _ in 0..5 {
            let step = g.random_range(0..n);
            let mut bumped = scores.clone();
            for d in 0..4 {
                if g.random_bool(0.5) || d == 0 {
                    bumped[step][d] = g.random_range(bumped[step][d]..=7);
                }
            }
            for trim in [false, true] {
                let opts = RuleOptions { trim_outliers: trim };
                let sus = |s: &[[u8; 4]]| -> Result<f64, String> {
                    let records: Vec<_> = s.iter().enumerate().map(|(i, v)| record(i as u32 + 1, *v)).collect();
                    Ok(compute_sus(&rule_based_responses(&records, opts).map_err(|e| e.to_string())?).value())
                };
                let (before, after) = (sus(&scores)?, sus(&bumped)?);
                ensure!(after >= before, "trim={trim}: {:?} -> {:?} lowered SUS {before} -> {after}", scores[step], bumped[step]);
                checks += 1;
            }
            scores = bumped;
        }
    }
    Ok(format!("{checks} single-step bumps over 200 sessions never lowered SUS"))
}

fn c10_determinism() -> Outcome {
    let cases = [
        ("discogs", "config.toml"),
        ("recreation", "config.toml"),
        ("login", "config.toml"),
        ("dead_button", "config.toml"),
        ("dead_button", "budget.toml"),
    ];
    let mut logs = 0;
    for (name, cfg) in cases {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let _ = tx.send((replay(name, cfg), replay(name, cfg)));
        });
        let (a, b) = rx.recv_timeout(Duration::from_secs(30)).map_err(|_| format!("{name}/{cfg} did not finish in 30 s"))?;
        ensure!(a.session_bytes() == b.session_bytes(), "{name}/{cfg}: session logs differ");
        ensure!(a.report_bytes() == b.report_bytes(), "{name}/{cfg}: reports differ");
        for run in [&a, &b] {
            check_log_integrity(&run.dir.path().join("session.jsonl")).map_err(|e| format!("{name}/{cfg}: {e}"))?;
            logs += 1;
        }
    }

    let dead = replay("dead_button", "config.toml");
    let t = dead.outcome.log.terminal.clone().unwrap();
    ensure!(t.status == TerminalStatus::Failure && t.reason == LOOP_BREAK_REASON, "dead button ended {:?}", t);
    ensure!(dead.outcome.log.records.len() == 5, "loop break at step {}", dead.outcome.log.records.len());
    let cfg = common::load_fixture("dead_button", "config.toml");
    ensure!(cfg.agent.max_steps == 40, "default budget is {}", cfg.agent.max_steps);

    let budget = replay("dead_button", "budget.toml");
    ensure!(budget.outcome.status() == TerminalStatus::BudgetExhausted, "budget run ended {:?}", budget.outcome.status());
    ensure!(budget.outcome.log.records.len() == 3 && budget.outcome.exit_code() == 3, "budget run overran");
    Ok(format!("5 fixtures byte-identical across runs; {logs} logs pass integrity; loop break at 5/40; budget stop at 3/3"))
}
