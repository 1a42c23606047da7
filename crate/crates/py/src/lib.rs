//! Python bindings: scoring helpers, coordinate mapping, the action
//! grammar, and offline fixture replay.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use uxprobe_core::action::parse_action as core_parse_action;
use uxprobe_core::audit::audit_session;
use uxprobe_core::config::Config;
use uxprobe_core::grounding::{self, NormPoint, PixelPoint, Viewport};
use uxprobe_core::metrics::{self, CgsGrade, Rating7, SusResponses};
use uxprobe_core::pipeline::run_config;
use uxprobe_core::session::{load_session, LoadMode};

create_exception!(uxprobe, UxprobeError, PyException);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> PyErr {
    UxprobeError::new_err(e.to_string())
}

/// SUS score (0-100) for ten answers on the 1-5 scale.
#[pyfunction]
fn compute_sus(responses: Vec<i64>) -> PyResult<f64> {
    let r = SusResponses::new(&responses).map_err(value_err)?;
    Ok(metrics::compute_sus(&r).value())
}

/// Curved-grading-scale letter for a SUS score.
#[pyfunction]
fn grade_sus(score: f64) -> PyResult<String> {
    Ok(metrics::grade_value(score).map_err(value_err)?.label().to_string())
}

/// Percentile range `(low, high)` for a grade label such as "A+".
#[pyfunction]
fn percentile_range(grade: &str) -> PyResult<(u8, u8)> {
    CgsGrade::from_label(grade).map(|g| g.percentile_range()).ok_or_else(|| value_err(format!("unknown grade `{grade}`")))
}

/// Lower score bound of a grade label.
#[pyfunction]
fn grade_lower_bound(grade: &str) -> PyResult<f64> {
    CgsGrade::from_label(grade).map(|g| g.lower_bound().value()).ok_or_else(|| value_err(format!("unknown grade `{grade}`")))
}

/// Summary of a sequence of per-step SEQ ratings (1-7). Step numbers in the
/// result are 1-based.
#[pyfunction]
fn aggregate_seq<'py>(py: Python<'py>, ratings: Vec<i64>) -> PyResult<Bound<'py, PyDict>> {
    let series = ratings.iter().map(|&r| Rating7::new(r)).collect::<Result<Vec<_>, _>>().map_err(value_err)?;
    let s = metrics::aggregate_seq(&series).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("mean", s.mean)?;
    d.set_item("min", s.min.get())?;
    d.set_item("sum", s.sum)?;
    d.set_item("count", s.count)?;
    d.set_item("friction_steps", s.friction_steps)?;
    d.set_item("success_steps", s.success_steps)?;
    d.set_item("good_experience", s.good_experience)?;
    Ok(d)
}

/// Viewport pixel to the 1000x1000 action space.
#[pyfunction]
fn normalize_point(x: f64, y: f64, width: u32, height: u32) -> PyResult<(u16, u16)> {
    let vp = Viewport::new(width, height).map_err(value_err)?;
    let p = grounding::normalize_point(PixelPoint { x, y }, vp).map_err(value_err)?;
    Ok((p.x, p.y))
}

/// Action-space point back to viewport pixels.
#[pyfunction]
fn denormalize_point(x: u16, y: u16, width: u32, height: u32) -> PyResult<(f64, f64)> {
    if x > 1000 || y > 1000 {
        return Err(value_err(format!("({x}, {y}) is outside the 1000x1000 space")));
    }
    let vp = Viewport::new(width, height).map_err(value_err)?;
    let p = grounding::denormalize_point(NormPoint { x, y }, vp).map_err(value_err)?;
    Ok((p.x, p.y))
}

/// Parses one agent action and returns it in canonical form.
/// Raises ValueError for anything the grammar rejects.
#[pyfunction]
fn parse_action(text: &str) -> PyResult<String> {
    core_parse_action(text).map(|a| a.to_string()).map_err(value_err)
}

/// Replays a fixture directory offline and returns a summary dict.
/// `report_json` holds the full machine-readable report.
#[pyfunction]
#[pyo3(signature = (fixture_dir, out_dir, config = "config.toml"))]
fn replay<'py>(py: Python<'py>, fixture_dir: PathBuf, out_dir: PathBuf, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = Config::load(fixture_dir.join(config)).map_err(run_err)?;
    let outcome = py.detach(|| run_config(&cfg, &out_dir)).map_err(run_err)?;
    let r = &outcome.report;
    let d = PyDict::new(py);
    d.set_item("status", &r.outcome.status)?;
    d.set_item("reason", &r.outcome.reason)?;
    d.set_item("exit_code", outcome.exit_code())?;
    d.set_item("steps", r.outcome.steps)?;
    d.set_item("seq", r.seq.trajectory.iter().map(|&v| v as u32).collect::<Vec<_>>())?;
    d.set_item("seq_mean", r.seq.mean)?;
    d.set_item("friction_steps", r.seq.friction_steps.clone())?;
    d.set_item("sus", r.sus.score)?;
    d.set_item("grade", r.sus.grade.label())?;
    d.set_item("session_path", outcome.session_path.to_string_lossy().into_owned())?;
    d.set_item("report_json", r.to_json())?;
    Ok(d)
}

/// Recomputes a session log's metrics and lists any drift from stored values.
#[pyfunction]
#[pyo3(signature = (session_path, salvage = false))]
fn score_session<'py>(py: Python<'py>, session_path: PathBuf, salvage: bool) -> PyResult<Bound<'py, PyDict>> {
    let mode = if salvage { LoadMode::Salvage } else { LoadMode::Strict };
    let log = load_session(&session_path, mode).map_err(run_err)?.log;
    let audit = audit_session(&log).map_err(run_err)?;
    let d = PyDict::new(py);
    d.set_item("steps", log.records.len())?;
    d.set_item("seq_mean", audit.seq.mean)?;
    d.set_item("friction_steps", audit.seq.friction_steps.clone())?;
    d.set_item("good_experience", audit.seq.good_experience)?;
    match &audit.sus {
        Some((score, grade, mode)) => {
            d.set_item("sus", score.value())?;
            d.set_item("grade", grade.label())?;
            d.set_item("sus_mode", mode)?;
        }
        None => {
            d.set_item("sus", py.None())?;
            d.set_item("grade", py.None())?;
            d.set_item("sus_mode", py.None())?;
        }
    }
    d.set_item("drift", audit.drift)?;
    Ok(d)
}

#[pymodule]
fn uxprobe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("UxprobeError", m.py().get_type::<UxprobeError>())?;
    m.add("SUS_ITEMS", metrics::SUS_ITEM_COUNT)?;
    m.add_function(wrap_pyfunction!(compute_sus, m)?)?;
    m.add_function(wrap_pyfunction!(grade_sus, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_range, m)?)?;
    m.add_function(wrap_pyfunction!(grade_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_seq, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_point, m)?)?;
    m.add_function(wrap_pyfunction!(denormalize_point, m)?)?;
    m.add_function(wrap_pyfunction!(parse_action, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(score_session, m)?)?;
    Ok(())
}
