//! CSV readers and writers for datasets, trajectories and run outputs.

use std::path::Path;

use actorsim_core::calibration::EpochRecord;
use actorsim_core::kinetics::STATE_DIM;
use actorsim_core::mdp::{ActionGrid, Dataset, Trajectory, TransitionSample};
use actorsim_core::policy_opt::EpisodeLog;

use crate::config::Arm;
use crate::error::{HarnessError, Result};

/// Shortest round-trip form; empty for missing values.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn strs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn dataset_header() -> Vec<String> {
    let mut h = strs(&["episode", "step"]);
    h.extend((0..STATE_DIM).map(|i| format!("s_{i}")));
    h.extend(strs(&["action_index", "b"]));
    h.extend((0..STATE_DIM).map(|i| format!("sprime_{i}")));
    h
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let rows = data.episodes().into_iter().enumerate().flat_map(|(e, range)| {
        data.samples()[range].iter().enumerate().map(move |(t, s)| {
            let mut r = vec![e.to_string(), t.to_string()];
            r.extend(s.state.iter().copied().map(num));
            r.push(s.action.index.to_string());
            r.push(num(s.action.b));
            r.extend(s.next_state.iter().copied().map(num));
            r
        })
    });
    write_rows(path, &dataset_header(), rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| HarnessError::Config(format!("dataset line {line}: bad value in column {}", i + 1)))
}

/// Reads a dataset; a new episode starts whenever the `episode` column changes.
/// Action indices must agree with `grid`.
pub fn read_dataset(path: &Path, grid: &ActionGrid) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().map(str::trim).ne(dataset_header().iter().map(String::as_str)) {
        return Err(HarnessError::Config(format!("{}: unexpected dataset header", path.display())));
    }
    let mut data = Dataset::new();
    let mut current: Option<u64> = None;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let episode: u64 = field(&rec, 0, line)?;
        if current != Some(episode) {
            data.start_episode();
            current = Some(episode);
        }
        let state = (0..STATE_DIM).map(|i| field(&rec, 2 + i, line)).collect::<Result<Vec<f64>>>()?;
        let index: usize = field(&rec, 2 + STATE_DIM, line)?;
        let b: f64 = field(&rec, 3 + STATE_DIM, line)?;
        let next_state = (0..STATE_DIM).map(|i| field(&rec, 4 + STATE_DIM + i, line)).collect::<Result<Vec<f64>>>()?;
        if index >= grid.len() || (grid.get(index).b - b).abs() > 1e-9 {
            return Err(HarnessError::Config(format!("dataset line {line}: action ({index}, {b}) is not on the grid")));
        }
        data.push(TransitionSample { state, action: grid.get(index), next_state })?;
    }
    if data.is_empty() {
        return Err(HarnessError::Config(format!("{}: dataset is empty", path.display())));
    }
    Ok(data)
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut h = strs(&["episode", "step"]);
    h.extend((0..STATE_DIM).map(|i| format!("s_{i}")));
    h.extend(strs(&["action_index", "b", "reward"]));
    let rows = trajectories.iter().enumerate().flat_map(|(e, tr)| {
        tr.steps.iter().enumerate().map(move |(t, s)| {
            let mut r = vec![e.to_string(), t.to_string()];
            r.extend(s.state.iter().copied().map(num));
            r.extend([s.action.index.to_string(), num(s.action.b), num(s.reward)]);
            r
        })
    });
    write_rows(path, &h, rows)
}

/// One row of the per-iteration metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub replication: usize,
    pub iteration: usize,
    pub arm: Arm,
    /// `||(beta_hat - beta*) / beta*||`.
    pub relative_error: f64,
    /// Estimated value of the current policy on the physical system.
    pub j_estimate: Option<f64>,
    pub j_std_error: Option<f64>,
    /// Negative mean log-likelihood of all data at `beta_hat`.
    pub calibration_loss: f64,
    pub physical_transitions: usize,
    pub degraded: bool,
}

pub const METRICS_HEADER: [&str; 9] = [
    "replication",
    "iteration",
    "arm",
    "relative_error",
    "j_estimate",
    "j_std_error",
    "calibration_loss",
    "physical_transitions",
    "degraded",
];

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let rows = records.iter().map(|m| {
        vec![
            m.replication.to_string(),
            m.iteration.to_string(),
            m.arm.name().to_string(),
            num(m.relative_error),
            opt(m.j_estimate),
            opt(m.j_std_error),
            num(m.calibration_loss),
            m.physical_transitions.to_string(),
            u8::from(m.degraded).to_string(),
        ]
    });
    write_rows(path, &strs(&METRICS_HEADER), rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let optf = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                Some("") => Ok(None),
                _ => field(&rec, i, line).map(Some),
            }
        };
        let arm = rec.get(2).and_then(Arm::parse).ok_or_else(|| HarnessError::Config(format!("metrics line {line}: bad arm")))?;
        out.push(MetricsRecord {
            replication: field(&rec, 0, line)?,
            iteration: field(&rec, 1, line)?,
            arm,
            relative_error: field(&rec, 3, line)?,
            j_estimate: optf(4)?,
            j_std_error: optf(5)?,
            calibration_loss: field(&rec, 6, line)?,
            physical_transitions: field(&rec, 7, line)?,
            degraded: field::<u8>(&rec, 8, line)? != 0,
        });
    }
    Ok(out)
}

pub fn write_fit_diagnostics(path: &Path, rows: &[(usize, EpochRecord)]) -> Result<()> {
    let h = strs(&["iteration", "epoch", "train_ll", "validation_ll", "grad_norm"]);
    let rows = rows.iter().map(|(it, e)| {
        vec![it.to_string(), e.epoch.to_string(), num(e.train_ll), num(e.validation_ll), num(e.grad_norm)]
    });
    write_rows(path, &h, rows)
}

/// Uncertainty scores of one candidate action at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub iteration: usize,
    pub action_index: usize,
    pub weight: f64,
    pub trace: f64,
    pub u: f64,
    pub selected: bool,
}

pub fn write_audit(path: &Path, rows: &[AuditRow]) -> Result<()> {
    let h = strs(&["iteration", "action_index", "w_hat", "trace", "u", "selected"]);
    let rows = rows.iter().map(|a| {
        vec![
            a.iteration.to_string(),
            a.action_index.to_string(),
            num(a.weight),
            num(a.trace),
            num(a.u),
            u8::from(a.selected).to_string(),
        ]
    });
    write_rows(path, &h, rows)
}

pub fn write_training_log(path: &Path, rows: &[(usize, EpisodeLog)]) -> Result<()> {
    let h = strs(&["iteration", "episode", "mean_loss", "epsilon", "penalized_return"]);
    let rows = rows.iter().map(|(it, l)| {
        vec![it.to_string(), l.episode.to_string(), num(l.mean_loss), num(l.epsilon), num(l.penalized_return)]
    });
    write_rows(path, &h, rows)
}
