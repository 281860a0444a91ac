//! Time grids, sample paths and per-path functionals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

/// Largest grid a caller may request without raising the limit explicitly.
pub const DEFAULT_MAX_GRID_STEPS: u64 = 100_000_000;

/// Uniform grid `t_k = k * step` for `k = 0..=ceil(horizon / step)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    n_steps: u64,
}

impl TimeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of steps; there are `n_steps + 1` grid times.
    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn time(&self, k: u64) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }
}

pub fn make_uniform_grid(horizon: f64, step: f64) -> Result<TimeGrid> {
    make_uniform_grid_with_limit(horizon, step, DEFAULT_MAX_GRID_STEPS)
}

pub fn make_uniform_grid_with_limit(horizon: f64, step: f64, max_steps: u64) -> Result<TimeGrid> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let steps = (horizon / step).ceil();
    if steps > max_steps as f64 {
        return Err(Error::ResourceLimit(format!(
            "grid of {steps} steps exceeds the limit of {max_steps}"
        )));
    }
    Ok(TimeGrid {
        horizon,
        step,
        n_steps: steps as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Samples of a continuous-time process; no positive jumps between samples.
    ContinuousGrid,
    /// A discrete-time process; every step may jump.
    DiscreteStep,
}

/// One realized trajectory.
///
/// `times` and `values` have equal length. If `absorbed_at` is set the path is
/// constant from that index on (the simulators stop recording there).
/// `truncated` marks paths cut off by a horizon or depth limit while alive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub kind: PathKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub absorbed_at: Option<usize>,
    pub truncated: bool,
    pub seed_id: u64,
}

impl SamplePath {
    /// A path on integer times `0, 1, 2, ...`.
    pub fn from_values(kind: PathKind, values: Vec<f64>, seed_id: u64) -> Result<Self> {
        let times = (0..values.len()).map(|k| k as f64).collect();
        let path = Self {
            kind,
            times,
            values,
            absorbed_at: None,
            truncated: false,
            seed_id,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("path is empty"));
        }
        if self.times.len() != self.values.len() {
            return Err(Error::invalid("times and values differ in length"));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("path value {v} is negative or NaN")));
        }
        if let Some(k) = self.absorbed_at {
            if k >= self.values.len() {
                return Err(Error::invalid("absorbed_at beyond path end"));
            }
            let held = self.values[k];
            if self.values[k..].iter().any(|v| *v != held) {
                return Err(Error::invalid("path not constant after absorption"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at time `t`: the last recorded value at a time `<= t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|s| *s <= t);
        self.values[idx.saturating_sub(1)]
    }
}

pub(crate) fn sup_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn qv_of(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for w in values.windows(2) {
        let d = w[1] - w[0];
        acc.add(d * d);
    }
    acc.value()
}

/// Grid supremum: the largest recorded value.
pub fn path_sup(path: &SamplePath) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::invalid("path_sup of an empty path"));
    }
    Ok(sup_of(&path.values))
}

/// Last recorded value; a proxy for the limit when the path is absorbed or stopped.
pub fn path_terminal(path: &SamplePath) -> Result<f64> {
    path.values
        .last()
        .copied()
        .ok_or_else(|| Error::invalid("path_terminal of an empty path"))
}

/// Sum of squared consecutive increments.
pub fn realized_qv(path: &SamplePath) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::invalid("realized_qv of an empty path"));
    }
    Ok(qv_of(&path.values))
}

/// Everything the estimators need from one raw path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub seed: u64,
    pub sup: f64,
    pub terminal: f64,
    pub qv: f64,
    pub absorbed: bool,
    pub truncated: bool,
    /// Values at the model's checkpoint times, in order.
    pub checkpoints: Vec<f64>,
    pub n_points: usize,
}

impl PathSummary {
    pub fn of(path_id: u64, path: &SamplePath, checkpoint_times: &[f64]) -> Self {
        Self {
            path_id,
            seed: path.seed_id,
            sup: sup_of(&path.values),
            terminal: *path.values.last().expect("non-empty path"),
            qv: qv_of(&path.values),
            absorbed: path.absorbed_at.is_some(),
            truncated: path.truncated,
            checkpoints: checkpoint_times.iter().map(|t| path.value_at(*t)).collect(),
            n_points: path.len(),
        }
    }
}

/// Access to the three per-path functionals, for raw and stopped summaries alike.
pub trait PathStats {
    fn sup(&self) -> f64;
    fn terminal(&self) -> f64;
    fn qv(&self) -> f64;
}

impl PathStats for PathSummary {
    fn sup(&self) -> f64 {
        self.sup
    }
    fn terminal(&self) -> f64 {
        self.terminal
    }
    fn qv(&self) -> f64 {
        self.qv
    }
}

/// Per-path results of one model run, in path-index order.
///
/// Item `i` derives from `derive_seed(master_seed, i)`, so the content is a pure
/// function of the master seed, the path count and the model parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Ensemble<T> {
    pub master_seed: u64,
    pub model_tag: String,
    pub items: Vec<T>,
}

impl<T> Ensemble<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T: PathStats> Ensemble<T> {
    pub fn sups(&self) -> Vec<f64> {
        self.items.iter().map(PathStats::sup).collect()
    }

    pub fn terminals(&self) -> Vec<f64> {
        self.items.iter().map(PathStats::terminal).collect()
    }

    pub fn qvs(&self) -> Vec<f64> {
        self.items.iter().map(PathStats::qv).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(values: &[f64]) -> SamplePath {
        SamplePath::from_values(PathKind::DiscreteStep, values.to_vec(), 0).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = make_uniform_grid(1.0, 0.5).unwrap();
        assert_eq!(g.times().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        let g = make_uniform_grid(1.0, 0.3).unwrap();
        let t: Vec<f64> = g.times().collect();
        assert_eq!(t.len(), 5);
        for (a, b) in t.iter().zip([0.0, 0.3, 0.6, 0.9, 1.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(make_uniform_grid(1.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_uniform_grid(-1.0, 0.1), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_uniform_grid(1e9, 1e-3), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn sup_examples() {
        assert_eq!(path_sup(&path(&[1.0, 1.5, 0.2])).unwrap(), 1.5);
        assert_eq!(path_sup(&path(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(path_sup(&path(&[1.0, 2.0, 4.0, 0.0])).unwrap(), 4.0);
    }

    #[test]
    fn terminal_examples() {
        let mut p = path(&[1.0, 2.2, 2.2]);
        p.absorbed_at = Some(1);
        p.validate().unwrap();
        assert_eq!(path_terminal(&p).unwrap(), 2.2);
        assert_eq!(path_terminal(&path(&[1.0, 2.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn qv_examples() {
        assert_eq!(realized_qv(&path(&[1.0, 2.0, 0.0])).unwrap(), 5.0);
        assert_eq!(realized_qv(&path(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
        assert!((realized_qv(&path(&[1.0, 1.5, 2.2])).unwrap() - 0.74).abs() < 1e-12);
    }

    #[test]
    fn empty_and_negative_rejected() {
        assert!(SamplePath::from_values(PathKind::DiscreteStep, vec![], 0).is_err());
        assert!(SamplePath::from_values(PathKind::DiscreteStep, vec![1.0, -0.1], 0).is_err());
        let mut p = path(&[1.0, 2.0, 3.0]);
        p.absorbed_at = Some(1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn value_at_uses_last_time_not_after() {
        let p = SamplePath {
            kind: PathKind::ContinuousGrid,
            times: vec![0.0, 0.4, 1.0, 1.7],
            values: vec![1.0, 2.0, 3.0, 4.0],
            absorbed_at: None,
            truncated: false,
            seed_id: 0,
        };
        assert_eq!(p.value_at(0.0), 1.0);
        assert_eq!(p.value_at(0.99), 2.0);
        assert_eq!(p.value_at(1.0), 3.0);
        assert_eq!(p.value_at(10.0), 4.0);
    }
}
