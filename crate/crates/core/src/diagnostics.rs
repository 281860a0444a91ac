//! Ensemble estimators and their exact counterparts.

use serde::Serialize;

use crate::construction::{CSequence, DonStoppedLaw, StoppedSummary};
use crate::error::{Error, Result};
use crate::models::{
    enumerate_don, exact_sup_tail, floor_log2, inverse_bessel_mean, DonEnumeration, Model, ModelKind,
};
use crate::paths::{Ensemble, PathStats, PathSummary};
use crate::stats::{wilson_interval, CompensatedSum, Interval, MeanEstimate, Z95};

/// One tail estimate `P̂(sup > level)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub level: f64,
    pub count: u64,
    pub n_paths: u64,
    pub estimate: f64,
    pub ci: Interval,
}

impl TailPoint {
    fn new(level: f64, count: u64, n_paths: u64) -> Self {
        Self {
            level,
            count,
            n_paths,
            estimate: count as f64 / n_paths as f64,
            ci: wilson_interval(count, n_paths, Z95),
        }
    }

    /// Binomial standard error at the estimate.
    pub fn se(&self) -> f64 {
        crate::stats::binomial_se(self.estimate, self.n_paths as usize)
    }
}

pub fn tail_probability<T: PathStats>(ensemble: &Ensemble<T>, level: f64) -> Result<TailPoint> {
    if ensemble.is_empty() {
        return Err(Error::invalid("tail_probability of an empty ensemble"));
    }
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::invalid(format!("tail level must be positive, got {level}")));
    }
    let count = ensemble.items.iter().filter(|x| x.sup() > level).count() as u64;
    Ok(TailPoint::new(level, count, ensemble.len() as u64))
}

/// Number of integer levels `n >= 1` with `n < s`.
fn levels_below(s: f64) -> u64 {
    if s > 1.0 {
        (s.ceil() - 1.0) as u64
    } else {
        0
    }
}

/// Tail estimates at the integer levels `1..=m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub levels: Vec<u64>,
    pub counts: Vec<u64>,
    pub estimates: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_paths: u64,
}

impl TailTable {
    pub fn from_sups(sups: &[f64], m: u64) -> Result<Self> {
        if sups.is_empty() {
            return Err(Error::invalid("tail table of an empty ensemble"));
        }
        if m == 0 {
            return Err(Error::invalid("tail table needs m >= 1"));
        }
        let m_us = usize::try_from(m).map_err(|_| Error::ResourceLimit(format!("m = {m}")))?;
        let mut hist = vec![0u64; m_us + 1];
        for s in sups {
            hist[levels_below(*s).min(m) as usize] += 1;
        }
        let n_paths = sups.len() as u64;
        let mut counts = vec![0u64; m_us];
        let mut running = hist[m_us];
        for n in (1..=m_us).rev() {
            counts[n - 1] = running;
            running += hist[n - 1];
        }
        let points: Vec<TailPoint> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| TailPoint::new((i + 1) as f64, *c, n_paths))
            .collect();
        Ok(Self {
            levels: (1..=m).collect(),
            estimates: points.iter().map(|p| p.estimate).collect(),
            ci_low: points.iter().map(|p| p.ci.low).collect(),
            ci_high: points.iter().map(|p| p.ci.high).collect(),
            counts,
            n_paths,
        })
    }

    pub fn from_ensemble<T: PathStats>(ensemble: &Ensemble<T>, m: u64) -> Result<Self> {
        Self::from_sups(&ensemble.sups(), m)
    }

    pub fn m(&self) -> u64 {
        self.levels.len() as u64
    }

    /// The plug-in sequence built from these estimates.
    pub fn to_csequence(&self) -> Result<CSequence> {
        CSequence::empirical(self.estimates.clone())
    }
}

/// Partial sums `S_m = Σ_{n<=m} tail(n)`, optionally next to the divergence bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub mode: String,
    pub ms: Vec<u64>,
    pub partial_sums: Vec<f64>,
    pub bounds: Option<Vec<f64>>,
}

impl SeriesReport {
    /// Whether `S_m >= bound(m)` up to a relative tolerance, on every row.
    pub fn dominates_bound(&self, rel_tol: f64) -> Option<bool> {
        self.bounds.as_ref().map(|b| {
            self.partial_sums
                .iter()
                .zip(b)
                .all(|(s, b)| *s >= b * (1.0 - rel_tol))
        })
    }
}

fn partial_sums(terms: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    terms
        .map(|t| {
            acc.add(t);
            acc.value()
        })
        .collect()
}

pub fn tail_series(table: &TailTable, m: u64, seq: Option<&CSequence>) -> Result<SeriesReport> {
    if m == 0 {
        return Err(Error::invalid("series needs m >= 1"));
    }
    if m > table.m() {
        return Err(Error::InsufficientData(format!(
            "tail table covers 1..={}, series up to {m} requested",
            table.m()
        )));
    }
    let bounds = seq
        .map(|s| (1..=m).map(|k| divergence_bound(s, k)).collect::<Result<Vec<_>>>())
        .transpose()?;
    Ok(SeriesReport {
        mode: "empirical".into(),
        ms: (1..=m).collect(),
        partial_sums: partial_sums(table.estimates[..m as usize].iter().copied()),
        bounds,
    })
}

/// The series of exact stopped tails `P(sup M > n)/c_n` with its bound.
pub fn analytic_series(kind: ModelKind, seq: &CSequence, m: u64) -> Result<SeriesReport> {
    if m == 0 {
        return Err(Error::invalid("series needs m >= 1"));
    }
    let terms = (1..=m)
        .map(|n| Ok(exact_sup_tail(kind, n as f64)? / seq.c_value(n)?))
        .collect::<Result<Vec<_>>>()?;
    let bounds = (1..=m).map(|k| divergence_bound(seq, k)).collect::<Result<Vec<_>>>()?;
    Ok(SeriesReport {
        mode: "analytic".into(),
        ms: (1..=m).collect(),
        partial_sums: partial_sums(terms.into_iter()),
        bounds: Some(bounds),
    })
}

/// `(e^{c_m} - e)/c_m`, evaluated as `Σ_{k<=m} P(sup > k) / c_m`.
pub fn divergence_bound(seq: &CSequence, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("divergence bound needs m >= 1"));
    }
    Ok(seq.tail_sum(m)? / seq.c_value(m)?)
}

/// Outcome of the deterministic sweep `S_m >= bound(m)` for `m <= m_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub m_max: u64,
    pub violations: u64,
    pub first_violation: Option<u64>,
    /// Smallest `(S_m - bound)/bound` seen.
    pub min_rel_margin: f64,
    pub final_sum: f64,
    pub final_bound: f64,
}

pub fn analytic_sweep(kind: ModelKind, seq: &CSequence, m_max: u64, rel_tol: f64) -> Result<SweepResult> {
    if m_max == 0 {
        return Err(Error::invalid("sweep needs m_max >= 1"));
    }
    let mut acc = CompensatedSum::new();
    let mut out = SweepResult {
        m_max,
        violations: 0,
        first_violation: None,
        min_rel_margin: f64::INFINITY,
        final_sum: 0.0,
        final_bound: 0.0,
    };
    for m in 1..=m_max {
        let c = seq.c_value(m)?;
        acc.add(exact_sup_tail(kind, m as f64)? / c);
        let s = acc.value();
        let b = seq.tail_sum(m)? / c;
        let margin = (s - b) / b;
        out.min_rel_margin = out.min_rel_margin.min(margin);
        if margin < -rel_tol {
            out.violations += 1;
            out.first_violation.get_or_insert(m);
        }
        out.final_sum = s;
        out.final_bound = b;
    }
    Ok(out)
}

/// Mean of `min(sup, K)`.
pub fn truncated_sup_mean<T: PathStats>(ensemble: &Ensemble<T>, k: f64) -> Result<MeanEstimate> {
    check_cap(ensemble, k)?;
    Ok(MeanEstimate::from_values(
        &ensemble.items.iter().map(|x| x.sup().min(k)).collect::<Vec<_>>(),
    ))
}

/// Mean of `min(sqrt([M]), K)` with the realized quadratic variation.
pub fn h1_norm_truncated<T: PathStats>(ensemble: &Ensemble<T>, k: f64) -> Result<MeanEstimate> {
    check_cap(ensemble, k)?;
    Ok(MeanEstimate::from_values(
        &ensemble.items.iter().map(|x| x.qv().sqrt().min(k)).collect::<Vec<_>>(),
    ))
}

fn check_cap<T>(ensemble: &Ensemble<T>, k: f64) -> Result<()> {
    if ensemble.is_empty() {
        return Err(Error::invalid("estimator on an empty ensemble"));
    }
    if !(k > 0.0) {
        return Err(Error::invalid(format!("cap must be positive, got {k}")));
    }
    Ok(())
}

/// Mean of `terminal · 1{Y <= y_max}`; draws beyond the cap count as `Y > y_max`.
pub fn terminal_mean_truncated(ensemble: &Ensemble<StoppedSummary>, y_max: u64) -> Result<MeanEstimate> {
    if y_max == 0 {
        return Err(Error::invalid("y_max must be at least 1"));
    }
    check_cap(ensemble, 1.0)?;
    Ok(MeanEstimate::from_values(
        &ensemble
            .items
            .iter()
            .map(|x| match x.y_exact() {
                Some(y) if y <= y_max => x.terminal,
                _ => 0.0,
            })
            .collect::<Vec<_>>(),
    ))
}

/// Mean of `terminal · 1{terminal > K}`. Its variance is infinite on the
/// stopped Bessel model, so the CI is indicative only.
pub fn ui_tail<T: PathStats>(ensemble: &Ensemble<T>, k: f64) -> Result<MeanEstimate> {
    if !(k >= 1.0) {
        return Err(Error::invalid(format!("UI cap must be at least 1, got {k}")));
    }
    check_cap(ensemble, k)?;
    Ok(MeanEstimate::from_values(
        &ensemble
            .items
            .iter()
            .map(|x| if x.terminal() > k { x.terminal() } else { 0.0 })
            .collect::<Vec<_>>(),
    ))
}

/// Mean of the value at checkpoint `index` (`E[M_t]`).
pub fn checkpoint_mean(ensemble: &Ensemble<PathSummary>, index: usize) -> Result<MeanEstimate> {
    check_cap(ensemble, 1.0)?;
    let values = ensemble
        .items
        .iter()
        .map(|x| {
            x.checkpoints
                .get(index)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no checkpoint {index}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanEstimate::from_values(&values))
}

/// Layer-cake bracketing `Σ_n F̂(sup > n) <= mean(sup) <= 1 + Σ_n F̂(sup > n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub tail_sum: f64,
    pub mean: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub holds: bool,
}

/// Computed per path, so both slacks are sums of non-negative terms.
pub fn sandwich_check(sups: &[f64]) -> Result<Sandwich> {
    if sups.is_empty() {
        return Err(Error::invalid("sandwich check on an empty ensemble"));
    }
    let n = sups.len() as f64;
    let mut tail = CompensatedSum::new();
    let mut mean = CompensatedSum::new();
    let mut lower = CompensatedSum::new();
    let mut upper = CompensatedSum::new();
    for s in sups {
        let k = levels_below(*s) as f64;
        let frac = s - k;
        tail.add(k);
        mean.add(*s);
        lower.add(frac);
        upper.add(1.0 - frac);
    }
    let lower_slack = lower.value() / n;
    let upper_slack = upper.value() / n;
    Ok(Sandwich {
        tail_sum: tail.value() / n,
        mean: mean.value() / n,
        lower_slack,
        upper_slack,
        holds: lower_slack >= 0.0 && upper_slack >= 0.0,
    })
}

/// One-sided grid bias `max(0, exact - estimate)`.
pub fn bias_budget(exact: f64, estimate: f64) -> f64 {
    (exact - estimate).max(0.0)
}

/// Exact `P(sup M^σ > a)` when `Y` is drawn from `seq`.
///
/// Continuous paths stop at `Y` itself, so the event is `{sup M > a, Y > ⌊a⌋}`.
/// The double-or-nothing process reaches a value above `a` iff it survives
/// `⌊log2 a⌋ + 1` doublings, and is not stopped before iff `Y >= 2^⌊log2 a⌋`.
pub fn stopped_sup_tail(kind: ModelKind, seq: &CSequence, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!("level must be non-negative, got {a}")));
    }
    if a < 1.0 {
        return Ok(1.0);
    }
    let raw = exact_sup_tail(kind, a)?;
    let n = match kind {
        ModelKind::InverseBessel => a.floor(),
        ModelKind::DoubleOrNothing => (floor_log2(a) as f64).exp2() - 1.0,
    };
    if n >= 1.8e19 {
        return Err(Error::ResourceLimit(format!("level {a} beyond the integer range")));
    }
    Ok(raw / seq.c_value(n as u64)?)
}

/// Exact `E[min(sup M^σ, K)]` for the continuous model with `Y` from `seq`:
/// `1 + Σ_k ∫ (1/u)(1/c_k) du` over `[k, k+1) ∩ [1, K]`.
pub fn stopped_truncated_sup_exact(seq: &CSequence, k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("cap must be positive, got {k}")));
    }
    if k <= 1.0 {
        return Ok(k);
    }
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    let top = k.ceil() as u64;
    for j in 1..top {
        let hi = ((j + 1) as f64).min(k);
        acc.add((hi / j as f64).ln() / seq.c_value(j)?);
    }
    Ok(acc.value())
}

/// Exact `E[min(sup M, K)] = 1 + ln K` for the raw continuous model.
pub fn raw_truncated_sup_exact(k: f64) -> f64 {
    if k <= 1.0 {
        k
    } else {
        1.0 + k.ln()
    }
}

/// `E[M^σ_∞ 1{Y <= y_max}] = P(Y <= y_max)` for the continuous model.
pub fn terminal_mean_target(seq: &CSequence, y_max: u64) -> Result<f64> {
    seq.y_range_prob(1, y_max)
}

/// `E[M^σ_∞ 1{M^σ_∞ > K}] = 1/c_K` for the continuous model and integer `K`.
pub fn ui_tail_target(seq: &CSequence, k: u64) -> Result<f64> {
    seq.y_tail(k)
}

/// One row of the uniform-integrability report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiRow {
    pub quantity: String,
    pub cap: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub analytic: Option<f64>,
}

impl UiRow {
    pub fn new(quantity: &str, cap: f64, est: &MeanEstimate, analytic: Option<f64>) -> Self {
        let ci = est.ci();
        Self {
            quantity: quantity.into(),
            cap,
            estimate: est.mean,
            ci_low: ci.low,
            ci_high: ci.high,
            analytic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiReport {
    pub rows: Vec<UiRow>,
}

/// Exact values of every reported quantity, where known, for one model and
/// one c-sequence.
#[derive(Debug, Clone)]
pub struct Targets {
    kind: ModelKind,
    seq: CSequence,
    don: Option<(DonEnumeration, Option<DonStoppedLaw>)>,
}

impl Targets {
    pub fn new(model: &Model, seq: &CSequence) -> Result<Self> {
        let don = match model {
            Model::DoubleOrNothing(p) => {
                let e = enumerate_don(p.max_depth)?;
                // An empirical sequence does not reach 2^max_depth; no stopped law then.
                let law = DonStoppedLaw::new(&e, seq).ok();
                Some((e, law))
            }
            Model::InverseBessel(_) => None,
        };
        Ok(Self {
            kind: model.kind(),
            seq: seq.clone(),
            don,
        })
    }

    pub fn seq(&self) -> &CSequence {
        &self.seq
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    fn don_law(&self) -> Option<&DonStoppedLaw> {
        self.don.as_ref().and_then(|(_, l)| l.as_ref())
    }

    fn don_stopped_atoms(&self) -> Option<Vec<((f64, f64), f64)>> {
        self.don_law().and_then(|l| l.sup_terminal_law(&self.seq).ok())
    }

    /// `P(sup M > a)`.
    pub fn raw_tail(&self, a: f64) -> Option<f64> {
        match &self.don {
            Some((e, _)) => Some(e.sup_tail(a)),
            None => exact_sup_tail(self.kind, a).ok(),
        }
    }

    /// `P(sup M^σ > a)`.
    pub fn stopped_tail(&self, a: f64) -> Option<f64> {
        match &self.don {
            Some(_) => self.don_law()?.sup_tail(&self.seq, a).ok(),
            None => stopped_sup_tail(self.kind, &self.seq, a).ok(),
        }
    }

    /// `E[min(sup M, K)]`.
    pub fn raw_truncated_sup(&self, k: f64) -> Option<f64> {
        match &self.don {
            Some((e, _)) => Some(e.atoms.iter().map(|a| a.prob * a.sup.min(k)).sum()),
            None => Some(raw_truncated_sup_exact(k)),
        }
    }

    /// `E[min(sup M^σ, K)]`.
    pub fn stopped_truncated_sup(&self, k: f64) -> Option<f64> {
        match &self.don {
            Some(_) => Some(self.don_stopped_atoms()?.iter().map(|((s, _), p)| p * s.min(k)).sum()),
            None => stopped_truncated_sup_exact(&self.seq, k).ok(),
        }
    }

    /// `E[M^σ_∞ 1{Y <= y_max}]`.
    pub fn terminal_mean_truncated(&self, y_max: u64) -> Option<f64> {
        match &self.don {
            Some(_) => self.don_law()?.terminal_mean_truncated(&self.seq, y_max).ok(),
            None => terminal_mean_target(&self.seq, y_max).ok(),
        }
    }

    /// `E[M^σ_∞ 1{M^σ_∞ > K}]`.
    pub fn ui_tail(&self, k: f64) -> Option<f64> {
        match &self.don {
            Some(_) => Some(
                self.don_stopped_atoms()?
                    .iter()
                    .filter(|((_, t), _)| *t > k)
                    .map(|((_, t), p)| p * t)
                    .sum(),
            ),
            None if k.fract() == 0.0 && k >= 1.0 => ui_tail_target(&self.seq, k as u64).ok(),
            None => None,
        }
    }

    /// `E[M_t]` of the raw process.
    pub fn raw_mean_at(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::InverseBessel => inverse_bessel_mean(t),
            ModelKind::DoubleOrNothing => 1.0,
        }
    }
}

/// Truncated terminal means per `y_max`, UI tails per `K` (stopped and raw),
/// and `E[M_t]` per checkpoint of the raw ensemble.
pub fn ui_report(
    raw: &Ensemble<PathSummary>,
    stopped: &Ensemble<StoppedSummary>,
    targets: &Targets,
    y_maxes: &[u64],
    ui_caps: &[f64],
    checkpoint_times: &[f64],
) -> Result<UiReport> {
    let mut rows = Vec::new();
    for y in y_maxes {
        let est = terminal_mean_truncated(stopped, *y)?;
        rows.push(UiRow::new("terminal_mean_truncated", *y as f64, &est, targets.terminal_mean_truncated(*y)));
    }
    for k in ui_caps {
        let est = ui_tail(stopped, *k)?;
        rows.push(UiRow::new("ui_tail", *k, &est, targets.ui_tail(*k)));
    }
    for k in ui_caps {
        let est = ui_tail(raw, *k)?;
        rows.push(UiRow::new("raw_ui_tail", *k, &est, Some(0.0)));
    }
    for (i, t) in checkpoint_times.iter().enumerate() {
        let est = checkpoint_mean(raw, i)?;
        rows.push(UiRow::new("raw_mean_at", *t, &est, Some(targets.raw_mean_at(*t))));
    }
    Ok(UiReport { rows })
}
