//! The stopping recipe: the sequence `c_n = ln(e + Σ_{k<=n} P(sup M > k))`, an
//! independent integer threshold `Y` with `P(Y > n) = 1/c_n`, and the stopped
//! process `M^σ` with `σ = inf{t : M_t > Y}`.
//!
//! `Y` is absurdly heavy-tailed (`P(Y > n) ~ 1/ln ln n` for the Bessel model),
//! so draws above `cap` are kept only as `log2 Y`.

use std::f64::consts::{E, LN_2};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{floor_log2, DonAtom, DonEnumeration, ModelKind};
use crate::paths::{sup_of, PathKind, PathStats, SamplePath};
use crate::seed::{open_unit, stream_rng, Stream};
use crate::stats::CompensatedSum;

pub const DEFAULT_THRESHOLD_CAP: u64 = 1_000_000;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CMode {
    /// Tails `1/k` (Doob's maximal identity): `c_n = ln(e + H_n)`.
    ClosedFormInverseBessel,
    /// Tails `2^-(⌊log2 k⌋+1)` of the untruncated double-or-nothing process.
    ClosedFormDon,
    /// Tails read from an estimated tail table; `tails[k-1] = P(sup > k)`.
    Empirical { tails: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct CSequence {
    mode: CMode,
    cap: u64,
    c0: f64,
    cache: OnceLock<Table>,
}

/// `c_0..=c_N` and the tail sums behind them, where N is `cap` (Bessel) or the
/// table length (empirical).
#[derive(Debug, Clone, Default)]
struct Table {
    c: Vec<f64>,
    s: Vec<f64>,
}

/// `H_n` for large `n` by its asymptotic expansion.
fn harmonic_asymptotic(n: f64) -> f64 {
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n.ln() + EULER_GAMMA + 0.5 * inv - inv2 / 12.0 + inv2 * inv2 / 120.0
}

/// `Σ_{k=1}^n 2^-(⌊log2 k⌋+1)`: each octave `[2^j, 2^{j+1})` contributes 1/2.
fn don_tail_sum(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let j = 63 - n.leading_zeros() as u64;
    let within = n - (1u64 << j) + 1;
    j as f64 * 0.5 + within as f64 * (-(j as f64 + 1.0)).exp2()
}

impl CSequence {
    pub fn inverse_bessel() -> Self {
        Self::new(CMode::ClosedFormInverseBessel)
    }

    pub fn double_or_nothing() -> Self {
        Self::new(CMode::ClosedFormDon)
    }

    pub fn closed_form(kind: ModelKind) -> Self {
        match kind {
            ModelKind::InverseBessel => Self::inverse_bessel(),
            ModelKind::DoubleOrNothing => Self::double_or_nothing(),
        }
    }

    /// Plug-in sequence from estimated tails `P(sup > 1), P(sup > 2), ...`.
    pub fn empirical(tails: Vec<f64>) -> Result<Self> {
        if let Some(p) = tails.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("tail estimate {p} is not a probability")));
        }
        Ok(Self::new(CMode::Empirical { tails }))
    }

    fn new(mode: CMode) -> Self {
        Self {
            mode,
            cap: DEFAULT_THRESHOLD_CAP,
            c0: 1.0,
            cache: OnceLock::new(),
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        assert!(cap >= 1);
        self.cap = cap;
        self.cache = OnceLock::new();
        self
    }

    /// Overrides `c_0`. Only useful for fault injection in tests.
    #[doc(hidden)]
    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self.cache = OnceLock::new();
        self
    }

    pub fn mode(&self) -> &CMode {
        &self.mode
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn label(&self) -> &'static str {
        match self.mode {
            CMode::ClosedFormInverseBessel => "closed-form-inverse-bessel",
            CMode::ClosedFormDon => "closed-form-don",
            CMode::Empirical { .. } => "empirical",
        }
    }

    /// Highest level with a known tail, if limited.
    pub fn coverage(&self) -> Option<u64> {
        match &self.mode {
            CMode::Empirical { tails } => Some(tails.len() as u64),
            _ => None,
        }
    }

    fn table(&self) -> &Table {
        self.cache.get_or_init(|| {
            let tails: Box<dyn Iterator<Item = f64>> = match &self.mode {
                CMode::ClosedFormInverseBessel => Box::new((1..=self.cap).map(|k| 1.0 / k as f64)),
                CMode::ClosedFormDon => Box::new(std::iter::empty()),
                CMode::Empirical { tails } => Box::new(tails.iter().copied()),
            };
            let mut acc = CompensatedSum::new();
            let mut table = Table {
                c: vec![self.c0],
                s: vec![0.0],
            };
            for p in tails {
                acc.add(p);
                let v = acc.value();
                table.s.push(v);
                table.c.push((E + v).ln());
            }
            table
        })
    }

    fn cache(&self) -> &[f64] {
        &self.table().c
    }

    /// `Σ_{k<=n} P(sup M > k)`; equals `e^{c_n} - e` for `n >= 1`.
    pub fn tail_sum(&self, n: u64) -> Result<f64> {
        match &self.mode {
            CMode::ClosedFormInverseBessel => Ok(match self.table().s.get(n as usize) {
                Some(v) => *v,
                None => harmonic_asymptotic(n as f64),
            }),
            CMode::ClosedFormDon => Ok(don_tail_sum(n)),
            CMode::Empirical { tails } => self.table().s.get(n as usize).copied().ok_or_else(|| {
                Error::InsufficientData(format!(
                    "tail table covers levels 1..={}, sum up to {n} requested",
                    tails.len()
                ))
            }),
        }
    }

    /// `c_n`, with `c_0 = 1`.
    pub fn c_value(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(self.c0);
        }
        match &self.mode {
            CMode::ClosedFormInverseBessel => {
                let cache = self.cache();
                Ok(match cache.get(n as usize) {
                    Some(c) => *c,
                    None => (E + harmonic_asymptotic(n as f64)).ln(),
                })
            }
            CMode::ClosedFormDon => Ok((E + don_tail_sum(n)).ln()),
            CMode::Empirical { tails } => self.cache().get(n as usize).copied().ok_or_else(|| {
                Error::InsufficientData(format!(
                    "tail table covers levels 1..={}, c_{n} requested",
                    tails.len()
                ))
            }),
        }
    }

    /// `P(Y > n) = 1/c_n`.
    pub fn y_tail(&self, n: u64) -> Result<f64> {
        Ok(1.0 / self.c_value(n)?)
    }

    /// `P(Y = n) = 1/c_{n-1} - 1/c_n` for `n >= 1`.
    pub fn y_pmf(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.c_value(n - 1)? - 1.0 / self.c_value(n)?)
    }

    /// `P(lo <= Y <= hi)`.
    pub fn y_range_prob(&self, lo: u64, hi: u64) -> Result<f64> {
        if hi < lo || hi == 0 {
            return Ok(0.0);
        }
        let lo = lo.max(1);
        Ok(1.0 / self.c_value(lo - 1)? - 1.0 / self.c_value(hi)?)
    }

    /// Inverse CDF: the smallest `n >= 1` with `P(Y <= n) = 1/c_0 - 1/c_n >= u`.
    pub fn y_quantile(&self, u: f64) -> Result<ThresholdSample> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {u}")));
        }
        let head = 1.0 / self.c0;
        let accepts = |c: f64| head - 1.0 / c >= u;
        // c_n needed to reach level u, for the analytic branches.
        let target_c = 1.0 / (head - u);
        if !(target_c > 0.0 && target_c.is_finite()) {
            return Ok(ThresholdSample::LogMagnitude(f64::INFINITY));
        }
        let target = target_c.exp() - E;
        match &self.mode {
            CMode::ClosedFormInverseBessel | CMode::Empirical { .. } => {
                let cache = self.cache();
                let last = cache.len() - 1;
                if last >= 1 && accepts(cache[last]) {
                    let n = 1 + cache[1..=last].partition_point(|c| !accepts(*c));
                    return Ok(ThresholdSample::Exact(n as u64));
                }
                if let CMode::Empirical { tails } = &self.mode {
                    return Err(Error::InsufficientData(format!(
                        "quantile {u} lies beyond the tail table coverage 1..={}",
                        tails.len()
                    )));
                }
                // H_n >= e^{c} - e with H_n ≈ ln n + γ.
                Ok(ThresholdSample::LogMagnitude((target - EULER_GAMMA) / LN_2))
            }
            CMode::ClosedFormDon => {
                if target.is_infinite() {
                    return Ok(ThresholdSample::LogMagnitude(f64::INFINITY));
                }
                let j = (2.0 * target).floor();
                let frac = target - 0.5 * j;
                if j < 40.0 {
                    let base = (1u64 << j as u64) - 1;
                    let offset = (frac * (j + 1.0).exp2()).ceil() as u64;
                    let mut n = (base + offset).max(1);
                    // Align with the literal condition on the f64 values of c_n.
                    while n > 1 && accepts(self.c_value(n - 1)?) {
                        n -= 1;
                    }
                    while !accepts(self.c_value(n)?) {
                        n += 1;
                    }
                    if n <= self.cap {
                        return Ok(ThresholdSample::Exact(n));
                    }
                    return Ok(ThresholdSample::LogMagnitude((n as f64).log2()));
                }
                Ok(ThresholdSample::LogMagnitude(j + (1.0 + 2.0 * frac).log2()))
            }
        }
    }

    /// Whether `c_n -> ∞`, i.e. `Y` is a proper random variable.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self.mode, CMode::Empirical { .. })
    }
}

/// One draw of `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSample {
    Exact(u64),
    /// `log2 Y` for draws above the cap.
    LogMagnitude(f64),
}

impl ThresholdSample {
    /// Strict exceedance `value > Y`.
    #[inline]
    pub fn exceeded_by(&self, value: f64) -> bool {
        match *self {
            ThresholdSample::Exact(n) => value > n as f64,
            ThresholdSample::LogMagnitude(l) => value > 0.0 && value.log2() > l,
        }
    }

    /// `Y` as a real number (`+inf` if beyond f64 range).
    pub fn level(&self) -> f64 {
        match *self {
            ThresholdSample::Exact(n) => n as f64,
            ThresholdSample::LogMagnitude(l) => l.exp2(),
        }
    }

    pub fn exact(&self) -> Option<u64> {
        match *self {
            ThresholdSample::Exact(n) => Some(n),
            ThresholdSample::LogMagnitude(_) => None,
        }
    }

    pub fn log2(&self) -> f64 {
        match *self {
            ThresholdSample::Exact(n) => (n as f64).log2(),
            ThresholdSample::LogMagnitude(l) => l,
        }
    }
}

/// Draw `Y` from the threshold stream of `seed`.
pub fn sample_y(seq: &CSequence, seed: u64) -> Result<ThresholdSample> {
    let mut rng = stream_rng(seed, Stream::Threshold);
    seq.y_quantile(open_unit(&mut rng))
}

/// First strict exceedance of a threshold; with a constant integer threshold
/// `n` this is `τ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingRecord {
    pub sigma_index: Option<usize>,
    pub threshold: ThresholdSample,
    pub hit: bool,
}

pub fn first_exceedance(path: &SamplePath, threshold: ThresholdSample) -> Result<StoppingRecord> {
    if path.is_empty() {
        return Err(Error::invalid("first_exceedance on an empty path"));
    }
    let sigma_index = path.values.iter().position(|v| threshold.exceeded_by(*v));
    Ok(StoppingRecord {
        sigma_index,
        threshold,
        hit: sigma_index.is_some(),
    })
}

/// Value held from `sigma_index` on. A continuous path crosses the threshold
/// exactly at `Y`; a discrete path stops at whatever value it jumped to.
fn held_value(path: &SamplePath, record: &StoppingRecord, sigma: usize) -> f64 {
    match path.kind {
        PathKind::ContinuousGrid => record.threshold.level(),
        PathKind::DiscreteStep => path.values[sigma],
    }
}

fn check_record(path: &SamplePath, record: &StoppingRecord) -> Result<()> {
    let mismatch = || Error::invalid("stopping record does not belong to this path");
    match (record.hit, record.sigma_index) {
        (false, None) => {
            if path.values.iter().any(|v| record.threshold.exceeded_by(*v)) {
                return Err(mismatch());
            }
        }
        (true, Some(sigma)) => {
            if sigma >= path.len() || path.values[..sigma].iter().any(|v| record.threshold.exceeded_by(*v)) {
                return Err(mismatch());
            }
            let v = path.values[sigma];
            // A path stopped earlier with the same record holds the crossing value.
            let already_stopped = v == held_value(path, record, sigma);
            if !(record.threshold.exceeded_by(v) || already_stopped) {
                return Err(mismatch());
            }
        }
        _ => return Err(mismatch()),
    }
    Ok(())
}

/// The stopped path `M^σ` on the recorded times.
pub fn stop_path(path: &SamplePath, record: &StoppingRecord) -> Result<SamplePath> {
    path.validate()?;
    check_record(path, record)?;
    let Some(sigma) = record.sigma_index else {
        return Ok(path.clone());
    };
    let hold = held_value(path, record, sigma);
    let mut out = path.clone();
    for v in &mut out.values[sigma..] {
        *v = hold;
    }
    out.absorbed_at = Some(sigma);
    out.truncated = false;
    Ok(out)
}

/// Per-path functionals of a stopped path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedSummary {
    pub path_id: u64,
    pub record: StoppingRecord,
    pub sup: f64,
    pub terminal: f64,
    pub qv: f64,
}

impl PathStats for StoppedSummary {
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

impl StoppedSummary {
    /// Functionals of `stop_path(path, record)` without materializing it.
    /// Bit-identical to computing them on the stopped path.
    pub fn of(path_id: u64, path: &SamplePath, record: &StoppingRecord) -> Self {
        let values = &path.values;
        let (sup, terminal, qv) = match record.sigma_index {
            None => (
                sup_of(values),
                *values.last().expect("non-empty path"),
                crate::paths::qv_of(values),
            ),
            Some(sigma) => {
                let hold = held_value(path, record, sigma);
                let pre = &values[..sigma];
                let mut acc = CompensatedSum::new();
                for w in pre.windows(2) {
                    let d = w[1] - w[0];
                    acc.add(d * d);
                }
                if let Some(last) = pre.last() {
                    let d = hold - last;
                    acc.add(d * d);
                }
                (sup_of(pre).max(hold), hold, acc.value())
            }
        };
        Self {
            path_id,
            record: *record,
            sup,
            terminal,
            qv,
        }
    }

    pub fn y_exact(&self) -> Option<u64> {
        self.record.threshold.exact()
    }
}

/// Exact law of the double-or-nothing process stopped at an independent `Y`
/// drawn from `seq`.
///
/// The stopped law depends on `Y` only through `⌊log2 Y⌋`, so the mixture is
/// over octaves of `Y`, plus one never-hit class for `Y >= 2^max_depth`.
#[derive(Debug, Clone)]
pub struct DonStoppedLaw {
    classes: Vec<DonClass>,
}

#[derive(Debug, Clone)]
struct DonClass {
    lo: u64,
    hi: u64,
    atoms: Vec<DonAtom>,
}

impl DonStoppedLaw {
    pub fn new(enumeration: &DonEnumeration, seq: &CSequence) -> Result<Self> {
        let depth = enumeration.max_depth;
        if depth > 63 {
            return Err(Error::ResourceLimit("stopped enumeration needs max_depth <= 63".into()));
        }
        let mut classes = Vec::with_capacity(depth as usize + 1);
        for k in 0..depth {
            let lo = 1u64 << k;
            classes.push(DonClass {
                lo,
                hi: (lo << 1) - 1,
                atoms: enumeration.stopped(lo as f64),
            });
        }
        classes.push(DonClass {
            lo: 1u64 << depth,
            hi: u64::MAX,
            atoms: enumeration.atoms.clone(),
        });
        // Probabilities are evaluated lazily per query; validate coverage once.
        seq.c_value(classes[classes.len() - 1].lo - 1)?;
        Ok(Self { classes })
    }

    fn weight(seq: &CSequence, lo: u64, hi: u64) -> Result<f64> {
        if hi == u64::MAX {
            return Ok(1.0 / seq.c_value(lo - 1)?);
        }
        seq.y_range_prob(lo, hi)
    }

    /// `P(sup M^σ > n)`.
    pub fn sup_tail(&self, seq: &CSequence, n: f64) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.classes {
            let inner: f64 = c.atoms.iter().filter(|a| a.sup > n).map(|a| a.prob).sum();
            total += Self::weight(seq, c.lo, c.hi)? * inner;
        }
        Ok(total)
    }

    /// `E[M^σ_∞ · 1{Y <= y_max}]`.
    pub fn terminal_mean_truncated(&self, seq: &CSequence, y_max: u64) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.classes {
            if c.lo > y_max {
                break;
            }
            let hi = c.hi.min(y_max);
            let inner: f64 = c.atoms.iter().map(|a| a.prob * a.terminal).sum();
            total += seq.y_range_prob(c.lo, hi)? * inner;
        }
        Ok(total)
    }

    /// Joint law of `(sup, terminal)` of the stopped process, merged by value.
    pub fn sup_terminal_law(&self, seq: &CSequence) -> Result<Vec<((f64, f64), f64)>> {
        let mut out: Vec<((f64, f64), f64)> = Vec::new();
        for c in &self.classes {
            let w = Self::weight(seq, c.lo, c.hi)?;
            for a in &c.atoms {
                let key = (a.sup, a.terminal);
                match out.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, p)) => *p += w * a.prob,
                    None => out.push((key, w * a.prob)),
                }
            }
        }
        Ok(out)
    }
}

/// `⌊log2 n⌋ + 1` for `n >= 1`: the number of doublings needed to exceed `n`.
pub fn doublings_to_exceed(n: f64) -> i64 {
    if n < 1.0 {
        0
    } else {
        floor_log2(n) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{path_sup, path_terminal, realized_qv};

    fn path(kind: PathKind, values: &[f64]) -> SamplePath {
        SamplePath::from_values(kind, values.to_vec(), 0).unwrap()
    }

    #[test]
    fn miscoded_c0_moves_the_first_atom() {
        let bad = CSequence::inverse_bessel().with_cap(1000).with_c0(E);
        assert!(bad.y_pmf(1).unwrap() < 0.0);
        assert_ne!(bad.y_quantile(0.1).unwrap(), ThresholdSample::Exact(1));
    }

    #[test]
    fn c_examples() {
        let seq = CSequence::inverse_bessel();
        assert_eq!(seq.c_value(0).unwrap(), 1.0);
        assert!((seq.c_value(1).unwrap() - (E + 1.0).ln()).abs() < 1e-15);
        let zero = CSequence::empirical(vec![0.0; 10]).unwrap();
        for n in 0..=10 {
            assert_eq!(zero.c_value(n).unwrap(), 1.0);
        }
        assert!(matches!(zero.c_value(11), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn asymptotic_harmonic_continues_cache() {
        let seq = CSequence::inverse_bessel().with_cap(100_000);
        let cached = seq.c_value(100_000).unwrap();
        let next = seq.c_value(100_001).unwrap();
        let h = (cached.exp() - E) + 1.0 / 100_001.0;
        assert!((next - (E + h).ln()).abs() < 1e-12);
    }

    #[test]
    fn don_tail_sum_matches_direct() {
        let mut s = 0.0;
        for k in 1..=5000u64 {
            s += (-(floor_log2(k as f64) as f64 + 1.0)).exp2();
            assert!((don_tail_sum(k) - s).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn quantile_examples() {
        let seq = CSequence::inverse_bessel();
        assert_eq!(seq.y_quantile(1e-12).unwrap(), ThresholdSample::Exact(1));
        assert_eq!(seq.y_quantile(0.1).unwrap(), ThresholdSample::Exact(1));
        assert_eq!(seq.y_quantile(0.5).unwrap(), ThresholdSample::Exact(60));
        assert!(seq.y_quantile(0.0).is_err());
        assert!(seq.y_quantile(1.0).is_err());
        match seq.y_quantile(0.9).unwrap() {
            ThresholdSample::LogMagnitude(l) => assert!(l > (1e6f64).log2()),
            other => panic!("expected log magnitude, got {other:?}"),
        }
    }

    #[test]
    fn quantile_is_inverse_cdf() {
        for seq in [CSequence::inverse_bessel(), CSequence::double_or_nothing()] {
            for i in 1..2000 {
                let u = i as f64 / 2000.0 * 0.6;
                if let ThresholdSample::Exact(n) = seq.y_quantile(u).unwrap() {
                    assert!(1.0 - 1.0 / seq.c_value(n).unwrap() >= u);
                    assert!(n == 1 || 1.0 - 1.0 / seq.c_value(n - 1).unwrap() < u);
                }
            }
        }
    }

    #[test]
    fn don_quantile_above_cap_lands_in_right_octave() {
        let seq = CSequence::double_or_nothing().with_cap(1000);
        let u: f64 = 0.8;
        let target = (1.0 / (1.0 - u)).exp() - E;
        let j = (2.0 * target).floor();
        match seq.y_quantile(u).unwrap() {
            ThresholdSample::LogMagnitude(l) => assert!(l >= j && l < j + 1.0, "{l} vs {j}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empirical_rejects_beyond_coverage() {
        let seq = CSequence::empirical(vec![1.0, 0.5, 0.33]).unwrap();
        assert_eq!(seq.y_quantile(0.01).unwrap(), ThresholdSample::Exact(1));
        assert!(matches!(seq.y_quantile(0.99), Err(Error::InsufficientData(_))));
        assert!(CSequence::empirical(vec![1.2]).is_err());
    }

    #[test]
    fn exceedance_examples() {
        let p = path(PathKind::ContinuousGrid, &[1.0, 1.5, 2.2, 0.8]);
        let r = first_exceedance(&p, ThresholdSample::Exact(2)).unwrap();
        assert_eq!((r.sigma_index, r.hit), (Some(2), true));
        let r = first_exceedance(&p, ThresholdSample::Exact(5)).unwrap();
        assert_eq!((r.sigma_index, r.hit), (None, false));
        let p = path(PathKind::DiscreteStep, &[1.0, 2.0, 4.0, 0.0]);
        let r = first_exceedance(&p, ThresholdSample::Exact(2)).unwrap();
        assert_eq!(r.sigma_index, Some(2));
        let r = first_exceedance(&p, ThresholdSample::LogMagnitude(25.0)).unwrap();
        assert!(!r.hit);
    }

    #[test]
    fn stop_discrete_holds_jump_value() {
        let p = path(PathKind::DiscreteStep, &[1.0, 1.5, 2.2, 0.8]);
        let r = first_exceedance(&p, ThresholdSample::Exact(2)).unwrap();
        let s = stop_path(&p, &r).unwrap();
        assert_eq!(s.values, vec![1.0, 1.5, 2.2, 2.2]);
        assert_eq!(stop_path(&s, &r).unwrap(), s);
    }

    #[test]
    fn stop_continuous_holds_threshold() {
        let p = path(PathKind::ContinuousGrid, &[1.0, 1.5, 2.2, 0.8]);
        let r = first_exceedance(&p, ThresholdSample::Exact(2)).unwrap();
        let s = stop_path(&p, &r).unwrap();
        assert_eq!(s.values, vec![1.0, 1.5, 2.0, 2.0]);
        assert_eq!(stop_path(&s, &r).unwrap(), s);
    }

    #[test]
    fn stop_never_hit_is_identity() {
        let p = path(PathKind::ContinuousGrid, &[1.0, 1.5, 2.2, 0.8]);
        let r = first_exceedance(&p, ThresholdSample::Exact(5)).unwrap();
        assert_eq!(stop_path(&p, &r).unwrap(), p);
    }

    #[test]
    fn stop_rejects_foreign_record() {
        let p = path(PathKind::ContinuousGrid, &[1.0, 1.5, 2.2, 0.8]);
        let other = path(PathKind::ContinuousGrid, &[1.0, 3.0, 0.5]);
        let r = first_exceedance(&other, ThresholdSample::Exact(2)).unwrap();
        assert!(stop_path(&p, &r).is_err());
        let r = first_exceedance(&other, ThresholdSample::Exact(9)).unwrap();
        let q = path(PathKind::ContinuousGrid, &[1.0, 10.0]);
        assert!(stop_path(&q, &r).is_err());
    }

    #[test]
    fn summary_matches_materialized_stop() {
        for kind in [PathKind::ContinuousGrid, PathKind::DiscreteStep] {
            let p = path(kind, &[1.0, 0.7, 1.9, 3.3, 5.0, 0.2]);
            for y in [1, 2, 3, 7] {
                let r = first_exceedance(&p, ThresholdSample::Exact(y)).unwrap();
                let s = stop_path(&p, &r).unwrap();
                let sum = StoppedSummary::of(0, &p, &r);
                assert_eq!(sum.sup, path_sup(&s).unwrap());
                assert_eq!(sum.terminal, path_terminal(&s).unwrap());
                assert_eq!(sum.qv.to_bits(), realized_qv(&s).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn don_stopped_law_is_a_distribution() {
        let e = crate::models::enumerate_don(10).unwrap();
        let seq = CSequence::double_or_nothing();
        let law = DonStoppedLaw::new(&e, &seq).unwrap();
        let total: f64 = law.sup_terminal_law(&seq).unwrap().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((law.sup_tail(&seq, 0.5).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn doublings() {
        assert_eq!(doublings_to_exceed(1.0), 1);
        assert_eq!(doublings_to_exceed(3.0), 2);
        assert_eq!(doublings_to_exceed(4.0), 3);
    }

    #[test]
    fn extreme_quantiles_saturate() {
        for seq in [CSequence::inverse_bessel(), CSequence::double_or_nothing()] {
            assert_eq!(seq.y_quantile(0.9999).unwrap(), ThresholdSample::LogMagnitude(f64::INFINITY));
            assert!(seq.y_quantile(0.9).unwrap().log2().is_finite());
        }
    }
}
