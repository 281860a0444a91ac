//! The two built-in non-negative local martingales that are not uniformly
//! integrable, with their exact supremum laws.
//!
//! * Inverse three-dimensional Bessel process `M_t = 1 / |x0 + W_t|` with
//!   `|x0| = 1`. It is continuous, strictly positive, has `M_∞ = 0`, and by
//!   Doob's maximal identity `P(sup M > a) = min(1, 1/a)`.
//! * Double-or-nothing: `M_0 = 1`, each step doubles or drops to 0 with
//!   probability 1/2. `sup M = 2^N` with `P(N >= j) = 2^-j`; every quantity is
//!   enumerable.
//!
//! The Bessel path is sampled with exact Gaussian increments of the underlying
//! 3-D Brownian motion. Under [`Stepping::ScaleAdaptive`] the step at radius `r`
//! is `Δt·r²` while `M >= 1`, so the relative resolution of the grid is the same
//! at every level above the start value; below `M = 1` the step grows further
//! (capped at a relative size of [`FAR_FIELD_REL_STEP`]) until the path is
//! absorbed at `M <= absorb_eps`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{make_uniform_grid, PathKind, SamplePath};
use crate::seed::{stream_rng, Stream};
use crate::stats::CompensatedSum;

/// Cap on `h / r²` once the path is below its start value.
pub const FAR_FIELD_REL_STEP: f64 = 0.05;

pub const DEFAULT_MAX_POINTS: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    InverseBessel,
    #[serde(alias = "don")]
    DoubleOrNothing,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::InverseBessel => "inverse-bessel",
            ModelKind::DoubleOrNothing => "double-or-nothing",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-bessel" | "inverse-bessel3" | "bessel" => Ok(ModelKind::InverseBessel),
            "double-or-nothing" | "don" => Ok(ModelKind::DoubleOrNothing),
            other => Err(Error::invalid(format!("unknown model tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    /// Fixed step on a uniform [`TimeGrid`](crate::paths::TimeGrid) up to the horizon.
    Uniform,
    /// Step `Δt·r²` above the start value, coarsening below it.
    ScaleAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseBessel3Params {
    /// Base step Δt: the step length at `M = 1`.
    pub step: f64,
    pub horizon: f64,
    pub absorb_eps: f64,
    pub start_direction: [f64; 3],
    pub stepping: Stepping,
    /// Times at which the path is forced onto the grid (for `E[M_t]` checks).
    pub checkpoints: Vec<f64>,
    pub max_points: usize,
}

impl Default for InverseBessel3Params {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 1e12,
            absorb_eps: 1e-4,
            start_direction: [1.0, 0.0, 0.0],
            stepping: Stepping::ScaleAdaptive,
            checkpoints: vec![1.0],
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

impl InverseBessel3Params {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.absorb_eps > 0.0 && self.absorb_eps < 1.0) {
            return Err(Error::invalid(format!(
                "absorb_eps must lie in (0, 1), got {}",
                self.absorb_eps
            )));
        }
        let norm = self.start_direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::invalid(format!("start_direction has norm {norm}, expected 1")));
        }
        if self.checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("checkpoints must be finite and non-negative"));
        }
        if self.max_points < 2 {
            return Err(Error::invalid("max_points must be at least 2"));
        }
        Ok(())
    }
}

#[inline]
fn adaptive_step(base: f64, r2: f64) -> f64 {
    if r2 <= 1.0 {
        base * r2
    } else {
        r2 * (base * r2 * r2).min(FAR_FIELD_REL_STEP)
    }
}

pub fn simulate_inverse_bessel3(seed: u64, params: &InverseBessel3Params) -> Result<SamplePath> {
    params.validate()?;
    let grid = match params.stepping {
        Stepping::Uniform => Some(make_uniform_grid(params.horizon, params.step)?),
        Stepping::ScaleAdaptive => None,
    };
    let mut checkpoints = params.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);
    let mut next_cp = checkpoints.iter().position(|c| *c > 0.0).unwrap_or(checkpoints.len());

    let mut rng = stream_rng(seed, Stream::Path);
    let mut x = params.start_direction;
    let mut r2 = 1.0;
    let mut m = 1.0;
    let mut t = 0.0;
    let mut clock = CompensatedSum::new();
    let mut landing = None;
    let mut k: u64 = 0;
    let mut times = vec![0.0];
    let mut values = vec![1.0];
    let mut absorbed_at = None;
    let mut truncated = false;

    loop {
        if m <= params.absorb_eps {
            absorbed_at = Some(values.len() - 1);
            break;
        }
        let at_end = match grid {
            Some(g) => k >= g.n_steps(),
            None => t >= params.horizon,
        };
        if at_end || values.len() >= params.max_points {
            truncated = true;
            break;
        }
        // The increment drives the Brownian step directly; differencing rounded
        // times would lose steps far smaller than one ulp of `t`.
        let h = match grid {
            Some(g) => {
                k += 1;
                g.time(k) - t
            }
            None => {
                let mut h = adaptive_step(params.step, r2);
                if next_cp < checkpoints.len() && t + h >= checkpoints[next_cp] {
                    let cp = checkpoints[next_cp];
                    h = cp - t;
                    landing = Some(cp);
                    while next_cp < checkpoints.len() && checkpoints[next_cp] <= cp {
                        next_cp += 1;
                    }
                }
                h.min(params.horizon - t).max(0.0)
            }
        };
        let sd = h.sqrt();
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xi += sd * z;
        }
        r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        m = 1.0 / r2.sqrt();
        clock.add(h);
        if let Some(cp) = landing.take() {
            clock = CompensatedSum::new();
            clock.add(cp);
        }
        t = match grid {
            Some(g) => g.time(k),
            None => clock.value(),
        };
        times.push(t);
        values.push(m);
    }

    Ok(SamplePath {
        kind: PathKind::ContinuousGrid,
        times,
        values,
        absorbed_at,
        truncated,
        seed_id: seed,
    })
}

/// `E[M_t]` for the inverse Bessel(3) started at 1: `erf(1 / sqrt(2t))`.
///
/// Strictly below 1 for every `t > 0`: the process is a strict local martingale.
pub fn inverse_bessel_mean(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        libm::erf(1.0 / (2.0 * t).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleOrNothingParams {
    pub max_depth: u32,
    /// Step indices at which `E[M_j]` is tracked.
    pub checkpoints: Vec<u32>,
}

impl Default for DoubleOrNothingParams {
    fn default() -> Self {
        Self {
            max_depth: 64,
            checkpoints: vec![1],
        }
    }
}

impl DoubleOrNothingParams {
    pub fn with_depth(max_depth: u32) -> Self {
        Self {
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if self.max_depth > 1000 {
            return Err(Error::ResourceLimit(format!(
                "max_depth {} exceeds 1000",
                self.max_depth
            )));
        }
        Ok(())
    }
}

pub fn simulate_double_or_nothing(seed: u64, params: &DoubleOrNothingParams) -> Result<SamplePath> {
    params.validate()?;
    let mut rng = stream_rng(seed, Stream::Path);
    let mut values = Vec::with_capacity(8);
    values.push(1.0f64);
    let mut absorbed_at = None;
    for step in 1..=params.max_depth as usize {
        if rng.next_u64() >> 63 == 1 {
            values.push(values[step - 1] * 2.0);
        } else {
            values.push(0.0);
            absorbed_at = Some(step);
            break;
        }
    }
    let mut path = SamplePath::from_values(PathKind::DiscreteStep, values, seed)?;
    path.truncated = absorbed_at.is_none();
    path.absorbed_at = absorbed_at;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    InverseBessel(InverseBessel3Params),
    DoubleOrNothing(DoubleOrNothingParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::InverseBessel(_) => ModelKind::InverseBessel,
            Model::DoubleOrNothing(_) => ModelKind::DoubleOrNothing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::InverseBessel(p) => p.validate(),
            Model::DoubleOrNothing(p) => p.validate(),
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<SamplePath> {
        match self {
            Model::InverseBessel(p) => simulate_inverse_bessel3(seed, p),
            Model::DoubleOrNothing(p) => simulate_double_or_nothing(seed, p),
        }
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        match self {
            Model::InverseBessel(p) => p.checkpoints.clone(),
            Model::DoubleOrNothing(p) => p.checkpoints.iter().map(|j| f64::from(*j)).collect(),
        }
    }

    /// Identifier carrying the parameters that determine the law of a path.
    pub fn tag(&self) -> String {
        match self {
            Model::InverseBessel(p) => format!(
                "inverse-bessel(step={},horizon={},absorb_eps={},stepping={:?})",
                p.step, p.horizon, p.absorb_eps, p.stepping
            ),
            Model::DoubleOrNothing(p) => format!("double-or-nothing(max_depth={})", p.max_depth),
        }
    }
}

/// Floor of `log2(a)` for `a >= 1`, exact on integer parts below 2^63.
pub(crate) fn floor_log2(a: f64) -> i64 {
    debug_assert!(a >= 1.0);
    if a < 9.223_372_036_854_775_807e18 {
        63 - i64::from((a.floor() as u64).leading_zeros())
    } else {
        a.log2().floor() as i64
    }
}

/// Exact `P(sup_t M_t > a)`.
///
/// The double-or-nothing law is the untruncated one (`max_depth = ∞`); use
/// [`DonEnumeration::sup_tail`] for a finite depth.
pub fn exact_sup_tail(kind: ModelKind, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!("level must be non-negative, got {a}")));
    }
    Ok(match kind {
        ModelKind::InverseBessel => {
            if a <= 1.0 {
                1.0
            } else {
                1.0 / a
            }
        }
        ModelKind::DoubleOrNothing => {
            if a < 1.0 {
                1.0
            } else {
                (-(floor_log2(a) + 1) as f64).exp2()
            }
        }
    })
}

/// Like [`exact_sup_tail`] but addressed by name, for the CLI.
pub fn exact_sup_tail_by_tag(tag: &str, a: f64) -> Result<f64> {
    exact_sup_tail(tag.parse()?, a)
}

/// One outcome class of the double-or-nothing process up to `max_depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DonAtom {
    /// Number of doublings before the bust (or `max_depth` for the survivor).
    pub doublings: u32,
    pub prob: f64,
    pub sup: f64,
    pub terminal: f64,
    pub survived: bool,
}

/// Complete law of the double-or-nothing process truncated at `max_depth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DonEnumeration {
    pub max_depth: u32,
    pub atoms: Vec<DonAtom>,
}

pub fn enumerate_don(max_depth: u32) -> Result<DonEnumeration> {
    if max_depth == 0 {
        return Err(Error::invalid("max_depth must be at least 1"));
    }
    if max_depth > 64 {
        return Err(Error::ResourceLimit(format!(
            "enumeration depth {max_depth} exceeds 64"
        )));
    }
    let mut atoms: Vec<DonAtom> = (0..max_depth)
        .map(|j| DonAtom {
            doublings: j,
            prob: (-(f64::from(j) + 1.0)).exp2(),
            sup: f64::from(j).exp2(),
            terminal: 0.0,
            survived: false,
        })
        .collect();
    let top = f64::from(max_depth).exp2();
    atoms.push(DonAtom {
        doublings: max_depth,
        prob: 1.0 / top,
        sup: top,
        terminal: top,
        survived: true,
    });
    Ok(DonEnumeration { max_depth, atoms })
}

impl DonEnumeration {
    pub fn total_prob(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    pub fn sup_tail(&self, a: f64) -> f64 {
        self.atoms.iter().filter(|x| x.sup > a).map(|x| x.prob).sum()
    }

    pub fn terminal_mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.terminal).sum()
    }

    /// Law of the process stopped at the first step whose value is strictly
    /// above `level`. Atoms keep their `doublings` label; stopped atoms carry
    /// the stopped value as both sup and terminal.
    pub fn stopped(&self, level: f64) -> Vec<DonAtom> {
        self.atoms
            .iter()
            .map(|atom| {
                // Values visited: 2^0..=2^doublings.
                let first = (0..=atom.doublings).find(|k| f64::from(*k).exp2() > level);
                match first {
                    Some(k) => {
                        let v = f64::from(k).exp2();
                        DonAtom {
                            sup: v,
                            terminal: v,
                            ..*atom
                        }
                    }
                    None => *atom,
                }
            })
            .collect()
    }

    /// `P(M_j = v)` marginals at step `j` as `(value, prob)` pairs.
    pub fn marginal(&self, step: u32) -> Vec<(f64, f64)> {
        let mut alive = 0.0;
        let mut dead = 0.0;
        for a in &self.atoms {
            if a.doublings >= step.min(self.max_depth) {
                alive += a.prob;
            } else {
                dead += a.prob;
            }
        }
        vec![(0.0, dead), (f64::from(step.min(self.max_depth)).exp2(), alive)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{path_sup, path_terminal};

    #[test]
    fn bessel_starts_at_one() {
        let p = InverseBessel3Params::with_step(1e-2);
        for seed in 0..20 {
            let path = simulate_inverse_bessel3(seed, &p).unwrap();
            assert_eq!(path.values[0], 1.0);
            path.validate().unwrap();
        }
    }

    #[test]
    fn bessel_absorbs_and_holds() {
        let p = InverseBessel3Params::with_step(1e-2);
        let path = simulate_inverse_bessel3(3, &p).unwrap();
        let k = path.absorbed_at.expect("absorbed");
        assert_eq!(k, path.len() - 1);
        assert!(path_terminal(&path).unwrap() <= p.absorb_eps);
    }

    #[test]
    fn bessel_keeps_moving_when_steps_fall_below_time_resolution() {
        // This path reaches M ≈ 2e4 around t ≈ 1e6, where Δt·r² is below one ulp of t.
        let p = InverseBessel3Params::with_step(1e-4);
        let path = simulate_inverse_bessel3(3_436_687_663_506_121_232, &p).unwrap();
        assert!(path.absorbed_at.is_some());
        assert!(path.len() < 10_000_000);
        assert!(path.times.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn bessel_hits_checkpoints_exactly() {
        let mut p = InverseBessel3Params::with_step(1e-2);
        p.checkpoints = vec![0.5, 1.0, 2.0];
        let path = simulate_inverse_bessel3(11, &p).unwrap();
        for c in [0.5, 1.0, 2.0] {
            assert!(path.times.contains(&c), "missing checkpoint {c}");
        }
    }

    #[test]
    fn uniform_stepping_stays_on_grid() {
        let p = InverseBessel3Params {
            step: 0.01,
            horizon: 2.0,
            stepping: Stepping::Uniform,
            ..InverseBessel3Params::default()
        };
        let path = simulate_inverse_bessel3(5, &p).unwrap();
        for (k, t) in path.times.iter().enumerate() {
            assert_eq!(*t, k as f64 * 0.01);
        }
        assert!(path.truncated || path.absorbed_at.is_some());
    }

    #[test]
    fn uniform_stepping_respects_grid_limit() {
        let p = InverseBessel3Params {
            stepping: Stepping::Uniform,
            ..InverseBessel3Params::default()
        };
        assert!(matches!(simulate_inverse_bessel3(0, &p), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = InverseBessel3Params::default();
        p.start_direction = [1.0, 1.0, 0.0];
        assert!(p.validate().is_err());
        let mut p = InverseBessel3Params::default();
        p.absorb_eps = 1.0;
        assert!(p.validate().is_err());
        assert!(DoubleOrNothingParams::with_depth(0).validate().is_err());
    }

    #[test]
    fn don_paths_are_powers_of_two_then_zero() {
        let p = DoubleOrNothingParams::default();
        for seed in 0..200 {
            let path = simulate_double_or_nothing(seed, &p).unwrap();
            let k = path.absorbed_at.unwrap();
            for (j, v) in path.values[..k].iter().enumerate() {
                assert_eq!(*v, (j as f64).exp2());
            }
            assert_eq!(path.values[k], 0.0);
        }
    }

    #[test]
    fn don_truncates_at_depth() {
        let p = DoubleOrNothingParams::with_depth(1);
        let mut survivors = 0;
        for seed in 0..100 {
            let path = simulate_double_or_nothing(seed, &p).unwrap();
            assert!(path.len() == 2);
            if path.truncated {
                survivors += 1;
                assert_eq!(path_sup(&path).unwrap(), 2.0);
            }
        }
        assert!(survivors > 20 && survivors < 80);
    }

    #[test]
    fn exact_tail_examples() {
        assert_eq!(exact_sup_tail(ModelKind::InverseBessel, 2.0).unwrap(), 0.5);
        assert_eq!(exact_sup_tail(ModelKind::InverseBessel, 0.5).unwrap(), 1.0);
        assert_eq!(exact_sup_tail(ModelKind::InverseBessel, 0.0).unwrap(), 1.0);
        assert_eq!(exact_sup_tail(ModelKind::DoubleOrNothing, 3.0).unwrap(), 0.25);
        assert_eq!(exact_sup_tail(ModelKind::DoubleOrNothing, 1.0).unwrap(), 0.5);
        assert_eq!(exact_sup_tail(ModelKind::DoubleOrNothing, 2.0).unwrap(), 0.25);
        assert_eq!(exact_sup_tail(ModelKind::DoubleOrNothing, 0.99).unwrap(), 1.0);
        assert!(exact_sup_tail(ModelKind::InverseBessel, -1.0).is_err());
        assert!(exact_sup_tail_by_tag("ou-process", 1.0).is_err());
    }

    #[test]
    fn enumeration_depth_two() {
        let e = enumerate_don(2).unwrap();
        let got: Vec<(f64, f64, f64)> = e.atoms.iter().map(|a| (a.prob, a.sup, a.terminal)).collect();
        assert_eq!(got, vec![(0.5, 1.0, 0.0), (0.25, 2.0, 0.0), (0.25, 4.0, 4.0)]);
        assert_eq!(e.total_prob(), 1.0);
        assert_eq!(e.terminal_mean(), 1.0);
        assert!(matches!(enumerate_don(65), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn enumeration_matches_untruncated_tails_below_depth() {
        let e = enumerate_don(30).unwrap();
        for a in [0.0, 0.5, 1.0, 2.0, 3.0, 7.5, 1000.0] {
            assert_eq!(e.sup_tail(a), exact_sup_tail(ModelKind::DoubleOrNothing, a).unwrap());
        }
    }

    #[test]
    fn enumeration_stopped_is_mean_preserving() {
        let e = enumerate_don(12).unwrap();
        for y in [1.0, 2.0, 3.0, 100.0, 5000.0] {
            let law = e.stopped(y);
            let mean: f64 = law.iter().map(|a| a.prob * a.terminal).sum();
            assert_eq!(mean, 1.0, "threshold {y}");
        }
        // Threshold 2: value 2 does not stop, 4 does.
        let law = e.stopped(2.0);
        assert!(law.iter().all(|a| a.sup <= 4.0));
    }

    #[test]
    fn bessel_mean_is_strictly_below_one() {
        assert!((inverse_bessel_mean(1.0) - 0.682_689_492_137_086).abs() < 1e-12);
        assert_eq!(inverse_bessel_mean(0.0), 1.0);
        assert!(inverse_bessel_mean(0.1) < 1.0);
        assert!(inverse_bessel_mean(2.0) < inverse_bessel_mean(1.0));
    }

    #[test]
    fn floor_log2_integers() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(3.999), 1);
        assert_eq!(floor_log2(4.0), 2);
        assert_eq!(floor_log2(1e30), 99);
    }
}
