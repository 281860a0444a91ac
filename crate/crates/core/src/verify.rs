//! The certification battery: every acceptance check in one deterministic run.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::construction::{sample_y, CSequence, DonStoppedLaw, StoppedSummary, ThresholdSample};
use crate::diagnostics::{
    analytic_sweep, bias_budget, checkpoint_mean, h1_norm_truncated, sandwich_check, stopped_truncated_sup_exact,
    raw_truncated_sup_exact, tail_probability, terminal_mean_truncated, truncated_sup_mean, TailPoint, Targets,
};
use crate::ensemble::{par_map, simulate_batch, simulate_ensemble, Batch, ThresholdRule};
use crate::error::Result;
use crate::models::{
    enumerate_don, inverse_bessel_mean, DoubleOrNothingParams, InverseBessel3Params, Model, ModelKind,
};
use crate::paths::{Ensemble, PathStats, PathSummary};
use crate::report::{num, raw_csv, report_tables, stopped_csv, Csv, ReportLayout, ReportTables, SeedNamespace, Stage};
use crate::seed::derive_seed;
use crate::stats::{binomial_se, MeanEstimate};

pub const NS_DOOB: u64 = 0x444f_4f42_0000_0001;
pub const NS_LADDER: u64 = 0x444f_4f42_0000_0002;
pub const NS_Y: u64 = 0x594c_4157_0000_0001;
pub const NS_STOPPED: u64 = 0x5354_4f50_0000_0001;
pub const NS_DON: u64 = 0x444f_4e00_0000_0001;

/// Deliberate defects for mutation testing of the battery itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// `c_0 = e` instead of 1.
    MiscodedC0,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub master_seed: u64,
    pub quick: bool,
    pub workers: usize,
    pub n_paths: u64,
    pub y_draws: u64,
    pub sweep_m: u64,
    pub absorb_eps: f64,
    /// Coarse and fine base steps of the bias ladder; the fine one is also the
    /// step of the Doob check.
    pub ladder_steps: [f64; 2],
    pub stopped_step: f64,
    pub don_depth: u32,
    pub tail_levels: u64,
    pub doob_levels: Vec<f64>,
    pub stopped_levels: Vec<u64>,
    pub k_list: Vec<f64>,
    pub y_max_list: Vec<u64>,
    pub don_y_max_list: Vec<u64>,
    pub se_mult: f64,
    pub growth_se_mult: f64,
    /// Extra allowance, in pooled SE, for the ladder budget to shrink.
    pub ladder_slack_se: f64,
    pub tv_max: f64,
    pub plateau_rel: f64,
    pub repro_paths: u64,
    pub fault: Option<Fault>,
}

impl VerifyConfig {
    pub fn full(master_seed: u64) -> Self {
        Self {
            master_seed,
            quick: false,
            workers: 0,
            n_paths: 100_000,
            y_draws: 1_000_000,
            sweep_m: 1_000_000,
            absorb_eps: 1e-4,
            ladder_steps: [1e-2, 1e-3],
            stopped_step: 1e-4,
            don_depth: 20,
            tail_levels: 16,
            doob_levels: vec![2.0, 4.0, 8.0],
            stopped_levels: vec![1, 2, 4, 8],
            k_list: vec![10.0, 100.0, 1000.0],
            y_max_list: vec![1, 4, 32],
            don_y_max_list: vec![1, 4, 32, 1024],
            se_mult: 3.0,
            growth_se_mult: 5.0,
            ladder_slack_se: 0.0,
            tv_max: 0.01,
            plateau_rel: 0.01,
            repro_paths: 500,
            fault: None,
        }
    }

    /// 10^4 paths with widened tolerances.
    pub fn quick(master_seed: u64) -> Self {
        Self {
            quick: true,
            n_paths: 10_000,
            growth_se_mult: 2.0,
            ladder_slack_se: 3.0,
            tv_max: 0.03,
            repro_paths: 200,
            ..Self::full(master_seed)
        }
    }

    pub fn new(master_seed: u64, quick: bool) -> Self {
        if quick {
            Self::quick(master_seed)
        } else {
            Self::full(master_seed)
        }
    }

    fn bessel(&self, step: f64) -> Model {
        Model::InverseBessel(InverseBessel3Params {
            absorb_eps: self.absorb_eps,
            ..InverseBessel3Params::with_step(step)
        })
    }

    fn don(&self) -> Model {
        Model::DoubleOrNothing(DoubleOrNothingParams::with_depth(self.don_depth))
    }

    fn bessel_sequence(&self) -> CSequence {
        let seq = CSequence::inverse_bessel();
        match self.fault {
            Some(Fault::MiscodedC0) => seq.with_c0(E),
            None => seq,
        }
    }

    fn seed(&self, namespace: u64) -> u64 {
        derive_seed(self.master_seed, namespace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub target: f64,
    pub bound: f64,
    pub pass: bool,
    /// Informational checks are reported but do not decide the criterion.
    pub counted: bool,
}

fn check(label: impl Into<String>, value: f64, target: f64, bound: f64, pass: bool) -> Check {
    Check {
        label: label.into(),
        value,
        target,
        bound,
        pass,
        counted: true,
    }
}

fn info(label: impl Into<String>, value: f64, target: f64, bound: f64, pass: bool) -> Check {
    Check {
        counted: false,
        ..check(label, value, target, bound, pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.counted).all(|c| c.pass)
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {} {}: {}",
            self.id,
            self.name,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// The ensembles behind the battery, kept for independent re-checking.
#[derive(Debug, Clone)]
pub struct BatteryEnsembles {
    /// Coarse and fine bias ladder, same seeds.
    pub ladder: Vec<Ensemble<PathSummary>>,
    pub doob: Ensemble<PathSummary>,
    /// Raw, `σ`-stopped and `τ_2`-stopped inverse Bessel paths.
    pub stopped: Batch,
    /// Raw and `σ`-stopped double-or-nothing paths.
    pub jump: Batch,
}

#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub quick: bool,
    pub criteria: Vec<CriterionResult>,
    pub ensembles: BatteryEnsembles,
    pub tables: ReportTables,
    pub stages: Vec<Stage>,
    pub namespaces: Vec<SeedNamespace>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(CriterionResult::passed)
    }

    pub fn criterion(&self, id: u8) -> &CriterionResult {
        self.criteria.iter().find(|c| c.id == id).expect("criterion id")
    }

    pub fn failed(&self) -> Vec<&CriterionResult> {
        self.criteria.iter().filter(|c| !c.passed()).collect()
    }

    pub fn verify_csv(&self) -> Csv {
        let mut csv = Csv::new(crate::report::VERIFY_HEADER);
        for c in &self.criteria {
            for k in &c.checks {
                csv.push(&[
                    c.id.to_string(),
                    format!("\"{}\"", k.label.replace('"', "'")),
                    num(k.value),
                    num(k.target),
                    num(k.bound),
                    k.pass.to_string(),
                    k.counted.to_string(),
                ]);
            }
        }
        csv
    }

    /// Pass/fail table for a terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            writeln!(out, "{}", c.line()).expect("write to string");
            for k in &c.checks {
                let tag = match (k.counted, k.pass) {
                    (true, true) => "ok  ",
                    (true, false) => "FAIL",
                    (false, _) => "info",
                };
                writeln!(
                    out,
                    "    [{tag}] {}: value={} target={} bound={}",
                    k.label,
                    crate::report::sig12(k.value),
                    crate::report::sig12(k.target),
                    crate::report::sig12(k.bound)
                )
                .expect("write to string");
            }
        }
        let verdict = if self.passed() {
            "all criteria passed".to_string()
        } else {
            let ids: Vec<String> = self.failed().iter().map(|c| format!("{} ({})", c.id, c.name)).collect();
            format!("FAILED: criterion {}", ids.join(", criterion "))
        };
        writeln!(out, "{verdict}").expect("write to string");
        out
    }
}

struct Clock {
    stages: Vec<Stage>,
}

impl Clock {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn pooled(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn doob(cfg: &VerifyConfig, ladder: &[Ensemble<PathSummary>], main: &Ensemble<PathSummary>) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    for a in &cfg.doob_levels {
        let exact = 1.0 / a;
        let coarse = tail_probability(&ladder[0], *a)?;
        let fine = tail_probability(&ladder[1], *a)?;
        let b_coarse = bias_budget(exact, coarse.estimate);
        let b_fine = bias_budget(exact, fine.estimate);
        let p = tail_probability(main, *a)?;
        let se = binomial_se(exact, main.len());
        let dev = (p.estimate - exact).abs();
        let tol = cfg.se_mult * se + b_fine;
        checks.push(check(
            format!("a={a}: |P(sup>a) - 1/a| <= 3 SE + budget(dt={})", cfg.ladder_steps[1]),
            dev,
            0.0,
            tol,
            dev <= tol,
        ));
        let slack = cfg.ladder_slack_se * pooled(coarse.se(), fine.se());
        let shrinks = if cfg.ladder_slack_se > 0.0 { b_fine <= b_coarse + slack } else { b_fine < b_coarse };
        checks.push(check(
            format!(
                "a={a}: budget(dt={}) < budget(dt={})",
                cfg.ladder_steps[1], cfg.ladder_steps[0]
            ),
            b_fine,
            b_coarse,
            slack,
            shrinks,
        ));
    }
    Ok(CriterionResult {
        id: 1,
        name: "Doob maximal identity",
        checks,
    })
}

fn y_law(cfg: &VerifyConfig, seq: &CSequence) -> Result<CriterionResult> {
    let seed = cfg.seed(NS_Y);
    // 0: Y = 1, 1: 2 <= Y <= 10, 2: Y > 10.
    let classes = par_map(cfg.y_draws, cfg.workers, |i| {
        Ok(match sample_y(seq, derive_seed(seed, i))? {
            ThresholdSample::Exact(1) => 0u8,
            ThresholdSample::Exact(n) if n <= 10 => 1,
            _ => 2,
        })
    })?;
    let n = classes.len() as f64;
    let p1 = classes.iter().filter(|c| **c == 0).count() as f64 / n;
    let p10 = classes.iter().filter(|c| **c == 2).count() as f64 / n;
    let h10: f64 = (1..=10).map(|k| 1.0 / f64::from(k)).sum();
    let t1 = 1.0 - 1.0 / (E + 1.0).ln();
    let t10 = 1.0 / (E + h10).ln();
    let se1 = binomial_se(t1, classes.len());
    let se10 = binomial_se(t10, classes.len());
    Ok(CriterionResult {
        id: 2,
        name: "Y-distribution law",
        checks: vec![
            check("P(Y = 1) within 3 SE of 1 - 1/ln(e+1)", p1, t1, cfg.se_mult * se1, (p1 - t1).abs() <= cfg.se_mult * se1),
            check(
                "P(Y > 10) within 3 SE of 1/ln(e + H_10)",
                p10,
                t10,
                cfg.se_mult * se10,
                (p10 - t10).abs() <= cfg.se_mult * se10,
            ),
        ],
    })
}

fn stopped_tails(
    cfg: &VerifyConfig,
    seq: &CSequence,
    batch: &Batch,
    don_batch: &Batch,
    don_law: &DonStoppedLaw,
    don_seq: &CSequence,
) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    let raw = &batch.raw;
    let stopped = &batch.stopped[0];
    for n in &cfg.stopped_levels {
        let level = *n as f64;
        let c = seq.c_value(*n)?;
        let exact = 1.0 / (level * c);
        let r: TailPoint = tail_probability(raw, level)?;
        let budget = bias_budget(1.0 / level, r.estimate);
        let s = tail_probability(stopped, level)?;
        checks.push(check(
            format!("n={n}: Wilson CI meets [1/(n c_n) - budget, 1/(n c_n)]"),
            s.estimate,
            exact,
            budget,
            s.ci.intersects(exact - budget, exact),
        ));
        let spread = cfg.se_mult * pooled(s.se(), r.se() / c);
        checks.push(check(
            format!("n={n}: P(sup M^sigma > n) >= P(sup M > n)/c_n - 3 pooled SE"),
            s.estimate,
            r.estimate / c,
            spread,
            s.estimate >= r.estimate / c - spread,
        ));
    }
    for n in &cfg.stopped_levels {
        let level = *n as f64;
        let exact = don_law.sup_tail(don_seq, level)?;
        let s = tail_probability(&don_batch.stopped[0], level)?;
        let tol = cfg.se_mult * binomial_se(exact, don_batch.stopped[0].len());
        checks.push(check(
            format!("jump model n={n}: stopped tail within 3 SE of enumeration"),
            s.estimate,
            exact,
            tol,
            (s.estimate - exact).abs() <= tol,
        ));
    }
    Ok(CriterionResult {
        id: 3,
        name: "Stopped-tail law",
        checks,
    })
}

fn within(label: String, est: &MeanEstimate, target: f64, mult: f64) -> Check {
    let tol = mult * est.se;
    check(label, est.mean, target, tol, (est.mean - target).abs() <= tol)
}

fn preservation(cfg: &VerifyConfig, seq: &CSequence, batch: &Batch, don_batch: &Batch) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    for y in &cfg.y_max_list {
        let est = terminal_mean_truncated(&batch.stopped[0], *y)?;
        let target = 1.0 - 1.0 / seq.c_value(*y)?;
        checks.push(within(
            format!("y_max={y}: truncated terminal mean within 3 SE of 1 - 1/c_y"),
            &est,
            target,
            cfg.se_mult,
        ));
    }
    let terminal = MeanEstimate::from_values(&batch.raw.terminals());
    let limit = 2.0 * cfg.absorb_eps;
    checks.push(check(
        "raw terminal mean <= 2 absorb_eps",
        terminal.mean,
        0.0,
        limit,
        terminal.mean <= limit,
    ));
    let at_one = checkpoint_mean(&batch.raw, 0)?;
    checks.push(within("raw mean at t=1 within 3 SE of 1".into(), &at_one, 1.0, cfg.se_mult));
    let exact = inverse_bessel_mean(1.0);
    let tol = cfg.se_mult * at_one.se;
    checks.push(info(
        "raw mean at t=1 within 3 SE of erf(1/sqrt 2)",
        at_one.mean,
        exact,
        tol,
        (at_one.mean - exact).abs() <= tol,
    ));
    let don_at_one = checkpoint_mean(&don_batch.raw, 0)?;
    let tol = cfg.se_mult * don_at_one.se;
    checks.push(info(
        "jump model raw mean at step 1 within 3 SE of 1",
        don_at_one.mean,
        1.0,
        tol,
        (don_at_one.mean - 1.0).abs() <= tol,
    ));
    Ok(CriterionResult {
        id: 4,
        name: "Martingale preservation",
        checks,
    })
}

fn growth<T: PathStats>(
    cfg: &VerifyConfig,
    what: &str,
    ens: &Ensemble<T>,
    f: fn(&Ensemble<T>, f64) -> Result<MeanEstimate>,
    checks: &mut Vec<Check>,
) -> Result<Vec<MeanEstimate>> {
    let ests = cfg.k_list.iter().map(|k| f(ens, *k)).collect::<Result<Vec<_>>>()?;
    for i in 1..ests.len() {
        let diff = ests[i].mean - ests[i - 1].mean;
        let need = cfg.growth_se_mult * pooled(ests[i].se, ests[i - 1].se);
        checks.push(check(
            format!(
                "{what}: K={} -> K={} grows by more than {} pooled SE",
                cfg.k_list[i - 1], cfg.k_list[i], cfg.growth_se_mult
            ),
            diff,
            0.0,
            need,
            diff > need,
        ));
    }
    Ok(ests)
}

fn h1_failure(cfg: &VerifyConfig, seq: &CSequence, batch: &Batch) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    let sweep = analytic_sweep(ModelKind::InverseBessel, seq, cfg.sweep_m, 1e-12)?;
    checks.push(check(
        format!("sum_(n<=m) 1/(n c_n) >= (e^c_m - e)/c_m for all m <= {}", cfg.sweep_m),
        sweep.min_rel_margin,
        0.0,
        -1e-12,
        sweep.violations == 0,
    ));
    checks.push(info(
        format!("S_m and bound at m = {}", cfg.sweep_m),
        sweep.final_sum,
        sweep.final_bound,
        0.0,
        sweep.final_sum >= sweep.final_bound,
    ));

    let stopped = &batch.stopped[0];
    let sup = growth(cfg, "truncated sup mean", stopped, truncated_sup_mean, &mut checks)?;
    for (i, k) in cfg.k_list.iter().enumerate() {
        let exact = stopped_truncated_sup_exact(seq, *k)?;
        let raw = truncated_sup_mean(&batch.raw, *k)?;
        let budget = bias_budget(raw_truncated_sup_exact(*k), raw.mean);
        let tol = cfg.se_mult * pooled(sup[i].se, raw.se) + budget;
        checks.push(check(
            format!("K={k}: truncated sup mean matches 1 + int_1^K du/(u c_floor(u))"),
            sup[i].mean,
            exact,
            tol,
            (sup[i].mean - exact).abs() <= tol,
        ));
    }
    growth(cfg, "truncated H^1 norm", stopped, h1_norm_truncated, &mut checks)?;

    let control = &batch.stopped[1];
    let last = cfg.k_list.len() - 1;
    let hi = h1_norm_truncated(control, cfg.k_list[last])?;
    let lo = h1_norm_truncated(control, cfg.k_list[last - 1])?;
    let rel = (hi.mean - lo.mean).abs() / lo.mean;
    checks.push(check(
        format!(
            "tau_2 control: truncated H^1 norm changes < {}% from K={} to K={}",
            cfg.plateau_rel * 100.0,
            cfg.k_list[last - 1],
            cfg.k_list[last]
        ),
        rel,
        0.0,
        cfg.plateau_rel,
        rel < cfg.plateau_rel,
    ));
    Ok(CriterionResult {
        id: 5,
        name: "H^1-failure certificates",
        checks,
    })
}

fn tv_distance(observed: impl Iterator<Item = (f64, f64)>, n: f64, law: &[((f64, f64), f64)]) -> f64 {
    let mut emp: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for (s, t) in observed {
        *emp.entry((s.to_bits(), t.to_bits())).or_default() += 1.0 / n;
    }
    let mut exact: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for ((s, t), p) in law {
        *exact.entry((s.to_bits(), t.to_bits())).or_default() += p;
    }
    let mut keys: Vec<_> = emp.keys().chain(exact.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (emp.get(k).copied().unwrap_or(0.0) - exact.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn don_exactness(cfg: &VerifyConfig, don_batch: &Batch, don_law: &DonStoppedLaw, don_seq: &CSequence) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    let e = enumerate_don(cfg.don_depth)?;
    let raw_law: Vec<((f64, f64), f64)> = e.atoms.iter().map(|a| ((a.sup, a.terminal), a.prob)).collect();
    let raw = &don_batch.raw;
    let tv = tv_distance(raw.items.iter().map(|x| (x.sup, x.terminal)), raw.len() as f64, &raw_law);
    checks.push(check(
        format!("TV(empirical (sup, terminal), enumeration at depth {}) <= {}", cfg.don_depth, cfg.tv_max),
        tv,
        0.0,
        cfg.tv_max,
        tv <= cfg.tv_max,
    ));
    let stopped = &don_batch.stopped[0];
    for y in &cfg.don_y_max_list {
        let est = terminal_mean_truncated(stopped, *y)?;
        let exact = don_law.terminal_mean_truncated(don_seq, *y)?;
        checks.push(within(
            format!("y_max={y}: stopped terminal mean within 3 SE of enumeration"),
            &est,
            exact,
            cfg.se_mult,
        ));
    }
    let stopped_law = don_law.sup_terminal_law(don_seq)?;
    let tv = tv_distance(
        stopped.items.iter().map(|x| (x.sup, x.terminal)),
        stopped.len() as f64,
        &stopped_law,
    );
    checks.push(info(
        "TV(stopped empirical, stopped enumeration)",
        tv,
        0.0,
        cfg.tv_max,
        tv <= cfg.tv_max,
    ));
    Ok(CriterionResult {
        id: 6,
        name: "Exactness on the enumerable model",
        checks,
    })
}

fn sandwich(ensembles: &[(&str, Vec<f64>)]) -> Result<CriterionResult> {
    let mut checks = Vec::new();
    for (name, sups) in ensembles {
        let s = sandwich_check(sups)?;
        checks.push(check(
            format!("{name}: tail sum <= mean sup <= 1 + tail sum"),
            s.lower_slack.min(s.upper_slack),
            0.0,
            0.0,
            s.holds,
        ));
    }
    Ok(CriterionResult {
        id: 7,
        name: "Sandwich inequality",
        checks,
    })
}

fn batch_bytes(batch: &Batch) -> String {
    let mut out = raw_csv(&batch.raw).render();
    for s in &batch.stopped {
        out.push_str(&stopped_csv(s).render());
    }
    out
}

fn prefix<T: Clone>(e: &Ensemble<T>, k: u64) -> Ensemble<T> {
    Ensemble {
        master_seed: e.master_seed,
        model_tag: e.model_tag.clone(),
        items: e.items[..k as usize].to_vec(),
    }
}

fn reproducibility(cfg: &VerifyConfig, model: &Model, seq: &CSequence, main: &Batch) -> Result<CriterionResult> {
    let k = cfg.repro_paths.min(cfg.n_paths);
    let rules = [ThresholdRule::Sampled(seq), ThresholdRule::Constant(2)];
    let run = |workers| simulate_batch(model, k, cfg.seed(NS_STOPPED), &rules, workers).map(|b| batch_bytes(&b));
    let one = run(1)?;
    let eight = run(8)?;
    let again = run(1)?;
    let head = batch_bytes(&Batch {
        raw: prefix(&main.raw, k),
        stopped: main.stopped.iter().map(|s| prefix(s, k)).collect(),
    });
    let same = |a: &str, b: &str| if a == b { 1.0 } else { 0.0 };
    Ok(CriterionResult {
        id: 8,
        name: "Reproducibility",
        checks: vec![
            check(format!("first {k} paths: workers 1 and 8 byte-identical"), same(&one, &eight), 1.0, 0.0, one == eight),
            check(format!("first {k} paths: repeated run byte-identical"), same(&one, &again), 1.0, 0.0, one == again),
            check(format!("first {k} paths: identical to the main run"), same(&one, &head), 1.0, 0.0, one == head),
        ],
    })
}

pub fn run_battery(cfg: &VerifyConfig) -> Result<BatteryReport> {
    let mut clock = Clock { stages: Vec::new() };
    let seq = cfg.bessel_sequence();
    let don_seq = CSequence::double_or_nothing();
    let w = cfg.workers;
    let n = cfg.n_paths;

    let ladder = cfg
        .ladder_steps
        .iter()
        .map(|dt| {
            clock.run(&format!("ladder dt={dt}"), || {
                simulate_ensemble(&cfg.bessel(*dt), n, cfg.seed(NS_LADDER), w)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doob_main = clock.run("doob", || {
        simulate_ensemble(&cfg.bessel(cfg.ladder_steps[1]), n, cfg.seed(NS_DOOB), w)
    })?;
    let model = cfg.bessel(cfg.stopped_step);
    let rules = [ThresholdRule::Sampled(&seq), ThresholdRule::Constant(2)];
    let batch = clock.run("stopped", || simulate_batch(&model, n, cfg.seed(NS_STOPPED), &rules, w))?;
    let don_model = cfg.don();
    let don_batch = clock.run("jump model", || {
        simulate_batch(&don_model, n, cfg.seed(NS_DON), &[ThresholdRule::Sampled(&don_seq)], w)
    })?;
    let don_law = DonStoppedLaw::new(&enumerate_don(cfg.don_depth)?, &don_seq)?;

    let mut criteria = Vec::new();
    criteria.push(clock.run("criterion 1", || doob(cfg, &ladder, &doob_main))?);
    criteria.push(clock.run("criterion 2", || y_law(cfg, &seq))?);
    criteria.push(clock.run("criterion 3", || {
        stopped_tails(cfg, &seq, &batch, &don_batch, &don_law, &don_seq)
    })?);
    criteria.push(clock.run("criterion 4", || preservation(cfg, &seq, &batch, &don_batch))?);
    criteria.push(clock.run("criterion 5", || h1_failure(cfg, &seq, &batch))?);
    criteria.push(clock.run("criterion 6", || don_exactness(cfg, &don_batch, &don_law, &don_seq))?);
    let stopped_sups = |e: &Ensemble<StoppedSummary>| e.sups();
    criteria.push(sandwich(&[
        ("ladder coarse", ladder[0].sups()),
        ("ladder fine", ladder[1].sups()),
        ("doob", doob_main.sups()),
        ("raw", batch.raw.sups()),
        ("stopped", stopped_sups(&batch.stopped[0])),
        ("tau_2 control", stopped_sups(&batch.stopped[1])),
        ("jump raw", don_batch.raw.sups()),
        ("jump stopped", stopped_sups(&don_batch.stopped[0])),
    ])?);
    criteria.push(clock.run("criterion 8", || reproducibility(cfg, &model, &seq, &batch))?);

    let targets = Targets::new(&model, &seq)?;
    let checkpoints = model.checkpoint_times();
    let tables = report_tables(
        &batch.raw,
        &batch.stopped[0],
        &[("tau2", &batch.stopped[1])],
        &targets,
        &ReportLayout {
            tail_levels: cfg.tail_levels,
            k_list: &cfg.k_list,
            y_max_list: &cfg.y_max_list,
            checkpoint_times: &checkpoints,
        },
    )?;

    let namespaces = [
        ("doob", NS_DOOB),
        ("ladder", NS_LADDER),
        ("y-law", NS_Y),
        ("stopped", NS_STOPPED),
        ("jump model", NS_DON),
    ]
    .iter()
    .map(|(name, ns)| SeedNamespace {
        name: (*name).to_string(),
        rule: format!("derive_seed(master_seed, {ns:#x}); path i: derive_seed(that, i)"),
        seed: cfg.seed(*ns),
    })
    .collect();

    Ok(BatteryReport {
        quick: cfg.quick,
        criteria,
        ensembles: BatteryEnsembles {
            ladder,
            doob: doob_main,
            stopped: batch,
            jump: don_batch,
        },
        tables,
        stages: clock.stages,
        namespaces,
    })
}
