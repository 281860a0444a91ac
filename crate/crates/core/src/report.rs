//! Output files and the command implementations behind the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{CChoice, ExperimentConfig};
use crate::construction::{CSequence, StoppedSummary};
use crate::diagnostics::{
    analytic_series, bias_budget, divergence_bound, h1_norm_truncated, stopped_sup_tail, tail_probability,
    tail_series, truncated_sup_mean, ui_report, TailTable, Targets,
};
use crate::ensemble::{build_stopped_ensemble, simulate_batch, simulate_ensemble, simulate_paths, ThresholdRule};
use crate::error::{Error, Result};
use crate::models::{enumerate_don, exact_sup_tail, ModelKind};
use crate::paths::{Ensemble, PathSummary, SamplePath};
use crate::seed::derive_seed;
use crate::verify::{run_battery, BatteryReport, VerifyConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RAW_HEADER: &str = "path_id,seed,sup,terminal,qv,absorbed";
pub const STOPPED_HEADER: &str = "path_id,y_exact,y_log2,hit,sigma_index,stopped_sup,stopped_terminal,stopped_qv";
pub const TAILS_HEADER: &str = "level,estimate,ci_low,ci_high,analytic,bias_budget";
pub const SERIES_HEADER: &str = "mode,m,s_m,bound";
pub const UI_HEADER: &str = "quantity,cap,estimate,ci_low,ci_high,analytic";
pub const H1_HEADER: &str = "quantity,ensemble,cap,estimate,ci_low,ci_high,analytic";
pub const PATHS_HEADER: &str = "path_id,index,time,value";
pub const VERIFY_HEADER: &str = "criterion,check,value,target,bound,pass,counted";

/// Seed offset of the pilot ensemble used for an empirical c-sequence.
pub const PILOT_NAMESPACE: u64 = 0x7069_6c6f_745f_6e73;

/// Shortest decimal that round-trips; independent of locale.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `x` rounded to 12 significant digits, `%g` style.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return num(x);
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        trim_zeros(&format!("{:.*}", (11 - exp) as usize, x))
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: &'static str,
    pub rows: Vec<String>,
}

impl Csv {
    pub fn new(header: &'static str) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, fields: &[String]) {
        self.rows.push(fields.join(","));
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(self.header);
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<String> {
        fs::write(dir.join(name), self.render())?;
        Ok(name.to_string())
    }
}

pub fn raw_csv(ensemble: &Ensemble<PathSummary>) -> Csv {
    let mut csv = Csv::new(RAW_HEADER);
    for x in &ensemble.items {
        csv.push(&[
            x.path_id.to_string(),
            x.seed.to_string(),
            num(x.sup),
            num(x.terminal),
            num(x.qv),
            x.absorbed.to_string(),
        ]);
    }
    csv
}

pub fn stopped_csv(ensemble: &Ensemble<StoppedSummary>) -> Csv {
    let mut csv = Csv::new(STOPPED_HEADER);
    for x in &ensemble.items {
        let (y_exact, y_log2) = match x.y_exact() {
            Some(y) => (y.to_string(), String::new()),
            None => (String::new(), num(x.record.threshold.log2())),
        };
        csv.push(&[
            x.path_id.to_string(),
            y_exact,
            y_log2,
            x.record.hit.to_string(),
            x.record.sigma_index.map(|s| s.to_string()).unwrap_or_default(),
            num(x.sup),
            num(x.terminal),
            num(x.qv),
        ]);
    }
    csv
}

pub fn paths_csv(paths: &[SamplePath]) -> Csv {
    let mut csv = Csv::new(PATHS_HEADER);
    for (id, p) in paths.iter().enumerate() {
        for (i, (t, v)) in p.times.iter().zip(&p.values).enumerate() {
            csv.push(&[id.to_string(), i.to_string(), num(*t), num(*v)]);
        }
    }
    csv
}

/// What the report tables cover.
#[derive(Debug, Clone)]
pub struct ReportLayout<'a> {
    pub tail_levels: u64,
    pub k_list: &'a [f64],
    pub y_max_list: &'a [u64],
    pub checkpoint_times: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    pub tails: Csv,
    pub tails_raw: Csv,
    pub series: Csv,
    pub ui: Csv,
    pub h1: Csv,
}

impl ReportTables {
    pub fn write_all(&self, dir: &Path) -> Result<Vec<String>> {
        Ok(vec![
            self.tails.write(dir, "tails.csv")?,
            self.tails_raw.write(dir, "tails_raw.csv")?,
            self.series.write(dir, "series.csv")?,
            self.ui.write(dir, "ui.csv")?,
            self.h1.write(dir, "h1.csv")?,
        ])
    }
}

/// Tail, series, UI and truncated-norm tables for one raw/stopped pair.
/// `controls` are further stopped ensembles reported in `h1.csv` only.
pub fn report_tables(
    raw: &Ensemble<PathSummary>,
    stopped: &Ensemble<StoppedSummary>,
    controls: &[(&str, &Ensemble<StoppedSummary>)],
    targets: &Targets,
    layout: &ReportLayout<'_>,
) -> Result<ReportTables> {
    let m = layout.tail_levels;
    let mut tails = Csv::new(TAILS_HEADER);
    let mut tails_raw = Csv::new(TAILS_HEADER);
    for n in 1..=m {
        let level = n as f64;
        let r = tail_probability(raw, level)?;
        let s = tail_probability(stopped, level)?;
        let exact_raw = targets.raw_tail(level);
        let budget = exact_raw.map(|e| bias_budget(e, r.estimate));
        for (csv, p, analytic) in [
            (&mut tails, &s, targets.stopped_tail(level)),
            (&mut tails_raw, &r, exact_raw),
        ] {
            csv.push(&[
                n.to_string(),
                num(p.estimate),
                num(p.ci.low),
                num(p.ci.high),
                opt(analytic),
                opt(budget),
            ]);
        }
    }

    let mut series = Csv::new(SERIES_HEADER);
    let seq = targets.seq();
    let kind = targets.kind();
    if seq.is_unbounded() {
        let a = analytic_series(kind, seq, m)?;
        push_series(&mut series, "analytic", &a.ms, &a.partial_sums, a.bounds.as_deref());
    }
    let table = TailTable::from_ensemble(stopped, m)?;
    let bound_seq = seq.coverage().map_or(true, |c| c >= m).then_some(seq);
    let e = tail_series(&table, m, bound_seq)?;
    push_series(&mut series, "empirical", &e.ms, &e.partial_sums, e.bounds.as_deref());

    let mut ui = Csv::new(UI_HEADER);
    let rep = ui_report(raw, stopped, targets, layout.y_max_list, layout.k_list, layout.checkpoint_times)?;
    for r in rep.rows {
        ui.push(&[
            r.quantity,
            num(r.cap),
            num(r.estimate),
            num(r.ci_low),
            num(r.ci_high),
            opt(r.analytic),
        ]);
    }

    let mut h1 = Csv::new(H1_HEADER);
    for k in layout.k_list {
        let row = |q: &str, name: &str, est: crate::stats::MeanEstimate, analytic: Option<f64>| {
            let ci = est.ci();
            vec![
                q.to_string(),
                name.to_string(),
                num(*k),
                num(est.mean),
                num(ci.low),
                num(ci.high),
                opt(analytic),
            ]
        };
        h1.push(&row("truncated_sup_mean", "raw", truncated_sup_mean(raw, *k)?, targets.raw_truncated_sup(*k)));
        h1.push(&row(
            "truncated_sup_mean",
            "stopped",
            truncated_sup_mean(stopped, *k)?,
            targets.stopped_truncated_sup(*k),
        ));
        for (name, c) in controls {
            h1.push(&row("truncated_sup_mean", name, truncated_sup_mean(*c, *k)?, None));
        }
        h1.push(&row("h1_norm_truncated", "raw", h1_norm_truncated(raw, *k)?, None));
        h1.push(&row("h1_norm_truncated", "stopped", h1_norm_truncated(stopped, *k)?, None));
        for (name, c) in controls {
            h1.push(&row("h1_norm_truncated", name, h1_norm_truncated(*c, *k)?, None));
        }
    }

    Ok(ReportTables {
        tails,
        tails_raw,
        series,
        ui,
        h1,
    })
}

fn push_series(csv: &mut Csv, mode: &str, ms: &[u64], sums: &[f64], bounds: Option<&[f64]>) {
    for (i, m) in ms.iter().enumerate() {
        csv.push(&[
            mode.to_string(),
            m.to_string(),
            num(sums[i]),
            opt(bounds.map(|b| b[i])),
        ]);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedNamespace {
    pub name: String,
    pub rule: String,
    pub seed: u64,
}

/// Everything needed to rerun a command and get the same files.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub created_unix_seconds: u64,
    pub stages: Vec<Stage>,
    pub seed_namespaces: Vec<SeedNamespace>,
    pub files: Vec<String>,
}

impl Manifest {
    fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            created_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            stages: Vec::new(),
            seed_namespaces: Vec::new(),
            files: Vec::new(),
        })
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn path_namespaces(&mut self, master: u64) {
        self.seed_namespaces.push(SeedNamespace {
            name: "paths".into(),
            rule: "path i: derive_seed(seed, i), stream 1".into(),
            seed: master,
        });
    }

    fn threshold_namespace(&mut self, master: u64) {
        self.seed_namespaces.push(SeedNamespace {
            name: "thresholds".into(),
            rule: "path i: derive_seed(seed, i), stream 2".into(),
            seed: master,
        });
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.files.push("manifest.json".into());
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn prepare_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// The c-sequence selected by the config; the empirical one comes from an
/// independent pilot ensemble.
pub fn resolve_sequence(cfg: &ExperimentConfig, manifest: Option<&mut Manifest>) -> Result<CSequence> {
    match cfg.c_mode {
        CChoice::ClosedForm => Ok(CSequence::closed_form(cfg.model)),
        CChoice::Empirical => {
            let seed = derive_seed(cfg.master_seed, PILOT_NAMESPACE);
            let pilot = simulate_ensemble(&cfg.to_model(), cfg.n_paths, seed, cfg.workers)?;
            if let Some(m) = manifest {
                m.seed_namespaces.push(SeedNamespace {
                    name: "pilot".into(),
                    rule: "derive_seed(master_seed, PILOT_NAMESPACE), then as paths".into(),
                    seed,
                });
            }
            TailTable::from_ensemble(&pilot, cfg.tail_levels)?.to_csequence()
        }
    }
}

/// Raw per-path summaries to `raw.csv`; full paths to `paths.csv` on request.
pub fn cmd_simulate(cfg: &ExperimentConfig, dump_paths: bool) -> Result<Manifest> {
    cfg.validate()?;
    let dir = prepare_dir(&cfg.out_dir)?;
    let model = cfg.to_model();
    let mut man = Manifest::new("simulate", cfg)?;
    man.path_namespaces(cfg.master_seed);
    let ens = man.time("simulate", || simulate_ensemble(&model, cfg.n_paths, cfg.master_seed, cfg.workers))?;
    man.files.push(raw_csv(&ens).write(&dir, "raw.csv")?);
    if dump_paths {
        let paths = man.time("dump_paths", || simulate_paths(&model, cfg.n_paths, cfg.master_seed, cfg.workers))?;
        man.files.push(paths_csv(&paths).write(&dir, "paths.csv")?);
    }
    man.write(&dir)?;
    Ok(man)
}

/// Stopped ensemble to `stopped.csv`.
pub fn cmd_construct(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dir = prepare_dir(&cfg.out_dir)?;
    let model = cfg.to_model();
    let mut man = Manifest::new("construct", cfg)?;
    man.path_namespaces(cfg.master_seed);
    man.threshold_namespace(cfg.master_seed);
    let seq = resolve_sequence(cfg, Some(&mut man))?;
    let (_, stopped) = man.time("construct", || {
        build_stopped_ensemble(&model, cfg.n_paths, cfg.master_seed, &seq, cfg.workers)
    })?;
    man.files.push(stopped_csv(&stopped).write(&dir, "stopped.csv")?);
    man.write(&dir)?;
    Ok(man)
}

/// Report tables for a freshly generated raw/stopped pair plus the `τ_2` control.
pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dir = prepare_dir(&cfg.out_dir)?;
    let model = cfg.to_model();
    let mut man = Manifest::new("diagnose", cfg)?;
    man.path_namespaces(cfg.master_seed);
    man.threshold_namespace(cfg.master_seed);
    let seq = resolve_sequence(cfg, Some(&mut man))?;
    let rules = [ThresholdRule::Sampled(&seq), ThresholdRule::Constant(2)];
    let batch = man.time("simulate", || simulate_batch(&model, cfg.n_paths, cfg.master_seed, &rules, cfg.workers))?;
    let targets = Targets::new(&model, &seq)?;
    let checkpoints = model.checkpoint_times();
    let layout = ReportLayout {
        tail_levels: cfg.tail_levels,
        k_list: &cfg.k_list,
        y_max_list: &cfg.y_max_list,
        checkpoint_times: &checkpoints,
    };
    let tables = man.time("diagnose", || {
        report_tables(&batch.raw, &batch.stopped[0], &[("tau2", &batch.stopped[1])], &targets, &layout)
    })?;
    man.files.extend(tables.write_all(&dir)?);
    man.write(&dir)?;
    Ok(man)
}

fn parse_arg<T: std::str::FromStr>(args: &[String], i: usize, what: &str) -> Result<T> {
    let raw = args
        .get(i)
        .ok_or_else(|| Error::Usage(format!("missing argument <{what}>")))?;
    raw.parse()
        .map_err(|_| Error::Usage(format!("cannot parse <{what}> from `{raw}`")))
}

pub const ORACLE_QUERIES: &[&str] = &[
    "sup_tail",
    "c",
    "y_pmf",
    "stopped_tail",
    "divergence_bound",
    "enumeration",
    "don_enumeration",
];

/// Exact values, printed with 12 significant digits.
pub fn cmd_oracle(model: &str, query: &str, args: &[String]) -> Result<String> {
    let kind: ModelKind = model.parse().map_err(|_| Error::Usage(format!("unknown model `{model}`")))?;
    let seq = CSequence::closed_form(kind);
    let value = match query {
        "sup_tail" => exact_sup_tail(kind, parse_arg(args, 0, "level")?)?,
        "c" => seq.c_value(parse_arg(args, 0, "n")?)?,
        "y_pmf" => seq.y_pmf(parse_arg(args, 0, "n")?)?,
        "stopped_tail" => stopped_sup_tail(kind, &seq, parse_arg(args, 0, "level")?)?,
        "divergence_bound" => divergence_bound(&seq, parse_arg(args, 0, "m")?)?,
        "enumeration" | "don_enumeration" => {
            let e = enumerate_don(parse_arg(args, 0, "depth")?)?;
            let mut out = String::from("doublings,prob,sup,terminal\n");
            for a in &e.atoms {
                writeln!(out, "{},{},{},{}", a.doublings, sig12(a.prob), sig12(a.sup), sig12(a.terminal))
                    .expect("write to string");
            }
            return Ok(out);
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown oracle query `{other}`; expected one of {}",
                ORACLE_QUERIES.join(", ")
            )))
        }
    };
    Ok(format!("{}\n", sig12(value)))
}

/// Runs the battery and writes `verify.csv`, the report tables and the manifest.
pub fn cmd_verify(vcfg: &VerifyConfig, out_dir: &Path) -> Result<BatteryReport> {
    let dir = prepare_dir(out_dir)?;
    let mut man = Manifest::new("verify", vcfg)?;
    let report = man.time("battery", || run_battery(vcfg))?;
    man.stages.extend(report.stages.iter().cloned());
    man.seed_namespaces.extend(report.namespaces.iter().cloned());
    man.files.push(report.verify_csv().write(&dir, "verify.csv")?);
    man.files.extend(report.tables.write_all(&dir)?);
    man.write(&dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_examples() {
        assert_eq!(sig12(0.5), "0.5");
        assert_eq!(sig12((std::f64::consts::E + 1.0).ln()), "1.31326168752");
        assert_eq!(sig12(1024.0), "1024");
        assert_eq!(sig12(9.999_999_999_999_9), "10");
        assert_eq!(sig12(1.5e-9), "1.5e-9");
        assert_eq!(sig12(0.0), "0");
    }

    #[test]
    fn num_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678, 2.0f64.powi(60)] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(cmd_oracle("inverse-bessel", "sup_tail", &["2".into()]).unwrap(), "0.5\n");
        assert!(cmd_oracle("inverse-bessel", "c", &["1".into()]).unwrap().starts_with("1.313261687"));
        let t = cmd_oracle("don", "enumeration", &["2".into()]).unwrap();
        assert_eq!(t.lines().count(), 4);
        assert!(matches!(cmd_oracle("don", "bogus", &[]), Err(Error::Usage(_))));
        assert!(matches!(cmd_oracle("don", "c", &[]), Err(Error::Usage(_))));
    }
}
