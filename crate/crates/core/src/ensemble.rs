//! Parallel ensemble generation.
//!
//! Path `i` always uses `derive_seed(master_seed, i)`, and results are collected
//! in index order, so every output is independent of the worker count.

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use crate::construction::{first_exceedance, sample_y, CSequence, StoppedSummary, ThresholdSample};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::paths::{Ensemble, PathSummary, SamplePath};
use crate::seed::derive_seed;

/// Map `f` over `0..n` on a pool of `workers` threads (0 = all cores).
pub fn par_map<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ResourceLimit(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// How the threshold of a stopped ensemble is chosen.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdRule<'a> {
    /// Independent `Y` drawn from the path's threshold stream: `σ`.
    Sampled(&'a CSequence),
    /// Constant level `n`: `τ_n`.
    Constant(u64),
}

impl ThresholdRule<'_> {
    fn threshold(&self, seed: u64) -> Result<ThresholdSample> {
        match self {
            ThresholdRule::Sampled(seq) => sample_y(seq, seed),
            ThresholdRule::Constant(n) => Ok(ThresholdSample::Exact(*n)),
        }
    }
}

/// Raw summaries plus one stopped ensemble per rule, all from the same paths.
#[derive(Debug, Clone)]
pub struct Batch {
    pub raw: Ensemble<PathSummary>,
    pub stopped: Vec<Ensemble<StoppedSummary>>,
}

fn check_count(n_paths: u64) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    Ok(())
}

pub fn simulate_batch(
    model: &Model,
    n_paths: u64,
    master_seed: u64,
    rules: &[ThresholdRule<'_>],
    workers: usize,
) -> Result<Batch> {
    model.validate()?;
    check_count(n_paths)?;
    let checkpoints = model.checkpoint_times();
    let rows = par_map(n_paths, workers, |i| {
        let seed = derive_seed(master_seed, i);
        let path = model.simulate(seed)?;
        let raw = PathSummary::of(i, &path, &checkpoints);
        let stopped = rules
            .iter()
            .map(|rule| {
                let record = first_exceedance(&path, rule.threshold(seed)?)?;
                Ok(StoppedSummary::of(i, &path, &record))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((raw, stopped))
    })?;
    let tag = model.tag();
    let mut stopped: Vec<Vec<StoppedSummary>> = rules.iter().map(|_| Vec::with_capacity(rows.len())).collect();
    let mut raw = Vec::with_capacity(rows.len());
    for (r, s) in rows {
        raw.push(r);
        for (dst, item) in stopped.iter_mut().zip(s) {
            dst.push(item);
        }
    }
    Ok(Batch {
        raw: Ensemble {
            master_seed,
            model_tag: tag.clone(),
            items: raw,
        },
        stopped: stopped
            .into_iter()
            .map(|items| Ensemble {
                master_seed,
                model_tag: tag.clone(),
                items,
            })
            .collect(),
    })
}

pub fn simulate_ensemble(model: &Model, n_paths: u64, master_seed: u64, workers: usize) -> Result<Ensemble<PathSummary>> {
    Ok(simulate_batch(model, n_paths, master_seed, &[], workers)?.raw)
}

/// Raw summaries and the `σ`-stopped ensemble for `seq`.
pub fn build_stopped_ensemble(
    model: &Model,
    n_paths: u64,
    master_seed: u64,
    seq: &CSequence,
    workers: usize,
) -> Result<(Ensemble<PathSummary>, Ensemble<StoppedSummary>)> {
    let mut batch = simulate_batch(model, n_paths, master_seed, &[ThresholdRule::Sampled(seq)], workers)?;
    let stopped = batch.stopped.pop().expect("one rule");
    Ok((batch.raw, stopped))
}

/// Full paths, for `--dump-paths` and tests. Memory grows with path length.
pub fn simulate_paths(model: &Model, n_paths: u64, master_seed: u64, workers: usize) -> Result<Vec<SamplePath>> {
    model.validate()?;
    check_count(n_paths)?;
    par_map(n_paths, workers, |i| model.simulate(derive_seed(master_seed, i)))
}
