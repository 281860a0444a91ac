//! Uniformly integrable martingales outside H^1.
//!
//! A non-negative strict local martingale `M` is stopped at the first time it
//! exceeds an independent integer threshold `Y` with `P(Y > n) = 1/c_n`, where
//! `c_n = ln(e + Σ_{k<=n} P(sup M > k))`. The stopped process is a uniformly
//! integrable martingale whose supremum has infinite mean.
//!
//! The crate simulates two base processes (inverse Bessel(3) and a
//! double-or-nothing bet), applies the stopping recipe and checks the results
//! against exact laws.

pub mod config;
pub mod construction;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod models;
pub mod paths;
pub mod report;
pub mod seed;
pub mod stats;
pub mod verify;

pub use construction::{
    first_exceedance, sample_y, stop_path, CMode, CSequence, DonStoppedLaw, StoppedSummary, StoppingRecord,
    ThresholdSample,
};
pub use ensemble::{build_stopped_ensemble, simulate_batch, simulate_ensemble, simulate_paths, Batch, ThresholdRule};
pub use error::{Error, Result};
pub use models::{
    enumerate_don, exact_sup_tail, DoubleOrNothingParams, InverseBessel3Params, Model, ModelKind, Stepping,
};
pub use paths::{Ensemble, PathKind, PathStats, PathSummary, SamplePath};
pub use config::{CChoice, ExperimentConfig, Overrides};
pub use verify::{run_battery, BatteryReport, VerifyConfig};
