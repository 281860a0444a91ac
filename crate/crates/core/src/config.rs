//! Experiment configuration: one JSON document, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DoubleOrNothingParams, InverseBessel3Params, Model, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CChoice {
    /// Exact tails of the base model.
    ClosedForm,
    /// Tails estimated from an independent pilot ensemble.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub horizon: f64,
    /// Base step Δt.
    pub step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 1e12,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub n_paths: u64,
    pub master_seed: u64,
    pub grid: GridConfig,
    pub absorb_eps: f64,
    pub max_depth: u32,
    pub c_mode: CChoice,
    /// Tail levels `1..=tail_levels` for tables and series.
    pub tail_levels: u64,
    /// Truncation ladder for sup, QV and UI-tail means.
    pub k_list: Vec<f64>,
    pub y_max_list: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::InverseBessel,
            n_paths: 1000,
            master_seed: 20_240_917,
            grid: GridConfig::default(),
            absorb_eps: 1e-4,
            max_depth: 20,
            c_mode: CChoice::ClosedForm,
            tail_levels: 16,
            k_list: vec![10.0, 100.0, 1000.0],
            y_max_list: vec![1, 4, 32],
            out_dir: PathBuf::from("h1gap-out"),
            workers: 0,
        }
    }
}

/// Command-line values; set fields win over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive finite number, got {v}")))
    }
}

fn increasing<T: PartialOrd + Copy>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(field, "must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` if given, applies the overrides and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(n) = o.paths {
            self.n_paths = n;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be at least 1"));
        }
        positive("grid.step", self.grid.step)?;
        positive("grid.horizon", self.grid.horizon)?;
        if self.grid.step > self.grid.horizon {
            return Err(Error::config("grid.step", "must not exceed grid.horizon"));
        }
        positive("absorb_eps", self.absorb_eps)?;
        if self.absorb_eps >= 1.0 {
            return Err(Error::config("absorb_eps", "must be below the start value 1"));
        }
        if self.max_depth == 0 || self.max_depth > 63 {
            return Err(Error::config("max_depth", "must lie in 1..=63"));
        }
        if self.tail_levels == 0 {
            return Err(Error::config("tail_levels", "must be at least 1"));
        }
        increasing("k_list", &self.k_list)?;
        for k in &self.k_list {
            positive("k_list", *k)?;
            if *k < 1.0 {
                return Err(Error::config("k_list", "entries must be at least 1"));
            }
        }
        increasing("y_max_list", &self.y_max_list)?;
        if self.y_max_list[0] == 0 {
            return Err(Error::config("y_max_list", "entries must be at least 1"));
        }
        Ok(())
    }

    pub fn to_model(&self) -> Model {
        match self.model {
            ModelKind::InverseBessel => Model::InverseBessel(InverseBessel3Params {
                step: self.grid.step,
                horizon: self.grid.horizon,
                absorb_eps: self.absorb_eps,
                ..InverseBessel3Params::default()
            }),
            ModelKind::DoubleOrNothing => Model::DoubleOrNothing(DoubleOrNothingParams::with_depth(self.max_depth)),
        }
    }
}
