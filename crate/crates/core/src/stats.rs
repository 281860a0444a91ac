//! Small numerical building blocks shared by the estimators.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn intersects(&self, low: f64, high: f64) -> bool {
        self.low <= high && low <= self.high
    }
}

/// Sample mean with its standard error and a 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Two-pass mean/variance with compensated sums; order-independent up to
    /// the compensation error.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = sum(values.iter().copied()) / n as f64;
        let se = if n > 1 {
            let ss = sum(values.iter().map(|v| (v - mean) * (v - mean)));
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }

    pub fn ci(&self) -> Interval {
        Interval {
            low: self.mean - Z95 * self.se,
            high: self.mean + Z95 * self.se,
        }
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Interval {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // Exact endpoints at the extremes; rounding would otherwise leave them off by 1e-19.
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0).min(p) };
    let high = if successes == trials { 1.0 } else { (center + half).min(1.0).max(p) };
    Interval { low, high }
}

/// Binomial standard error at the estimated proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
