use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest per-step noise variance after clipping.
pub const MAX_BETA: f64 = 0.999;

/// Discrete variance schedule indexed by step `t` in `1..=T`; `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    s_offset: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub s_offset: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 1000, s_offset: 0.008 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        cosine_schedule(self.steps, self.s_offset)
    }
}

fn cosine_f(t: f64, steps: f64, s: f64) -> f64 {
    (((t / steps + s) / (1.0 + s)) * FRAC_PI_2).cos().powi(2)
}

/// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
/// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, `beta_t = 1 - alpha_bar(t)/alpha_bar(t-1)` clipped
/// to [`MAX_BETA`]. `alpha_bar` is stored as the running product of `1 - beta_t` so the two
/// sequences stay consistent after clipping.
pub fn cosine_schedule(steps: usize, s_offset: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::validation(format!("schedule needs at least 2 steps, got {steps}")));
    }
    if !(s_offset >= 0.0 && s_offset.is_finite()) {
        return Err(Error::validation(format!("invalid cosine offset {s_offset}")));
    }
    let total = steps as f64;
    let f0 = cosine_f(0.0, total, s_offset);
    let mut betas = Vec::with_capacity(steps);
    let mut alpha_bars = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for t in 1..=steps {
        let prev = cosine_f((t - 1) as f64, total, s_offset) / f0;
        let cur = cosine_f(t as f64, total, s_offset) / f0;
        let beta = (1.0 - cur / prev).min(MAX_BETA);
        prod *= 1.0 - beta;
        betas.push(beta);
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { steps, s_offset, betas, alpha_bars })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn s_offset(&self) -> f64 {
        self.s_offset
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::validation(format!("step {t} outside [1, {}]", self.steps)));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Variance of `q(x_{prev} | x_t, x_0)` for a jump from `t` down to `prev < t`.
    pub fn posterior_variance(&self, t: usize, prev: usize) -> f64 {
        let (ab_t, ab_prev) = (self.alpha_bar(t), self.alpha_bar(prev));
        let beta = 1.0 - ab_t / ab_prev;
        beta * (1.0 - ab_prev) / (1.0 - ab_t)
    }

    /// Checks the typed invariants; used by tests and on config load.
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.betas.iter().position(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::validation(format!("beta_{} = {} outside (0, 1)", t + 1, self.betas[t])));
        }
        if let Some(t) = self.alpha_bars.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::validation(format!("alpha_bar not decreasing at step {}", t + 2)));
        }
        Ok(())
    }
}
