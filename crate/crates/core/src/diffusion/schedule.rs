use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset keeping the signal fraction away from exactly 0 and 1.
pub const SCHEDULE_OFFSET: f64 = 1e-5;

/// Cap on the per-step variance used during ancestral sampling.
pub const MAX_BETA: f64 = 0.999;

/// Polynomial variance-preserving schedule.
///
/// `signal[t]` is the fraction of variance retained from the clean sample,
/// `(1 - 2s)(1 - (t/T)²)² + s`, and `sigma[t]² = 1 - signal[t]`. A noised
/// sample is `√signal[t]·z₀ + sigma[t]·ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub const DEFAULT_STEPS: usize = 100;

    pub fn polynomial(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let s = SCHEDULE_OFFSET;
        let alpha_bar: Vec<f64> = (0..=steps)
            .map(|t| {
                let r = t as f64 / steps as f64;
                (1.0 - 2.0 * s) * (1.0 - r * r).powi(2) + s
            })
            .collect();
        let sigma = alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect();
        Ok(Self { steps, alpha_bar, sigma })
    }

    /// `√alpha_bar[t]`.
    pub fn signal_scale(&self, t: usize) -> f64 {
        self.alpha_bar[t].sqrt()
    }

    /// Per-step variance `1 - alpha_bar[t] / alpha_bar[t-1]`, capped at
    /// [`MAX_BETA`].
    pub fn beta(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t] / self.alpha_bar[t - 1]).clamp(0.0, MAX_BETA)
    }

    /// Posterior variance of step `t → t-1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        self.beta(t) * (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t])
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::Config(format!("timestep {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::polynomial(Self::DEFAULT_STEPS).expect("positive step count")
    }
}
