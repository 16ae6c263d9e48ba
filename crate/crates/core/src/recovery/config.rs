use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective used to score a pseudo label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Variance of the entries outside the exclusion set.
    #[default]
    Variance,
    /// Mean square of the entries outside the exclusion set.
    SquareSum,
    /// `Σ|ŷ_i| - 1`, zero exactly when no entry is negative.
    NegativityPenalty,
}

/// Which search engines [`recover`](super::recover) runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Gradient search first, windowed PSO when it fails.
    #[default]
    GradientThenPso,
    GradientOnly,
    PsoOnly,
}

/// Search hyper-parameters. `initial`, `bound` and `interval` are in units of
/// the feature scale λ (candidate feature `λ·g_r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub initial: f64,
    pub lr: f64,
    pub bound: f64,
    pub iteration: usize,
    pub coe: f64,
    pub pop: usize,
    pub max_iter: usize,
    pub interval: f64,
    pub loss_scale: f64,
    pub threshold: f64,
    pub loss: LossKind,
    /// Size of the exclusion set: 1 for smoothing and one-hot, 2 for mixup.
    pub exclusion_size: usize,
    pub strategy: SearchStrategy,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Polish an accepted λ with quasi-Newton steps until the loss stops
    /// decreasing, and polish each PSO window's best point before testing it
    /// against the threshold.
    pub refine: bool,
    /// Multiplier on the estimated gradient-noise variance that is added to
    /// `threshold` (scaled by `loss_scale`). The estimate is zero up to
    /// rounding for an exact rank-one gradient.
    pub noise_tolerance: f64,
    pub record_trace: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            initial: 1.0,
            lr: 0.5,
            bound: 100.0,
            iteration: 200,
            coe: 4.0,
            pop: 200,
            max_iter: 30,
            interval: 5.0,
            loss_scale: 1000.0,
            threshold: 1e-9,
            loss: LossKind::Variance,
            exclusion_size: 1,
            strategy: SearchStrategy::GradientThenPso,
            inertia: 0.8,
            cognitive: 0.5,
            social: 0.5,
            refine: true,
            noise_tolerance: 1.0,
            record_trace: false,
        }
    }
}

impl RecoveryConfig {
    pub fn for_exclusion(exclusion_size: usize) -> Self {
        Self {
            exclusion_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial.abs() > 0.0) || !(self.bound > self.initial.abs()) {
            return fail("need bound > |initial| > 0");
        }
        if !(self.threshold > 0.0) {
            return fail("threshold must be positive");
        }
        if self.pop == 0 || self.max_iter == 0 || self.iteration == 0 {
            return fail("pop, max_iter and iteration must be at least 1");
        }
        if !(self.interval > 0.0) || !(self.coe > 0.0) || !(self.lr > 0.0) {
            return fail("interval, coe and lr must be positive");
        }
        if !(self.loss_scale > 0.0) {
            return fail("loss_scale must be positive");
        }
        if !(1..=2).contains(&self.exclusion_size) {
            return fail("exclusion_size must be 1 or 2");
        }
        if !(self.noise_tolerance >= 0.0) {
            return fail("noise_tolerance must be non-negative");
        }
        Ok(())
    }
}
