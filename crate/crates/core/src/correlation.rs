//! Correlation-spectroscopy signal: two phase-accumulation blocks separated
//! by a free delay `t`, read out as NV population.
//!
//! The phase-to-population mapping of the XY8 blocks is folded into
//! `amplitude`; what remains is the delay dependence
//!
//! ```text
//! S(t) = amplitude · cos(2π f t) · exp(−t/T₁) · C_bath(t)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::Result;
use crate::model::{join, require, Issue, NvSensor, Validate};
use crate::sampling::SamplingPlan;
use crate::spectral::TimeSeries;

/// Bath correlation envelope sampled on a grid, linearly interpolated and
/// held at the last value beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TabulatedEnvelope {
    pub t_us: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedEnvelope {
    pub fn at(&self, t_us: f64) -> f64 {
        let t = &self.t_us;
        if t_us <= t[0] {
            return self.values[0];
        }
        let i = t.partition_point(|&x| x <= t_us);
        if i >= t.len() {
            return self.values[t.len() - 1];
        }
        let (t0, t1) = (t[i - 1], t[i]);
        let w = (t_us - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

impl From<&TimeSeries> for TabulatedEnvelope {
    fn from(ts: &TimeSeries) -> Self {
        TabulatedEnvelope {
            t_us: ts.t_us.clone(),
            values: ts.values.clone(),
        }
    }
}

impl Validate for TabulatedEnvelope {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            !self.t_us.is_empty() && self.t_us.len() == self.values.len(),
            path,
            "t_us",
            || "needs at least one point and one value per time".into(),
            issues,
        );
        require(
            self.t_us.windows(2).all(|w| w[1] > w[0]),
            path,
            "t_us",
            || "must be strictly increasing".into(),
            issues,
        );
        require(
            self.values.iter().all(|v| v.is_finite() && v.abs() <= 1.0),
            path,
            "values",
            || "must be finite and within [-1, 1]".into(),
            issues,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CorrelationConfig {
    pub sensor: NvSensor,
    pub signal_freq_hz: f64,
    /// Bath 1/e correlation time in µs; `None` is an ideal generator signal.
    #[serde(default)]
    pub bath_decay_us: Option<f64>,
    /// Replaces the exponential bath envelope when present.
    #[serde(default)]
    pub bath_envelope: Option<TabulatedEnvelope>,
    pub amplitude: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CorrelationConfig {
    pub fn ideal(sensor: NvSensor, signal_freq_hz: f64, amplitude: f64) -> Self {
        CorrelationConfig {
            sensor,
            signal_freq_hz,
            bath_decay_us: None,
            bath_envelope: None,
            amplitude,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn bath_correlation(&self, t_us: f64) -> f64 {
        if let Some(env) = &self.bath_envelope {
            return env.at(t_us);
        }
        match self.bath_decay_us {
            Some(tau) => (-t_us / tau).exp(),
            None => 1.0,
        }
    }

    /// `amplitude · exp(−t/T₁) · C_bath(t)`.
    pub fn envelope(&self, t_us: f64) -> f64 {
        self.amplitude * (-t_us / self.sensor.t1_us()).exp() * self.bath_correlation(t_us)
    }
}

impl Validate for CorrelationConfig {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.sensor.check(&join(path, "sensor"), issues);
        require(
            self.signal_freq_hz.is_finite() && self.signal_freq_hz > 0.0,
            path,
            "signal_freq_hz",
            || format!("must be > 0, got {}", self.signal_freq_hz),
            issues,
        );
        require(
            (0.0..=1.0).contains(&self.amplitude),
            path,
            "amplitude",
            || format!("must lie in [0, 1], got {}", self.amplitude),
            issues,
        );
        require(
            self.noise_sigma.is_finite() && self.noise_sigma >= 0.0,
            path,
            "noise_sigma",
            || format!("must be >= 0, got {}", self.noise_sigma),
            issues,
        );
        if let Some(tau) = self.bath_decay_us {
            require(
                tau > 0.0,
                path,
                "bath_decay_us",
                || format!("must be > 0 (omit for no bath decay), got {tau}"),
                issues,
            );
        }
        if let Some(env) = &self.bath_envelope {
            env.check(&join(path, "bath_envelope"), issues);
        }
    }
}

/// Noise-free population signal after a delay of `t_us`.
pub fn correlation_signal(cfg: &CorrelationConfig, t_us: f64) -> f64 {
    let phase = 2.0 * PI * cfg.signal_freq_hz * t_us * 1e-6;
    phase.cos() * cfg.envelope(t_us)
}

/// Samples [`correlation_signal`] at the plan's instants and adds seeded
/// Gaussian readout noise.
pub fn synthesize_timeseries(cfg: &CorrelationConfig, plan: &SamplingPlan) -> Result<TimeSeries> {
    cfg.validate()?;
    plan.validate()?;
    let t = plan.sample_times_us();
    let mut values: Vec<f64> = t.iter().map(|&ti| correlation_signal(cfg, ti)).collect();
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    TimeSeries::new(t, values)
}
