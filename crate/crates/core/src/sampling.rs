//! Bandpass under-sampling: admissible rate windows, folding and de-aliasing.
//!
//! A band `[f_L, f_H]` sampled at `fs` maps without overlap onto `[0, fs/2]`
//! when, for a fold index `n ≥ 1`,
//!
//! ```text
//! 2·f_H / n  ≤  fs  ≤  2·f_L / (n − 1)
//! ```
//!
//! `n = 1` is ordinary Nyquist sampling with no upper bound.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{require, Issue, Validate};

/// Absolute tolerance for frequency comparisons in validation, Hz.
pub const FREQ_TOL_HZ: f64 = 1e-3;

/// Closed interval of admissible sampling rates, Hz. `high_hz` is infinite
/// for fold index 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RateInterval {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl RateInterval {
    pub fn contains(&self, fs_hz: f64) -> bool {
        fs_hz >= self.low_hz - FREQ_TOL_HZ && fs_hz <= self.high_hz + FREQ_TOL_HZ
    }
}

/// Largest usable fold index for a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum FoldLimit {
    Finite(u32),
    /// Zero bandwidth: every fold index is feasible.
    Unbounded,
}

fn check_band(f_low_hz: f64, f_high_hz: f64) -> Result<()> {
    if !(f_low_hz.is_finite() && f_high_hz.is_finite() && f_low_hz > 0.0) {
        return Err(Error::Domain(format!(
            "band edges must be finite and > 0, got [{f_low_hz}, {f_high_hz}]"
        )));
    }
    if f_high_hz < f_low_hz {
        return Err(Error::Domain(format!(
            "f_high ({f_high_hz}) must not be below f_low ({f_low_hz})"
        )));
    }
    Ok(())
}

/// Largest `n` with `2·f_H/n ≤ 2·f_L/(n−1)`, i.e. `floor(f_H / (f_H − f_L))`.
pub fn max_fold_index(f_low_hz: f64, f_high_hz: f64) -> Result<FoldLimit> {
    check_band(f_low_hz, f_high_hz)?;
    let bw = f_high_hz - f_low_hz;
    if bw <= 0.0 {
        return Ok(FoldLimit::Unbounded);
    }
    let ratio = f_high_hz / bw;
    if ratio >= u32::MAX as f64 {
        return Ok(FoldLimit::Unbounded);
    }
    // absorb rounding when the ratio is an exact integer
    let mut n = (ratio + 1e-9).floor() as u32;
    while n > 1 && 2.0 * f_high_hz / n as f64 > 2.0 * f_low_hz / (n - 1) as f64 + FREQ_TOL_HZ {
        n -= 1;
    }
    Ok(FoldLimit::Finite(n.max(1)))
}

pub fn valid_rate_interval(f_low_hz: f64, f_high_hz: f64, fold_index: u32) -> Result<RateInterval> {
    check_band(f_low_hz, f_high_hz)?;
    if fold_index == 0 {
        return Err(Error::Domain("fold index must be >= 1".into()));
    }
    let low = 2.0 * f_high_hz / fold_index as f64;
    if fold_index == 1 {
        return Ok(RateInterval {
            low_hz: low,
            high_hz: f64::INFINITY,
        });
    }
    let high = 2.0 * f_low_hz / (fold_index - 1) as f64;
    if low > high + FREQ_TOL_HZ {
        let max = match max_fold_index(f_low_hz, f_high_hz)? {
            FoldLimit::Finite(n) => n,
            FoldLimit::Unbounded => u32::MAX,
        };
        return Err(Error::InfeasibleFold {
            f_low_hz,
            f_high_hz,
            fold_index,
            max_fold_index: max,
        });
    }
    Ok(RateInterval {
        low_hz: low,
        high_hz: high,
    })
}

/// Where a sampled cosine of `f_true_hz` appears in `[0, fs/2]`.
pub fn alias_frequency(f_true_hz: f64, fs_hz: f64) -> f64 {
    let r = f_true_hz - fs_hz * (f_true_hz / fs_hz).round();
    r.abs().min(0.5 * fs_hz)
}

/// All pre-images of `f_folded_hz` inside `[f_low, f_high] ± tol_hz`.
pub fn alias_candidates(
    f_folded_hz: f64,
    fs_hz: f64,
    f_low_hz: f64,
    f_high_hz: f64,
    tol_hz: f64,
) -> Vec<f64> {
    let k_lo = ((f_low_hz - tol_hz) / fs_hz).floor().max(0.0) as u64;
    let k_hi = ((f_high_hz + tol_hz) / fs_hz).ceil() as u64 + 1;
    let mut out: Vec<f64> = Vec::new();
    for k in k_lo..=k_hi {
        let base = k as f64 * fs_hz;
        for cand in [base - f_folded_hz, base + f_folded_hz] {
            if cand >= f_low_hz - tol_hz
                && cand <= f_high_hz + tol_hz
                && out.iter().all(|&c| (c - cand).abs() > tol_hz)
            {
                out.push(cand);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// The unique in-band frequency that folds to `f_folded_hz`.
pub fn unalias(f_folded_hz: f64, fs_hz: f64, f_low_hz: f64, f_high_hz: f64) -> Result<f64> {
    unalias_within(f_folded_hz, fs_hz, f_low_hz, f_high_hz, FREQ_TOL_HZ)
}

/// [`unalias`] with an explicit band tolerance (e.g. one FFT bin when the
/// folded frequency is a spectral estimate).
pub fn unalias_within(
    f_folded_hz: f64,
    fs_hz: f64,
    f_low_hz: f64,
    f_high_hz: f64,
    tol_hz: f64,
) -> Result<f64> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::Domain(format!("fs must be > 0, got {fs_hz}")));
    }
    if !(f_folded_hz >= 0.0 && f_folded_hz <= 0.5 * fs_hz + tol_hz) {
        return Err(Error::Domain(format!(
            "folded frequency {f_folded_hz} outside [0, fs/2 = {}]",
            0.5 * fs_hz
        )));
    }
    let c = alias_candidates(f_folded_hz, fs_hz, f_low_hz, f_high_hz, tol_hz);
    match c.as_slice() {
        [f] => Ok(*f),
        _ => Err(Error::Ambiguous { candidates: c }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SamplingPlan {
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub fold_index: u32,
    pub fs_hz: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub t0_us: f64,
}

impl SamplingPlan {
    pub fn new(
        f_low_hz: f64,
        f_high_hz: f64,
        fold_index: u32,
        fs_hz: f64,
        n_samples: usize,
    ) -> Result<Self> {
        let plan = SamplingPlan {
            f_low_hz,
            f_high_hz,
            fold_index,
            fs_hz,
            n_samples,
            t0_us: 0.0,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Picks the upper edge of the admissible window (`2·f_H` for `n = 1`).
    pub fn upper_edge(
        f_low_hz: f64,
        f_high_hz: f64,
        fold_index: u32,
        n_samples: usize,
    ) -> Result<Self> {
        let iv = valid_rate_interval(f_low_hz, f_high_hz, fold_index)?;
        let fs = if iv.high_hz.is_finite() {
            iv.high_hz
        } else {
            iv.low_hz
        };
        Self::new(f_low_hz, f_high_hz, fold_index, fs, n_samples)
    }

    pub fn interval(&self) -> Result<RateInterval> {
        valid_rate_interval(self.f_low_hz, self.f_high_hz, self.fold_index)
    }

    pub fn dt_us(&self) -> f64 {
        1e6 / self.fs_hz
    }

    pub fn sample_times_us(&self) -> Vec<f64> {
        let dt = self.dt_us();
        (0..self.n_samples)
            .map(|k| self.t0_us + k as f64 * dt)
            .collect()
    }

    pub fn duration_us(&self) -> f64 {
        self.n_samples.saturating_sub(1) as f64 * self.dt_us()
    }

    pub fn alias(&self, f_true_hz: f64) -> f64 {
        alias_frequency(f_true_hz, self.fs_hz)
    }

    pub fn unalias(&self, f_folded_hz: f64) -> Result<f64> {
        unalias(f_folded_hz, self.fs_hz, self.f_low_hz, self.f_high_hz)
    }
}

impl Validate for SamplingPlan {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        let band_ok = self.f_low_hz.is_finite()
            && self.f_high_hz.is_finite()
            && self.f_low_hz > 0.0
            && self.f_low_hz < self.f_high_hz;
        require(
            band_ok,
            path,
            "f_high_hz",
            || {
                format!(
                    "band must satisfy 0 < f_low < f_high, got [{}, {}]",
                    self.f_low_hz, self.f_high_hz
                )
            },
            issues,
        );
        require(
            self.fold_index >= 1,
            path,
            "fold_index",
            || "must be >= 1".into(),
            issues,
        );
        require(
            self.n_samples >= 1,
            path,
            "n_samples",
            || "must be >= 1".into(),
            issues,
        );
        require(
            self.t0_us.is_finite() && self.t0_us >= 0.0,
            path,
            "t0_us",
            || format!("must be >= 0, got {}", self.t0_us),
            issues,
        );
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            issues.push(Issue::new(
                crate::model::join(path, "fs_hz"),
                format!("must be > 0, got {}", self.fs_hz),
            ));
            return;
        }
        if !band_ok || self.fold_index == 0 {
            return;
        }
        match self.interval() {
            Ok(iv) if !iv.contains(self.fs_hz) => issues.push(Issue::new(
                crate::model::join(path, "fs_hz"),
                format!(
                    "{} Hz is outside the admissible window [{}, {}] Hz for fold index {}",
                    self.fs_hz, iv.low_hz, iv.high_hz, self.fold_index
                ),
            )),
            Ok(_) => {}
            Err(e) => issues.push(Issue::new(
                crate::model::join(path, "fold_index"),
                e.to_string(),
            )),
        }
    }
}
