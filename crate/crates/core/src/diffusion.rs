//! Diffusion broadening of nanoscale NMR lines, `Δ = 2D/d²`, and fitting
//! `D` from broadening-versus-depth data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{require, Issue};
use crate::model::{NvSensor, SampleModel, Validate};

/// Minimum detectable broadening of the depth series, Hz.
pub const DEFAULT_FLOOR_HZ: f64 = 5e3;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// How `2D/d²` is turned into Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "lowercase")]
pub enum BroadeningConvention {
    /// `2D/d²` is read directly as an ordinary frequency.
    #[default]
    Ordinary,
    /// `2D/d²` is an angular rate; divided by 2π to get Hz.
    Angular,
}

impl BroadeningConvention {
    fn hz_per_rate(self) -> f64 {
        match self {
            BroadeningConvention::Ordinary => 1e6,
            BroadeningConvention::Angular => 1e6 / (2.0 * PI),
        }
    }
}

/// Broadening in Hz for `D` in nm²/µs at depth `d` nm.
pub fn broadening(diffusion_nm2_per_us: f64, depth_nm: f64) -> Result<f64> {
    broadening_with(
        diffusion_nm2_per_us,
        depth_nm,
        BroadeningConvention::Ordinary,
    )
}

pub fn broadening_with(
    diffusion_nm2_per_us: f64,
    depth_nm: f64,
    convention: BroadeningConvention,
) -> Result<f64> {
    if !(depth_nm.is_finite() && depth_nm > 0.0) {
        return Err(Error::Domain(format!("depth must be > 0, got {depth_nm}")));
    }
    if !(diffusion_nm2_per_us.is_finite() && diffusion_nm2_per_us >= 0.0) {
        return Err(Error::Domain(format!(
            "diffusivity must be >= 0, got {diffusion_nm2_per_us}"
        )));
    }
    Ok(2.0 * diffusion_nm2_per_us / (depth_nm * depth_nm) * convention.hz_per_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DepthBroadeningPoint {
    pub depth_nm: f64,
    pub broadening_hz: f64,
    #[serde(default)]
    pub broadening_err_hz: Option<f64>,
}

impl Validate for DepthBroadeningPoint {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.depth_nm.is_finite() && self.depth_nm > 0.0,
            path,
            "depth_nm",
            || format!("must be > 0, got {}", self.depth_nm),
            issues,
        );
        require(
            self.broadening_hz.is_finite() && self.broadening_hz >= 0.0,
            path,
            "broadening_hz",
            || format!("must be >= 0, got {}", self.broadening_hz),
            issues,
        );
        if let Some(e) = self.broadening_err_hz {
            require(
                e.is_finite() && e > 0.0,
                path,
                "broadening_err_hz",
                || format!("must be > 0 when given, got {e}"),
                issues,
            );
        }
    }
}

/// Treatment of points at or below the detection floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CensorMode {
    /// Left out of the fit and checked afterwards as upper bounds.
    #[default]
    Censor,
    /// Fitted like every other point.
    IncludeAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DiffusionFitOptions {
    pub floor_hz: f64,
    #[serde(default)]
    pub censor: CensorMode,
    #[serde(default)]
    pub convention: BroadeningConvention,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    /// Two-sided confidence level of the bootstrap interval.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_resamples() -> usize {
    DEFAULT_BOOTSTRAP_RESAMPLES
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for DiffusionFitOptions {
    fn default() -> Self {
        DiffusionFitOptions {
            floor_hz: DEFAULT_FLOOR_HZ,
            censor: CensorMode::Censor,
            convention: BroadeningConvention::Ordinary,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl Validate for DiffusionFitOptions {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.floor_hz.is_finite() && self.floor_hz >= 0.0,
            path,
            "floor_hz",
            || format!("must be >= 0, got {}", self.floor_hz),
            issues,
        );
        require(
            self.bootstrap_resamples >= 1,
            path,
            "bootstrap_resamples",
            || "must be >= 1".into(),
            issues,
        );
        require(
            self.confidence > 0.0 && self.confidence < 1.0,
            path,
            "confidence",
            || format!("must lie in (0, 1), got {}", self.confidence),
            issues,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DiffusionFit {
    pub diffusion_nm2_per_us: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub n_fitted: usize,
    pub n_censored: usize,
    /// Censored points whose fitted prediction lies above the floor.
    pub censor_violations: usize,
    pub convention: BroadeningConvention,
}

impl DiffusionFit {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Weighted least squares for the one-parameter model `y = D·g`.
///
/// Without error bars the weights are `1/g²`, i.e. equal relative errors,
/// which makes the estimate the mean of `y/g`.
fn wls(g: &[f64], y: &[f64], err: &[Option<f64>], idx: impl Iterator<Item = usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in idx {
        let w = match err[i] {
            Some(e) => 1.0 / (e * e),
            None => 1.0 / (g[i] * g[i]),
        };
        num += w * g[i] * y[i];
        den += w * g[i] * g[i];
    }
    num / den
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Fits `D` to broadening-vs-depth points with a seeded bootstrap interval.
pub fn fit_diffusion(
    points: &[DepthBroadeningPoint],
    opts: &DiffusionFitOptions,
) -> Result<DiffusionFit> {
    opts.validate()?;
    let mut issues = Vec::new();
    for (i, p) in points.iter().enumerate() {
        p.check(&format!("points[{i}]"), &mut issues);
    }
    if !issues.is_empty() {
        return Err(issues.remove(0).into());
    }

    let unit = opts.convention.hz_per_rate();
    let g: Vec<f64> = points
        .iter()
        .map(|p| 2.0 * unit / (p.depth_nm * p.depth_nm))
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.broadening_hz).collect();
    let err: Vec<Option<f64>> = points.iter().map(|p| p.broadening_err_hz).collect();
    let censored: Vec<bool> = y.iter().map(|&v| v <= opts.floor_hz).collect();
    let used: Vec<usize> = match opts.censor {
        CensorMode::Censor => (0..points.len()).filter(|&i| !censored[i]).collect(),
        CensorMode::IncludeAll => (0..points.len()).collect(),
    };
    if used.len() < 2 {
        return Err(Error::FitRejected(format!(
            "need at least 2 points above the {} Hz floor, got {}",
            opts.floor_hz,
            used.len()
        )));
    }

    let d_hat = wls(&g, &y, &err, used.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut boot: Vec<f64> = (0..opts.bootstrap_resamples)
        .map(|_| {
            let picks: Vec<usize> = (0..used.len())
                .map(|_| used[rng.random_range(0..used.len())])
                .collect();
            wls(&g, &y, &err, picks.into_iter())
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let tail = (1.0 - opts.confidence) / 2.0;

    let n_censored = censored.iter().filter(|&&c| c).count();
    let censor_violations = match opts.censor {
        CensorMode::Censor => (0..points.len())
            .filter(|&i| censored[i] && d_hat * g[i] > opts.floor_hz)
            .count(),
        CensorMode::IncludeAll => 0,
    };
    Ok(DiffusionFit {
        diffusion_nm2_per_us: d_hat,
        ci_low: percentile(&boot, tail),
        ci_high: percentile(&boot, 1.0 - tail),
        confidence: opts.confidence,
        n_fitted: used.len(),
        n_censored,
        censor_violations,
        convention: opts.convention,
    })
}

/// Noisy synthetic depth series: `broadening(D, d)·(1 + relative_noise·z)`
/// with standard normal `z`, clipped at zero.
pub fn synthetic_depth_series<R: Rng>(
    diffusion_nm2_per_us: f64,
    depths_nm: &[f64],
    relative_noise: f64,
    rng: &mut R,
) -> Result<Vec<DepthBroadeningPoint>> {
    depths_nm
        .iter()
        .map(|&depth_nm| {
            let z: f64 = rng.sample(StandardNormal);
            let clean = broadening(diffusion_nm2_per_us, depth_nm)?;
            Ok(DepthBroadeningPoint {
                depth_nm,
                broadening_hz: (clean * (1.0 + relative_noise * z)).max(0.0),
                broadening_err_hz: None,
            })
        })
        .collect()
}

/// Additive linewidth budget in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LinewidthBudget {
    pub intrinsic_hz: f64,
    pub diffusion_hz: f64,
    /// `1/(π·T₁)`.
    pub lifetime_hz: f64,
    pub total_hz: f64,
}

/// Intrinsic width plus diffusion broadening at the sensor depth plus the
/// T₁ lifetime floor. Widths of independent exponential decays add.
pub fn combined_linewidth(sensor: &NvSensor, sample: &SampleModel) -> Result<LinewidthBudget> {
    sensor.validate()?;
    sample.validate()?;
    let diffusion_hz = broadening(sample.diffusion_nm2_per_us, sensor.depth_nm)?;
    let lifetime_hz = 1.0 / (PI * sensor.t1_ms * 1e-3);
    let intrinsic_hz = sample.intrinsic_linewidth_hz;
    Ok(LinewidthBudget {
        intrinsic_hz,
        diffusion_hz,
        lifetime_hz,
        total_hz: intrinsic_hz + diffusion_hz + lifetime_hz,
    })
}
