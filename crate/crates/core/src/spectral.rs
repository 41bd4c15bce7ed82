//! Spectrum estimation and parameter fitting.
//!
//! The periodogram is the one-sided magnitude-squared DFT of the mean-removed
//! series, scaled so that the bins sum to the series energy (Parseval). The
//! rectangular window is always used; its own width is reported separately
//! by [`rectangular_window_fwhm_hz`] rather than folded into the fitted
//! lineshape.

use rustfft::{num_complex::Complex64, FftPlanner};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Relative tolerance on uniform spacing of a time grid.
pub const UNIFORM_GRID_TOL: f64 = 1e-9;
/// Minimum peak-to-median power ratio for a dominant peak.
pub const DOMINANT_PEAK_RATIO: f64 = 5.0;
/// Half-width of the fitted region around a peak, in estimated FWHMs.
pub const FIT_WINDOW_FWHMS: f64 = 3.0;
/// Minimum envelope extrema for an exponential-envelope fit.
pub const MIN_ENVELOPE_EXTREMA: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimeSeries {
    pub t_us: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t_us: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t_us.len() != values.len() {
            return Err(Error::Domain(format!(
                "time grid has {} points but {} values",
                t_us.len(),
                values.len()
            )));
        }
        if t_us.len() < 4 {
            return Err(Error::Domain(format!(
                "time series needs at least 4 samples, got {}",
                t_us.len()
            )));
        }
        if t_us.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Domain(
                "time series contains non-finite values".into(),
            ));
        }
        let n = t_us.len();
        let dt = (t_us[n - 1] - t_us[0]) / (n - 1) as f64;
        if dt <= 0.0 {
            return Err(Error::Domain(
                "time grid must be strictly increasing".into(),
            ));
        }
        for (i, &t) in t_us.iter().enumerate() {
            let expected = t_us[0] + i as f64 * dt;
            if (t - expected).abs() > UNIFORM_GRID_TOL * (t_us[n - 1] - t_us[0]).max(dt) {
                return Err(Error::Domain(format!(
                    "time grid is not uniform at index {i} ({t} us, expected {expected} us)"
                )));
            }
        }
        Ok(TimeSeries { t_us, values })
    }

    pub fn uniform(t0_us: f64, dt_us: f64, values: Vec<f64>) -> Result<Self> {
        let t = (0..values.len())
            .map(|i| t0_us + i as f64 * dt_us)
            .collect();
        Self::new(t, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt_us(&self) -> f64 {
        let n = self.t_us.len();
        (self.t_us[n - 1] - self.t_us[0]) / (n - 1) as f64
    }

    pub fn fs_hz(&self) -> f64 {
        1e6 / self.dt_us()
    }

    /// Native DFT bin width `fs/N` in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.fs_hz() / self.len() as f64
    }

    pub fn duration_us(&self) -> f64 {
        self.len() as f64 * self.dt_us()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Spectrum {
    pub f_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn new(f_hz: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if f_hz.len() != power.len() || f_hz.is_empty() {
            return Err(Error::Domain(
                "spectrum grid and power differ in length".into(),
            ));
        }
        if power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(
                "spectral power must be finite and >= 0".into(),
            ));
        }
        if f_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("frequency grid must be ascending".into()));
        }
        Ok(Spectrum { f_hz, power })
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Index and frequency of the largest bin.
    pub fn peak(&self) -> (usize, f64) {
        let i = argmax(&self.power);
        (i, self.f_hz[i])
    }
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// One-sided periodogram of the mean-removed series, zero-padded to
/// `zero_pad_factor·N` points.
pub fn periodogram(ts: &TimeSeries, zero_pad_factor: usize) -> Spectrum {
    let n = ts.len();
    let m = n * zero_pad_factor.max(1);
    let mean = ts.values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = ts
        .values
        .iter()
        .map(|v| Complex64::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(m)
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);

    let fs = ts.fs_hz();
    let half = m / 2;
    let mut f_hz = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, x) in buf.iter().take(half + 1).enumerate() {
        let both_sides = k != 0 && !(m.is_multiple_of(2) && k == half);
        let scale = if both_sides { 2.0 } else { 1.0 };
        f_hz.push(k as f64 * fs / m as f64);
        power.push(scale * x.norm_sqr() / m as f64);
    }
    Spectrum { f_hz, power }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(rename_all = "lowercase")]
pub enum Lineshape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl Lineshape {
    /// Peak-normalized profile and its gradient with respect to
    /// `(amplitude, center, fwhm)`.
    pub fn eval(self, f: f64, p: &[f64], grad: &mut [f64]) -> f64 {
        let (a, f0, w) = (p[0], p[1], p[2]);
        match self {
            Lineshape::Lorentzian => {
                let u = 2.0 * (f - f0) / w;
                let den = 1.0 + u * u;
                let shape = 1.0 / den;
                let dshape_du = -2.0 * u / (den * den);
                grad[0] = shape;
                grad[1] = a * dshape_du * (-2.0 / w);
                grad[2] = a * dshape_du * (-u / w);
                a * shape
            }
            Lineshape::Gaussian => {
                let c = 4.0 * std::f64::consts::LN_2;
                let u = (f - f0) / w;
                let shape = (-c * u * u).exp();
                grad[0] = shape;
                grad[1] = a * shape * 2.0 * c * u / w;
                grad[2] = a * shape * 2.0 * c * u * u / w;
                a * shape
            }
        }
    }

    pub fn value(self, f: f64, amplitude: f64, center: f64, fwhm: f64) -> f64 {
        let mut g = [0.0; 3];
        self.eval(f, &[amplitude, center, fwhm], &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LineFit {
    pub f0_hz: f64,
    pub fwhm_hz: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub model: Lineshape,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Linear-interpolated half-power crossing walking from `peak` in `dir`.
fn half_crossing(f: &[f64], p: &[f64], peak: usize, dir: isize) -> Option<f64> {
    let half = 0.5 * p[peak];
    let mut i = peak as isize;
    loop {
        let j = i + dir;
        if j < 0 || j as usize >= p.len() {
            return None;
        }
        let (iu, ju) = (i as usize, j as usize);
        if p[ju] <= half {
            let frac = (p[iu] - half) / (p[iu] - p[ju]);
            return Some(f[iu] + frac * (f[ju] - f[iu]));
        }
        i = j;
    }
}

/// Least-squares lineshape fit around the dominant peak of `spec`.
pub fn fit_line(spec: &Spectrum, model: Lineshape) -> Result<LineFit> {
    fit_line_window(spec, model, FIT_WINDOW_FWHMS)
}

pub fn fit_line_window(spec: &Spectrum, model: Lineshape, window_fwhms: f64) -> Result<LineFit> {
    let n = spec.power.len();
    if n < 4 {
        return Err(Error::FitRejected("spectrum has fewer than 4 bins".into()));
    }
    let ipk = argmax(&spec.power);
    let peak = spec.power[ipk];
    let med = median(&spec.power);
    if !(peak > 0.0 && peak >= DOMINANT_PEAK_RATIO * med) {
        return Err(Error::FitRejected(format!(
            "no dominant peak: max {peak:e} vs median {med:e}"
        )));
    }
    let df = spec.f_hz[1] - spec.f_hz[0];
    let left = half_crossing(&spec.f_hz, &spec.power, ipk, -1);
    let right = half_crossing(&spec.f_hz, &spec.power, ipk, 1);
    let fwhm0 = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (spec.f_hz[ipk] - l),
        (None, Some(r)) => 2.0 * (r - spec.f_hz[ipk]),
        (None, None) => df,
    }
    .max(df);

    let half_window = window_fwhms * fwhm0;
    let f_pk = spec.f_hz[ipk];
    let mut lo = ipk;
    while lo > 0 && spec.f_hz[lo - 1] >= f_pk - half_window {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < n && spec.f_hz[hi + 1] <= f_pk + half_window {
        hi += 1;
    }
    while hi - lo + 1 < 7 && (lo > 0 || hi + 1 < n) {
        lo = lo.saturating_sub(1);
        hi = (hi + 1).min(n - 1);
    }

    // fit in peak-normalized units so the result does not depend on scale
    let xs = &spec.f_hz[lo..=hi];
    let ys: Vec<f64> = spec.power[lo..=hi].iter().map(|p| p / peak).collect();
    let fit = levenberg_marquardt(
        xs,
        &ys,
        None,
        &[1.0, f_pk, fwhm0],
        &[0.0, f64::NEG_INFINITY, 1e-3 * df],
        |x, p, g| model.eval(x, p, g),
        LmOptions::default(),
    )?;
    Ok(LineFit {
        amplitude: fit.params[0] * peak,
        f0_hz: fit.params[1],
        fwhm_hz: fit.params[2].abs(),
        residual_norm: fit.residual_norm * peak,
        model,
    })
}

/// FWHM of a Lorentzian from an exponential decay with 1/e time `t_ms`.
pub fn lifetime_fwhm_hz(t_ms: f64) -> f64 {
    1.0 / (PI * t_ms * 1e-3)
}

/// FWHM of the sinc² response of a rectangular window covering the series.
pub fn rectangular_window_fwhm_hz(ts: &TimeSeries) -> f64 {
    // sinc²(x) = 1/2 at x = 0.442946...
    const SINC2_HALF_POWER_X: f64 = 0.442_946_470_689_452_3;
    2.0 * SINC2_HALF_POWER_X / (ts.duration_us() * 1e-6)
}

/// Refined local maxima of `|x|`, at least `min_sep` samples apart.
fn envelope_extrema(values: &[f64], min_sep: f64) -> Vec<(f64, f64)> {
    let a: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let n = a.len();
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for i in 1..n - 1 {
        if a[i] > 0.0
            && a[i] >= a[i - 1]
            && a[i] >= a[i + 1]
            && (a[i] > a[i - 1] || a[i] > a[i + 1])
        {
            let (y0, y1, y2) = (a[i - 1], a[i], a[i + 1]);
            let curv = y0 - 2.0 * y1 + y2;
            let (shift, val) = if curv < 0.0 {
                let s = 0.5 * (y0 - y2) / curv;
                (s, y1 - 0.25 * (y0 - y2) * s)
            } else {
                (0.0, y1)
            };
            cands.push((i as f64 + shift, val));
        }
    }
    cands.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| (k.0 - c.0).abs() >= min_sep) {
            kept.push(c);
        }
    }
    kept.sort_by(|x, y| x.0.total_cmp(&y.0));
    kept
}

/// 1/e time (ms) of the decaying envelope of an oscillating series.
///
/// The carrier is located on the periodogram, envelope points are the
/// parabola-refined maxima of `|x|` (one per half carrier period), and a
/// single exponential is fitted to them.
pub fn fit_exp_envelope(ts: &TimeSeries) -> Result<f64> {
    let spec = periodogram(ts, 4);
    let (_, f_c) = spec.peak();
    if !(f_c > 0.0) {
        return Err(Error::FitRejected("no oscillating carrier found".into()));
    }
    let half_period = ts.fs_hz() / (2.0 * f_c);
    let ext = envelope_extrema(&ts.values, 0.5 * half_period);
    if ext.len() < MIN_ENVELOPE_EXTREMA {
        return Err(Error::FitRejected(format!(
            "envelope has {} extrema, need at least {MIN_ENVELOPE_EXTREMA}",
            ext.len()
        )));
    }
    let dt = ts.dt_us();
    let xs: Vec<f64> = ext.iter().map(|e| e.0 * dt).collect();
    let ys: Vec<f64> = ext.iter().map(|e| e.1).collect();

    // log-linear seed
    let nn = xs.len() as f64;
    let lx: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / nn;
    let my = lx.iter().sum::<f64>() / nn;
    let sxy: f64 = xs.iter().zip(&lx).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let span = xs[xs.len() - 1] - xs[0];
    let rate0 = (-slope).max(1e-6 / span);
    let amp0 = (my + rate0 * mx).exp();

    let fit = levenberg_marquardt(
        &xs,
        &ys,
        None,
        &[amp0, rate0],
        &[0.0, 0.0],
        |x, p, g| {
            let e = (-p[1] * x).exp();
            g[0] = e;
            g[1] = -p[0] * x * e;
            p[0] * e
        },
        LmOptions::default(),
    )?;
    let rate = fit.params[1];
    if !(rate > 0.0) || rate * span < 1e-3 || -slope * span < 1e-3 {
        return Err(Error::FitRejected(format!(
            "envelope does not decay over the {span} us record"
        )));
    }
    Ok(1.0 / rate * 1e-3)
}
