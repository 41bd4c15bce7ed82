//! XY8 multipulse filter functions, coherent-phase linewidths, and depth
//! calibration from the rms field of a statistically polarized sample.
//!
//! The filter is the squared magnitude of the Fourier transform of the ±1
//! toggling function of an equally spaced π-pulse train. Pulses sit at
//! `(k - 1/2)·τ` for `k = 1..=8N`, so the first and last free-evolution
//! segments are `τ/2` long and the toggling function has zero mean. Each
//! constant segment is integrated exactly, which keeps odd pulse counts and
//! exponential windows on the same code path.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{require, Issue, NvSensor, SampleModel, Validate, MU0_OVER_4PI};

/// `∫ (1 + 3cos²θ)/r⁶ dV` over the half-space `z > 1` seen from the origin.
///
/// Equal to π/2; `cargo run --example halfspace_constant` reproduces it by
/// direct numerical integration.
pub const HALF_SPACE_DIPOLE_INTEGRAL: f64 = std::f64::consts::FRAC_PI_2;

/// Per-component variance of a spin-1/2 projection, ⟨I_α²⟩.
pub const SPIN_HALF_VARIANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PulseSequence {
    /// Number of XY8 blocks.
    pub repeats: u32,
    /// Inter-pulse spacing in µs.
    pub tau_us: f64,
}

impl PulseSequence {
    pub fn xy8(repeats: u32, tau_us: f64) -> Result<Self> {
        let s = PulseSequence { repeats, tau_us };
        s.validate()?;
        Ok(s)
    }

    /// Spacing that puts the first filter harmonic on `f_hz`.
    pub fn resonant_tau_us(f_hz: f64) -> f64 {
        1e6 / (2.0 * f_hz)
    }

    pub fn pulse_count(&self) -> usize {
        8 * self.repeats as usize
    }

    pub fn duration_us(&self) -> f64 {
        self.pulse_count() as f64 * self.tau_us
    }

    /// Nominal filter centre 1/(2τ) in Hz.
    pub fn center_hz(&self) -> f64 {
        1e6 / (2.0 * self.tau_us)
    }

    pub fn pulse_times_us(&self) -> Vec<f64> {
        (1..=self.pulse_count())
            .map(|k| (k as f64 - 0.5) * self.tau_us)
            .collect()
    }

    /// Sign of the toggling function at time `t_us` (0 outside the sequence).
    pub fn toggling(&self, t_us: f64) -> f64 {
        let total = self.duration_us();
        if !(0.0..=total).contains(&t_us) {
            return 0.0;
        }
        let flips = ((t_us / self.tau_us) + 0.5).floor() as usize;
        if flips.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Segment boundaries `[0, τ/2, 3τ/2, ..., T]`.
    fn edges_us(&self) -> Vec<f64> {
        let mut edges = Vec::with_capacity(self.pulse_count() + 2);
        edges.push(0.0);
        edges.extend(self.pulse_times_us());
        edges.push(self.duration_us());
        edges
    }
}

impl Validate for PulseSequence {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        require(
            self.repeats >= 1,
            path,
            "repeats",
            || "must be >= 1".into(),
            issues,
        );
        require(
            self.tau_us.is_finite() && self.tau_us > 0.0,
            path,
            "tau_us",
            || format!("must be > 0, got {}", self.tau_us),
            issues,
        );
    }
}

/// `(1 - e^{-x}) / s` with `x = s·len`, stable for small `|x|`.
fn one_minus_exp_over(s: Complex64, len: f64) -> Complex64 {
    if s.norm() * len < 1e-300 {
        return Complex64::new(len, 0.0);
    }
    let x = s * len;
    let (u, v) = (x.re, x.im);
    let decay = (-u).exp();
    let half = (0.5 * v).sin();
    let re = -(-u).exp_m1() + decay * 2.0 * half * half;
    let im = decay * v.sin();
    Complex64::new(re, im) / s
}

/// Transform of the (optionally exponentially windowed) toggling function,
/// in µs. `t2_us = None` means no window.
fn toggling_transform(seq: &PulseSequence, f_hz: f64, t2_us: Option<f64>) -> Complex64 {
    let rate = t2_us.map_or(0.0, |t2| 1.0 / t2);
    let s = Complex64::new(rate, 2.0 * PI * f_hz * 1e-6);
    let edges = seq.edges_us();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut sign = 1.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let start = (-s * a).exp();
        acc += start * one_minus_exp_over(s, b - a) * sign;
        sign = -sign;
    }
    acc
}

fn weight(seq: &PulseSequence, f_hz: f64, t2_us: Option<f64>) -> f64 {
    let t = seq.duration_us();
    toggling_transform(seq, f_hz, t2_us).norm_sqr() / (t * t)
}

/// `|W(f)|² / T²` for the bare pulse train.
pub fn filter_function(seq: &PulseSequence, f_hz: f64) -> f64 {
    weight(seq, f_hz.abs(), None)
}

/// Filter with the sensor's coherence decay `exp(-t/T₂)` applied to the
/// toggling function.
pub fn windowed_filter_function(seq: &PulseSequence, sensor: &NvSensor, f_hz: f64) -> f64 {
    weight(seq, f_hz.abs(), Some(sensor.t2_us))
}

/// Evaluates the bare filter on a frequency grid.
pub fn scan_filter(seq: &PulseSequence, freqs_hz: &[f64]) -> Vec<f64> {
    freqs_hz
        .par_iter()
        .map(|&f| filter_function(seq, f))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FilterPeak {
    pub center_hz: f64,
    pub peak: f64,
    pub fwhm_hz: f64,
}

/// Locates the main filter lobe near 1/(2τ) and measures its FWHM.
fn measure_peak(seq: &PulseSequence, t2_us: Option<f64>) -> FilterPeak {
    let f0 = seq.center_hz();
    // natural width scale of the lobe
    let mut scale = 1e6 / seq.duration_us();
    if let Some(t2) = t2_us {
        scale = scale.max(1e6 / (PI * t2));
    }
    let w = |f: f64| weight(seq, f, t2_us);

    let step = scale / 64.0;
    let half_span = 2.0 * scale;
    let n = (2.0 * half_span / step).ceil() as usize;
    let lo = (f0 - half_span).max(0.0);
    let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    let vals: Vec<f64> = grid.par_iter().map(|&f| w(f)).collect();
    let imax = vals
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > vals[best] { i } else { best });

    // golden-section refinement inside the neighbouring grid cells
    let (mut a, mut b) = (
        grid[imax.saturating_sub(1)],
        grid[(imax + 1).min(grid.len() - 1)],
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (w(c), w(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-9 * f0.max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = w(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = w(d);
        }
    }
    let center = 0.5 * (a + b);
    let peak = w(center);
    let half = 0.5 * peak;

    let crossing = |dir: f64| -> f64 {
        let mut inside = center;
        let mut outside = center + dir * step;
        while w(outside) > half {
            inside = outside;
            outside += dir * step;
            if outside <= 0.0 {
                return 0.0;
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (inside + outside);
            if w(mid) > half {
                inside = mid;
            } else {
                outside = mid;
            }
            if (outside - inside).abs() < 1e-9 {
                break;
            }
        }
        0.5 * (inside + outside)
    };
    let right = crossing(1.0);
    let left = crossing(-1.0);
    FilterPeak {
        center_hz: center,
        peak,
        fwhm_hz: right - left,
    }
}

/// Main lobe of the bare filter.
pub fn filter_peak(seq: &PulseSequence) -> FilterPeak {
    measure_peak(seq, None)
}

/// FWHM in Hz of the T₂-windowed filter peak.
pub fn effective_linewidth(seq: &PulseSequence, sensor: &NvSensor) -> f64 {
    measure_peak(seq, Some(sensor.t2_us)).fwhm_hz
}

/// `B_rms² · d³ / ρ` in G²·nm⁶ for a sample's nucleus.
fn rms_constant(sample: &SampleModel) -> f64 {
    let moment = MU0_OVER_4PI * sample.nucleus.h_gamma_j_per_t();
    // (T·m³)² → nm-based units: ρ·1e27 / (d³·1e-27)
    let tesla_sq = moment * moment * SPIN_HALF_VARIANCE * HALF_SPACE_DIPOLE_INTEGRAL * 1e54;
    tesla_sq * 1e8
}

/// Root-mean-square field (Gauss) along the surface normal from a
/// statistically polarized half-space of spins above a sensor at `depth_nm`.
pub fn brms_at_depth(sample: &SampleModel, depth_nm: f64) -> Result<f64> {
    if !(depth_nm.is_finite() && depth_nm > 0.0) {
        return Err(Error::Domain(format!(
            "depth must be > 0 nm, got {depth_nm}"
        )));
    }
    Ok((rms_constant(sample) * sample.density_per_nm3 / depth_nm.powi(3)).sqrt())
}

/// Inverse of [`brms_at_depth`].
pub fn depth_from_brms(sample: &SampleModel, brms_gauss: f64) -> Result<f64> {
    if !(brms_gauss.is_finite() && brms_gauss > 0.0) {
        return Err(Error::Domain(format!(
            "B_rms must be > 0, got {brms_gauss}"
        )));
    }
    Ok((rms_constant(sample) * sample.density_per_nm3 / (brms_gauss * brms_gauss)).cbrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU_1H_400G_US: f64 = 0.2941;

    /// Riemann sum of the toggling function times the window, independent of
    /// the per-segment closed form.
    fn brute_weight(seq: &PulseSequence, f_hz: f64, t2_us: Option<f64>) -> f64 {
        let total = seq.duration_us();
        let n = 400_000;
        let dt = total / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * dt;
            let win = t2_us.map_or(1.0, |t2| (-t / t2).exp());
            let y = seq.toggling(t) * win;
            let ph = 2.0 * PI * f_hz * 1e-6 * t;
            re += y * ph.cos() * dt;
            im -= y * ph.sin() * dt;
        }
        (re * re + im * im) / (total * total)
    }

    #[test]
    fn segment_transform_matches_riemann_sum() {
        let seq = PulseSequence::xy8(2, TAU_1H_400G_US).unwrap();
        for f in [0.3e6, 1.2e6, 1.7e6, 1.75e6, 5.1e6] {
            let exact = filter_function(&seq, f);
            let brute = brute_weight(&seq, f, None);
            assert!((exact - brute).abs() < 1e-6, "f={f}: {exact} vs {brute}");
            let exact_w = weight(&seq, f, Some(10.0));
            let brute_w = brute_weight(&seq, f, Some(10.0));
            assert!((exact_w - brute_w).abs() < 1e-6);
        }
    }

    #[test]
    fn no_dc_response() {
        for n in [1, 2, 4, 8] {
            let seq = PulseSequence::xy8(n, 0.37).unwrap();
            assert!(filter_function(&seq, 0.0) < 1e-28);
        }
    }

    #[test]
    fn peak_is_global_maximum_of_scan() {
        let seq = PulseSequence::xy8(4, TAU_1H_400G_US).unwrap();
        let f0 = seq.center_hz();
        let grid: Vec<f64> = (0..=20_000).map(|i| 1.0e6 + i as f64 * 100.0).collect();
        let vals = scan_filter(&seq, &grid);
        let (imax, _) = vals
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        // The finite train pulls the maximum slightly off 1/(2τ).
        assert!(
            (grid[imax] - f0).abs() / f0 < 1e-3,
            "{} vs {f0}",
            grid[imax]
        );
        assert!(vals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn long_train_peak_within_one_grid_step() {
        let seq = PulseSequence::xy8(16, TAU_1H_400G_US).unwrap();
        let f0 = seq.center_hz();
        let grid: Vec<f64> = (-200..=200).map(|i| f0 + i as f64 * 100.0).collect();
        let vals = scan_filter(&seq, &grid);
        let imax = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
        assert!((grid[imax] - f0).abs() <= 100.0);
    }

    #[test]
    fn bare_fwhm_scales_with_duration() {
        let seq = PulseSequence::xy8(4, TAU_1H_400G_US).unwrap();
        let fwhm = filter_peak(&seq).fwhm_hz;
        let expected = 0.9e6 / seq.duration_us();
        assert!((fwhm / expected - 1.0).abs() < 0.2, "{fwhm} vs {expected}");
    }

    #[test]
    fn linewidth_never_grows_with_repeats() {
        let sensor = NvSensor::new(5.0, 1.7, 10.0).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..=12 {
            let seq = PulseSequence::xy8(n, TAU_1H_400G_US).unwrap();
            let w = effective_linewidth(&seq, &sensor);
            assert!(w <= last, "N={n}: {w} > {last}");
            last = w;
        }
    }

    #[test]
    fn windowing_broadens() {
        let seq = PulseSequence::xy8(8, TAU_1H_400G_US).unwrap();
        let sensor = NvSensor::new(5.0, 1.7, 10.0).unwrap();
        assert!(effective_linewidth(&seq, &sensor) > filter_peak(&seq).fwhm_hz);
    }

    #[test]
    fn brms_rejects_bad_inputs() {
        let s = SampleModel::oil(0.0);
        assert!(matches!(brms_at_depth(&s, 0.0), Err(Error::Domain(_))));
        assert!(matches!(brms_at_depth(&s, -2.0), Err(Error::Domain(_))));
        assert!(matches!(depth_from_brms(&s, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn brms_round_trip() {
        let s = SampleModel::oil(0.0);
        for d in [2.0, 5.0, 7.3, 20.0] {
            let b = brms_at_depth(&s, d).unwrap();
            let back = depth_from_brms(&s, b).unwrap();
            assert!((back / d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn toggling_is_balanced() {
        let seq = PulseSequence::xy8(1, 1.0).unwrap();
        assert_eq!(seq.toggling(0.1), 1.0);
        assert_eq!(seq.toggling(0.6), -1.0);
        assert_eq!(seq.toggling(7.9), 1.0);
        assert_eq!(seq.toggling(9.0), 0.0);
        assert_eq!(seq.pulse_count(), 8);
        assert!((seq.duration_us() - 8.0).abs() < 1e-15);
    }
}
