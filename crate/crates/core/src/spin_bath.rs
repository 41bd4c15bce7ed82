//! Monte Carlo of statistically polarized nuclear spins diffusing in the
//! half-space above the diamond surface, and the field they produce at the NV.
//!
//! Geometry: the NV sits at the origin, the surface is the plane `z = d` and
//! spins live in the slab `|x|, |y| < b`, `d ≤ z ≤ d + b` where `b` is the box
//! half-width. The surface and the top of the slab reflect; the lateral faces
//! wrap periodically. Every spin carries a fixed isotropic Gaussian moment (the
//! rotating-frame statistical polarization) and contributes the point-dipole
//! field projected on `z`. Spins come in pairs; each pair owns a random
//! generator seeded from its own stream of a ChaCha8 keyed by the master seed,
//! so a run is bitwise reproducible whatever the thread count.
//!
//! A few thousand simulated dipoles stand in for the real density, so every
//! dipole is scaled by a common weight chosen such that the expected trace
//! variance equals `brms_at_depth(sample, d)²` for this exact box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{join, require, Issue, SampleModel, Validate};
use crate::pulse_filter::brms_at_depth;
use crate::spectral::TimeSeries;

pub const DEFAULT_PAIRS: usize = 3000;
pub const DEFAULT_DT_US: f64 = 0.1;

/// Pairs per work unit. Fixed so the reduction order never depends on the
/// thread pool.
const PAIRS_PER_CHUNK: usize = 64;
/// Time steps simulated per pass over the particles.
const BLOCK_STEPS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BathConfig {
    pub sample: SampleModel,
    pub sensor_depth_nm: f64,
    #[serde(default = "default_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_dt")]
    pub dt_us: f64,
    pub t_max_us: f64,
    /// Lateral half-width of the box, also its height above the surface.
    pub box_nm: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pairs() -> usize {
    DEFAULT_PAIRS
}

fn default_dt() -> f64 {
    DEFAULT_DT_US
}

impl BathConfig {
    /// Oil above a sensor at `depth_nm`, smallest admissible box.
    pub fn oil(depth_nm: f64, diffusion_nm2_per_us: f64, t_max_us: f64, seed: u64) -> Self {
        BathConfig {
            sample: SampleModel::oil(diffusion_nm2_per_us),
            sensor_depth_nm: depth_nm,
            n_pairs: DEFAULT_PAIRS,
            dt_us: DEFAULT_DT_US,
            t_max_us,
            box_nm: 4.0 * depth_nm,
            seed,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max_us / self.dt_us + 1e-9).floor() as usize
    }

    pub fn n_spins(&self) -> usize {
        2 * self.n_pairs
    }

    fn top_nm(&self) -> f64 {
        self.sensor_depth_nm + self.box_nm
    }

    pub fn volume_nm3(&self) -> f64 {
        4.0 * self.box_nm * self.box_nm * self.box_nm
    }
}

impl Validate for BathConfig {
    fn check(&self, path: &str, issues: &mut Vec<Issue>) {
        self.sample.check(&join(path, "sample"), issues);
        let d_ok = self.sensor_depth_nm.is_finite() && self.sensor_depth_nm > 0.0;
        require(
            d_ok,
            path,
            "sensor_depth_nm",
            || format!("must be > 0, got {}", self.sensor_depth_nm),
            issues,
        );
        require(
            self.n_pairs >= 1,
            path,
            "n_pairs",
            || "must be >= 1".into(),
            issues,
        );
        require(
            self.dt_us.is_finite() && self.dt_us > 0.0,
            path,
            "dt_us",
            || format!("must be > 0, got {}", self.dt_us),
            issues,
        );
        require(
            self.t_max_us.is_finite() && self.t_max_us >= self.dt_us,
            path,
            "t_max_us",
            || format!("must be >= dt_us ({}), got {}", self.dt_us, self.t_max_us),
            issues,
        );
        require(
            self.box_nm.is_finite() && (!d_ok || self.box_nm >= 4.0 * self.sensor_depth_nm),
            path,
            "box_nm",
            || {
                format!(
                    "must be >= 4 x sensor depth ({} nm), got {}",
                    4.0 * self.sensor_depth_nm,
                    self.box_nm
                )
            },
            issues,
        );
    }
}

/// Field at the sensor sampled every `dt_us`, in Gauss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FieldTrace {
    pub dt_us: f64,
    pub values: Vec<f64>,
}

impl FieldTrace {
    pub fn times_us(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| i as f64 * self.dt_us)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean square about zero, the physical mean of a statistical field.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }
}

/// `|G|² = (1 + 3 z²/r²)/r⁶`: the moment-averaged squared z-field kernel.
fn kernel_sq(x: f64, y: f64, z: f64) -> f64 {
    let r2 = x * x + y * y + z * z;
    (1.0 + 3.0 * z * z / r2) / (r2 * r2 * r2)
}

// 8-point Gauss–Legendre on [-1, 1].
#[allow(clippy::excessive_precision)]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
#[allow(clippy::excessive_precision)]
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Quadrature nodes on `[0, len]`, graded geometrically away from 0 with
/// finest cells of size `scale/16`.
fn graded_nodes(len: f64, scale: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![0.0];
    let mut h = scale / 16.0;
    while *edges.last().unwrap() < len {
        let next = (edges.last().unwrap() + h).min(len);
        edges.push(next);
        h *= 1.5;
    }
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            out.push((mid + half * x, half * wt));
        }
    }
    out
}

/// `∫ |G|² dV` over the simulation box.
pub fn box_kernel_integral(depth_nm: f64, box_nm: f64) -> f64 {
    let lateral = graded_nodes(box_nm, depth_nm);
    let vertical = graded_nodes(box_nm, depth_nm);
    let mut total = 0.0;
    for &(z, wz) in &vertical {
        let zz = depth_nm + z;
        for &(x, wx) in &lateral {
            for &(y, wy) in &lateral {
                total += wx * wy * wz * kernel_sq(x, y, zz);
            }
        }
    }
    // four lateral quadrants
    4.0 * total
}

#[derive(Debug, Clone)]
struct Pair {
    pos: [[f64; 3]; 2],
    start: [[f64; 3]; 2],
    moment: [[f64; 3]; 2],
    /// Lateral periodic images crossed, for unwrapped displacements.
    image: [[i64; 2]; 2],
    rng: Xoshiro256PlusPlus,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    half: f64,
    floor: f64,
    top: f64,
    sigma: f64,
    weight: f64,
}

impl Geometry {
    fn reflect(&self, mut z: f64) -> f64 {
        // a step can exceed the slab height only for absurd dt·D
        loop {
            if z < self.floor {
                z = 2.0 * self.floor - z;
            } else if z > self.top {
                z = 2.0 * self.top - z;
            } else {
                return z;
            }
        }
    }

    fn wrap(&self, x: &mut f64, image: &mut i64) {
        let width = 2.0 * self.half;
        while *x >= self.half {
            *x -= width;
            *image += 1;
        }
        while *x < -self.half {
            *x += width;
            *image -= 1;
        }
    }
}

impl Pair {
    fn new(index: usize, seed: u64, g: &Geometry) -> Self {
        let mut stream = ChaCha8Rng::seed_from_u64(seed);
        stream.set_stream(index as u64);
        let mut rng = Xoshiro256PlusPlus::from_rng(&mut stream);
        let mut pos = [[0.0; 3]; 2];
        let mut moment = [[0.0; 3]; 2];
        for s in 0..2 {
            pos[s] = [
                rng.random_range(-g.half..g.half),
                rng.random_range(-g.half..g.half),
                rng.random_range(g.floor..g.top),
            ];
            for c in 0..3 {
                moment[s][c] = rng.sample(StandardNormal);
            }
        }
        Pair {
            pos,
            start: pos,
            moment,
            image: [[0; 2]; 2],
            rng,
        }
    }

    #[inline]
    fn step(&mut self, g: &Geometry) {
        for s in 0..2 {
            let dx: f64 = self.rng.sample(StandardNormal);
            let dy: f64 = self.rng.sample(StandardNormal);
            let dz: f64 = self.rng.sample(StandardNormal);
            let p = &mut self.pos[s];
            p[0] += g.sigma * dx;
            p[1] += g.sigma * dy;
            p[2] = g.reflect(p[2] + g.sigma * dz);
            g.wrap(&mut p[0], &mut self.image[s][0]);
            g.wrap(&mut p[1], &mut self.image[s][1]);
        }
    }

    #[inline]
    fn field(&self) -> f64 {
        let mut b = 0.0;
        for s in 0..2 {
            let [x, y, z] = self.pos[s];
            let m = self.moment[s];
            let r2 = x * x + y * y + z * z;
            let inv_r = r2.sqrt().recip();
            let inv_r3 = inv_r * inv_r * inv_r;
            let mr = m[0] * x + m[1] * y + m[2] * z;
            b += (3.0 * mr * z / r2 - m[2]) * inv_r3;
        }
        b
    }

    fn displacement(&self, s: usize, width: f64) -> [f64; 3] {
        let p = self.pos[s];
        let q = self.start[s];
        [
            p[0] + self.image[s][0] as f64 * width - q[0],
            p[1] + self.image[s][1] as f64 * width - q[1],
            p[2] - q[2],
        ]
    }
}

/// Stateful bath, for callers that need more than the field trace.
#[derive(Debug, Clone)]
pub struct Bath {
    pairs: Vec<Pair>,
    geom: Geometry,
}

impl Bath {
    pub fn new(cfg: &BathConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.sensor_depth_nm;
        let brms = brms_at_depth(&cfg.sample, d)?;
        let per_dipole = box_kernel_integral(d, cfg.box_nm) / cfg.volume_nm3();
        let weight = brms / (cfg.n_spins() as f64 * per_dipole).sqrt();
        let geom = Geometry {
            half: cfg.box_nm,
            floor: d,
            top: cfg.top_nm(),
            sigma: (2.0 * cfg.sample.diffusion_nm2_per_us * cfg.dt_us).sqrt(),
            weight,
        };
        let pairs = (0..cfg.n_pairs)
            .into_par_iter()
            .map(|i| Pair::new(i, cfg.seed, &geom))
            .collect();
        Ok(Bath { pairs, geom })
    }

    /// Gauss per unit dipole kernel.
    pub fn weight(&self) -> f64 {
        self.geom.weight
    }

    pub fn field(&self) -> f64 {
        let partial: Vec<f64> = self
            .pairs
            .par_chunks(PAIRS_PER_CHUNK)
            .map(|chunk| chunk.iter().map(Pair::field).sum())
            .collect();
        self.geom.weight * partial.iter().sum::<f64>()
    }

    /// Advances `steps` time steps and returns the field after each one.
    pub fn advance(&mut self, steps: usize) -> Vec<f64> {
        let geom = self.geom;
        let mut out = Vec::with_capacity(steps);
        let mut done = 0;
        while done < steps {
            let k = BLOCK_STEPS.min(steps - done);
            let partial: Vec<Vec<f64>> = self
                .pairs
                .par_chunks_mut(PAIRS_PER_CHUNK)
                .map(|chunk| {
                    let mut acc = vec![0.0; k];
                    for pair in chunk {
                        for slot in acc.iter_mut() {
                            pair.step(&geom);
                            *slot += pair.field();
                        }
                    }
                    acc
                })
                .collect();
            for s in 0..k {
                let sum: f64 = partial.iter().map(|p| p[s]).sum();
                out.push(geom.weight * sum);
            }
            done += k;
        }
        out
    }

    /// Displacement of every spin since construction, lateral wraps undone.
    pub fn displacements(&self) -> Vec<[f64; 3]> {
        let width = 2.0 * self.geom.half;
        self.pairs
            .iter()
            .flat_map(|p| [p.displacement(0, width), p.displacement(1, width)])
            .collect()
    }

    pub fn initial_positions(&self) -> Vec<[f64; 3]> {
        self.pairs.iter().flat_map(|p| p.start).collect()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.pairs.iter().flat_map(|p| p.pos).collect()
    }
}

/// Runs the bath for `t_max_us` and returns the field trace, including `t = 0`.
pub fn simulate_bath(cfg: &BathConfig) -> Result<FieldTrace> {
    let mut bath = Bath::new(cfg)?;
    let mut values = Vec::with_capacity(cfg.n_steps() + 1);
    values.push(bath.field());
    values.extend(bath.advance(cfg.n_steps()));
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(
            "field trace contains non-finite values".into(),
        ));
    }
    Ok(FieldTrace {
        dt_us: cfg.dt_us,
        values,
    })
}

/// Unbiased autocorrelation about zero, normalized so `C(0) = 1`, for lags up
/// to half the trace (at least 3).
///
/// The statistical polarization has zero physical mean, so the sample mean is
/// not removed: a static bath gives `C ≡ 1`. An all-zero trace is degenerate.
pub fn autocorrelation(trace: &FieldTrace) -> Result<TimeSeries> {
    let n = trace.values.len();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "trace needs at least 4 samples, got {n}"
        )));
    }
    if trace.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("trace contains non-finite values".into()));
    }
    let max_lag = (n / 2).max(3).min(n - 1);
    let sums = lagged_products(&trace.values, max_lag);
    if !(sums[0] > 0.0) {
        return Err(Error::Degenerate("trace is identically zero".into()));
    }
    let c0 = sums[0] / n as f64;
    let values = sums
        .iter()
        .enumerate()
        .map(|(k, s)| s / (n - k) as f64 / c0)
        .collect();
    TimeSeries::uniform(0.0, trace.dt_us, values)
}

/// `Σᵢ x[i]·x[i+k]` for `k = 0..=max_lag`, via FFT.
fn lagged_products(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = (n + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let mut out: Vec<f64> = buf
        .iter()
        .take(max_lag + 1)
        .map(|z| z.re / m as f64)
        .collect();
    // exact zero lag keeps the normalization free of FFT round-off
    out[0] = x.iter().map(|v| v * v).sum();
    out
}

/// First time at which a normalized correlation drops below 1/e, linearly
/// interpolated; `None` if it never does.
pub fn one_over_e_time(corr: &TimeSeries) -> Option<f64> {
    let target = (-1.0f64).exp();
    let v = &corr.values;
    let t = &corr.t_us;
    for i in 1..v.len() {
        if v[i] < target {
            let frac = (v[i - 1] - target) / (v[i - 1] - v[i]);
            return Some(t[i - 1] + frac * (t[i] - t[i - 1]));
        }
    }
    None
}

/// Time to diffuse a distance `length_nm` in one dimension, `L²/(2D)` µs.
/// `D = 0` never decorrelates and returns `f64::INFINITY`.
pub fn msd_decay_time(diffusion_nm2_per_us: f64, length_nm: f64) -> Result<f64> {
    if !(length_nm.is_finite() && length_nm > 0.0) {
        return Err(Error::Domain(format!(
            "length must be > 0, got {length_nm}"
        )));
    }
    if !(diffusion_nm2_per_us.is_finite() && diffusion_nm2_per_us >= 0.0) {
        return Err(Error::Domain(format!(
            "diffusivity must be >= 0, got {diffusion_nm2_per_us}"
        )));
    }
    if diffusion_nm2_per_us == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(length_nm * length_nm / (2.0 * diffusion_nm2_per_us))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small(d_coef: f64, seed: u64) -> BathConfig {
        BathConfig {
            n_pairs: 200,
            t_max_us: 50.0,
            ..BathConfig::oil(5.0, d_coef, 50.0, seed)
        }
    }

    #[test]
    fn msd_time_examples() {
        assert!((msd_decay_time(0.19, 5.0).unwrap() - 65.789_473_684).abs() < 1e-6);
        assert!((msd_decay_time(0.15, 5.0).unwrap() - 83.333_333_333).abs() < 1e-6);
        let a = msd_decay_time(0.2, 3.0).unwrap();
        let b = msd_decay_time(0.8, 6.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(msd_decay_time(0.0, 5.0).unwrap().is_infinite());
        assert!(msd_decay_time(0.1, 0.0).is_err());
    }

    #[test]
    fn box_too_small_is_config_error() {
        let cfg = BathConfig {
            box_nm: 19.0,
            ..small(0.19, 1)
        };
        match Bath::new(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "BathConfig.box_nm"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_length() {
        let cfg = small(0.19, 3);
        let tr = simulate_bath(&cfg).unwrap();
        assert_eq!(tr.values.len(), 501);
        let cfg = BathConfig {
            t_max_us: 0.35,
            ..cfg
        };
        assert_eq!(simulate_bath(&cfg).unwrap().values.len(), 4);
    }

    #[test]
    fn box_integral_approaches_half_space() {
        // a box much larger than the depth captures nearly all of π/2 / d³
        let d = 2.0;
        let big = box_kernel_integral(d, 200.0) * d.powi(3);
        assert!((big / (PI / 2.0) - 1.0).abs() < 1e-4, "{big}");
        let tight = box_kernel_integral(d, 4.0 * d) * d.powi(3);
        assert!(tight < big);
    }

    #[test]
    fn positions_stay_in_box() {
        let cfg = small(2.0, 5);
        let mut bath = Bath::new(&cfg).unwrap();
        bath.advance(300);
        for p in bath.positions() {
            assert!(p[0] >= -20.0 && p[0] < 20.0);
            assert!(p[1] >= -20.0 && p[1] < 20.0);
            assert!(p[2] >= 5.0 && p[2] <= 25.0);
        }
    }

    #[test]
    fn static_bath_is_constant() {
        let tr = simulate_bath(&small(0.0, 11)).unwrap();
        assert!(tr.values.iter().all(|&v| v == tr.values[0]));
        let c = autocorrelation(&tr).unwrap();
        assert!(c.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_trace_is_degenerate() {
        let tr = FieldTrace {
            dt_us: 0.1,
            values: vec![0.0; 16],
        };
        assert!(matches!(autocorrelation(&tr), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cosine_autocorrelation() {
        let f = 0.01; // per µs
        let dt = 0.5;
        let n = 20_000;
        let values: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * f * i as f64 * dt).cos())
            .collect();
        let c = autocorrelation(&FieldTrace { dt_us: dt, values }).unwrap();
        for k in (0..400).step_by(7) {
            let expected = (2.0 * PI * f * k as f64 * dt).cos();
            assert!((c.values[k] - expected).abs() < 5e-3, "lag {k}");
        }
    }

    #[test]
    fn white_noise_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c = autocorrelation(&FieldTrace { dt_us: 1.0, values }).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        let outside = c.values[1..200].iter().filter(|v| v.abs() > bound).count();
        // 3σ: expect well under 2% of lags outside
        assert!(outside <= 3, "{outside} lags beyond 3 sigma");
    }

    #[test]
    fn direct_lagged_sums_agree_with_fft() {
        let x: Vec<f64> = (0..37).map(|i| ((i * i) as f64 * 0.37).sin()).collect();
        let fast = lagged_products(&x, 20);
        for k in 0..=20 {
            let direct: f64 = (0..x.len() - k).map(|i| x[i] * x[i + k]).sum();
            assert!((fast[k] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn one_over_e_interpolates() {
        let ts = TimeSeries::uniform(0.0, 1.0, vec![1.0, 0.8, 0.5, 0.3, 0.1]).unwrap();
        let t = one_over_e_time(&ts).unwrap();
        let target = (-1.0f64).exp();
        assert!((t - (2.0 + (0.5 - target) / 0.2)).abs() < 1e-12);
        let flat = TimeSeries::uniform(0.0, 1.0, vec![1.0; 5]).unwrap();
        assert!(one_over_e_time(&flat).is_none());
    }
}
