//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PLANCK: f64 = 6.626_070_15e-34;
const MU0_OVER_4PI: f64 = 1e-7;

/// RMS z-field (Gauss) of a statistically polarized half-space of spin-½
/// nuclei starting `depth_nm` above a point sensor.
///
/// Sums `⟨B_z²⟩` of explicit point-dipole fields for unit moments along each
/// axis over a sinh-mapped 3-D Cartesian midpoint grid, all in SI units.
pub fn brms_half_space_oracle(
    density_per_nm3: f64,
    gamma_khz_per_gauss: f64,
    depth_nm: f64,
) -> f64 {
    let d = depth_nm * 1e-9;
    let rho = density_per_nm3 * 1e27;
    let gamma_hz_per_t = gamma_khz_per_gauss * 1e3 * 1e4;
    // variance of one Cartesian moment component for I = 1/2
    let moment_var = (PLANCK * gamma_hz_per_t).powi(2) / 4.0;

    let n_lat = 240;
    let n_z = 160;
    let s_max = 7.0;
    let hs = 2.0 * s_max / n_lat as f64;
    let hu = s_max / n_z as f64;
    let mut sum = 0.0;
    for iz in 0..n_z {
        let u = (iz as f64 + 0.5) * hu;
        let z = d + d * u.sinh();
        let wz = d * u.cosh() * hu;
        for ix in 0..n_lat {
            let s = -s_max + (ix as f64 + 0.5) * hs;
            let x = d * s.sinh();
            let wx = d * s.cosh() * hs;
            for iy in 0..n_lat {
                let t = -s_max + (iy as f64 + 0.5) * hs;
                let y = d * t.sinh();
                let wy = d * t.cosh() * hs;
                let r2 = x * x + y * y + z * z;
                let r = r2.sqrt();
                let r3 = r2 * r;
                let unit = [x / r, y / r, z / r];
                // B_z of a unit moment along axis a: (3 r̂_a r̂_z − δ_az)/r³
                let mut g2 = 0.0;
                for (a, ua) in unit.iter().enumerate() {
                    let delta = if a == 2 { 1.0 } else { 0.0 };
                    let b = (3.0 * ua * unit[2] - delta) / r3;
                    g2 += b * b;
                }
                sum += wx * wy * wz * g2;
            }
        }
    }
    let b2_tesla = MU0_OVER_4PI * MU0_OVER_4PI * moment_var * rho * sum;
    b2_tesla.sqrt() * 1e4
}

/// A random admissible plan and an in-band frequency.
#[derive(Debug, Clone, Copy)]
pub struct FoldCase {
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub fold_index: u32,
    pub fs_hz: f64,
    pub f_true_hz: f64,
}

/// `count` seeded fold cases with the rate strictly inside its window.
pub fn fold_cases(seed: u64, count: usize) -> Vec<FoldCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let f_low_hz = 10f64.powf(rng.random_range(4.0..7.5));
            let frac = 10f64.powf(rng.random_range(-3.0..-0.5));
            let f_high_hz = f_low_hz * (1.0 + frac);
            let max_n = (f_high_hz / (f_high_hz - f_low_hz)).floor() as u32;
            let fold_index = rng.random_range(1..=max_n.max(1));
            let lo = 2.0 * f_high_hz / fold_index as f64;
            let hi = if fold_index == 1 {
                2.0 * lo
            } else {
                2.0 * f_low_hz / (fold_index - 1) as f64
            };
            let fs_hz = lo + (hi - lo) * rng.random_range(0.05..0.95);
            let f_true_hz = f_low_hz + (f_high_hz - f_low_hz) * rng.random_range(0.01..0.99);
            FoldCase {
                f_low_hz,
                f_high_hz,
                fold_index,
                fs_hz,
                f_true_hz,
            }
        })
        .collect()
}
