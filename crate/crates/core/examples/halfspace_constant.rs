//! Derives the geometric constant in the RMS field of a statistically
//! polarized half-space above a sensor at unit depth:
//!
//! ```text
//! I = ∫_{z>1} (1 + 3 cos²θ) / r⁶ dV
//! ```
//!
//! In cylindrical coordinates the radial integrals are elementary,
//! `∫ 2πρ/r⁶ dρ = π/(2z⁴)` and `∫ 2πρ·3z²/r⁸ dρ = π/z⁴`, leaving
//! `∫₁^∞ 3π/(2z⁴) dz = π/2`. The numerical check below integrates the full
//! 2-D `(ρ, z)` form with composite Simpson rules on mapped variables.

use std::f64::consts::PI;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn main() {
    // z = 1/u, ρ = tan(v): both infinite ranges become finite
    let integrand = |rho: f64, z: f64| {
        let r2 = rho * rho + z * z;
        2.0 * PI * rho * (1.0 + 3.0 * z * z / r2) / (r2 * r2 * r2)
    };
    let numeric = simpson(
        |u| {
            if u == 0.0 {
                return 0.0;
            }
            let z = 1.0 / u;
            let inner = simpson(
                |v| {
                    let c = v.cos();
                    integrand(v.tan(), z) / (c * c)
                },
                0.0,
                PI / 2.0 - 1e-9,
                4000,
            );
            inner / (u * u)
        },
        0.0,
        1.0,
        400,
    );
    println!("closed form  pi/2 = {:.15}", PI / 2.0);
    println!("numerical         = {numeric:.15}");
    println!("relative error    = {:.2e}", numeric / (PI / 2.0) - 1.0);
}
