//! Small dense Levenberg–Marquardt solver for lineshape and envelope fits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when every parameter step is below `rel_tol·(|p| + rel_tol)`.
    pub rel_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// `sqrt(Σ wᵢ·rᵢ²)` at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solves `a·x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Minimizes `Σ wᵢ (model(xᵢ, p) − yᵢ)²`.
///
/// `model(x, p, grad)` returns the model value and writes `∂model/∂p` into
/// `grad`. `lower` bounds are enforced by projection after every step.
pub fn levenberg_marquardt<M>(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    p0: &[f64],
    lower: &[f64],
    model: M,
    opts: LmOptions,
) -> Result<LmFit>
where
    M: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let np = p0.len();
    let mut grad = vec![0.0; np];
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let project = |p: &mut [f64]| {
        for (v, lo) in p.iter_mut().zip(lower) {
            if *v < *lo {
                *v = *lo;
            }
        }
    };
    let cost = |p: &[f64], grad: &mut [f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let r = model(x, p, grad) - y;
                w(i) * r * r
            })
            .sum()
    };

    let mut p = p0.to_vec();
    project(&mut p);
    let mut c = cost(&p, &mut grad);
    if !c.is_finite() {
        return Err(Error::FitRejected(
            "non-finite cost at the initial guess".into(),
        ));
    }
    let mut lambda = 1e-3;

    for iter in 1..=opts.max_iterations {
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let r = model(x, &p, &mut grad) - y;
            let wi = w(i);
            for a in 0..np {
                jtr[a] -= wi * grad[a] * r;
                for b in 0..=a {
                    jtj[a][b] += wi * grad[a] * grad[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[b][a] = jtj[a][b];
            }
        }
        if jtr.iter().all(|g| g.abs() == 0.0) {
            return Ok(LmFit {
                params: p,
                residual_norm: c.sqrt(),
                iterations: iter,
            });
        }

        loop {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(step) = solve(damped, jtr.clone()) else {
                lambda *= 10.0;
                if lambda > 1e30 {
                    return Err(Error::NonConvergence {
                        iterations: iter,
                        last: p,
                    });
                }
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let small = trial
                .iter()
                .zip(&p)
                .all(|(t, q)| (t - q).abs() <= opts.rel_tol * (q.abs() + opts.rel_tol));
            let ct = cost(&trial, &mut grad);
            if ct.is_finite() && ct <= c {
                p = trial;
                c = ct;
                lambda = (lambda / 3.0).max(1e-15);
                if small {
                    return Ok(LmFit {
                        params: p,
                        residual_norm: c.sqrt(),
                        iterations: iter,
                    });
                }
                break;
            }
            if small {
                // no representable improvement left
                return Ok(LmFit {
                    params: p,
                    residual_norm: c.sqrt(),
                    iterations: iter,
                });
            }
            lambda *= 4.0;
            if lambda > 1e30 {
                return Ok(LmFit {
                    params: p,
                    residual_norm: c.sqrt(),
                    iterations: iter,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        last: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_exactly() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let fit = levenberg_marquardt(
            &xs,
            &ys,
            None,
            &[1.0, 0.1],
            &[f64::NEG_INFINITY, 0.0],
            |x, p, g| {
                let e = (-p[1] * x).exp();
                g[0] = e;
                g[1] = -p[0] * x * e;
                p[0] * e
            },
            LmOptions::default(),
        )
        .unwrap();
        assert!((fit.params[0] - 3.0).abs() < 1e-9);
        assert!((fit.params[1] - 0.7).abs() < 1e-9);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.3 * x).sin()).collect();
        let res = levenberg_marquardt(
            &xs,
            &ys,
            None,
            &[2.0],
            &[f64::NEG_INFINITY],
            |x, p, g| {
                g[0] = x * (p[0] * x).cos();
                (p[0] * x).sin()
            },
            LmOptions {
                max_iterations: 1,
                rel_tol: 1e-14,
            },
        );
        match res {
            Err(Error::NonConvergence { iterations, last }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last.len(), 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
