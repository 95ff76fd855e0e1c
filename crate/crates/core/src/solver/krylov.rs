//! Restarted, right-preconditioned GMRES on real vectors.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GmresConfig {
    /// Stop when `‖b − A x‖₂ ≤ rel_tol · ‖b‖₂`.
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            restart: 40,
            max_iters: 400,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after every inner iteration.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves `A x = b` from `x0`, iterating on `A M y = r` and returning `x = x0 + M y`.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    mut precondition: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: &[f64],
    cfg: &GmresConfig,
) -> Result<GmresOutcome> {
    let b_norm = norm(b);
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    if b_norm == 0.0 && norm(x0) == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            history,
        });
    }
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut iterations = 0;

    loop {
        let ax = apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= cfg.rel_tol * scale {
            history.push(beta / scale);
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
            });
        }
        if iterations >= cfg.max_iters {
            return Err(Error::KrylovStagnation {
                iterations,
                residual: beta / scale,
                history,
            });
        }
        let cycle_start = beta / scale;

        let m = cfg.restart;
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < cfg.max_iters {
            let z = precondition(&basis[k])?;
            let mut w = apply(&z)?;
            // modified Gram–Schmidt, applied twice for orthogonality
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[j][k] += c;
                    axpy(&mut w, -c, v);
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            history.push(g[k].abs() / scale);
            if g[k].abs() <= 0.5 * cfg.rel_tol * scale || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; b.len()];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(&mut update, *yi, v);
        }
        let correction = precondition(&update)?;
        axpy(&mut x, 1.0, &correction);

        let cycle_end = history.last().copied().unwrap_or(cycle_start);
        if k == 0 || cycle_end > 0.999 * cycle_start {
            let ax = apply(&x)?;
            let residual = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / scale;
            if residual <= cfg.rel_tol {
                history.push(residual);
                return Ok(GmresOutcome {
                    x,
                    iterations,
                    history,
                });
            }
            return Err(Error::KrylovStagnation {
                iterations,
                residual,
                history,
            });
        }
    }
}
