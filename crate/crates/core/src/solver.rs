//! Damped Newton iteration with central-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LhpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Convergence threshold on the max-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step relative to each variable's magnitude.
    pub fd_rel_step: f64,
    /// Smallest step fraction tried by the backtracking.
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            fd_rel_step: 1e-6,
            min_damping: 1.0 / 1024.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Central-difference Jacobian. `scale` gives, per variable, the magnitude
/// used when the variable itself is near zero.
pub fn fd_jacobian<F>(f: &mut F, x: &[f64], rel_step: f64, scale: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut probe = x.to_vec();
    let mut cols: Option<DMatrix<f64>> = None;
    for j in 0..n {
        let h = rel_step * x[j].abs().max(scale[j]);
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        let jac = cols.get_or_insert_with(|| DMatrix::zeros(up.len(), n));
        for (i, (a, b)) in up.iter().zip(&down).enumerate() {
            jac[(i, j)] = (a - b) / (2.0 * h);
        }
    }
    Ok(cols.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Solves `f(x) = 0` for square systems. Each Newton step is halved until
/// the residual norm decreases; a trial point where `f` fails counts as no
/// decrease.
pub fn newton<F>(mut f: F, x0: &[f64], scale: &[f64], opts: &NewtonOptions, what: &'static str) -> Result<NewtonReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut norm = max_norm(&r);
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(NewtonReport {
                x,
                residual: r,
                residual_norm: norm,
                iterations: it,
            });
        }
        let jac = fd_jacobian(&mut f, &x, opts.fd_rel_step, scale)?;
        let rhs = -DVector::from_column_slice(&r);
        let dx = jac
            .lu()
            .solve(&rhs)
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or_else(|| LhpError::Singularity(format!("{what}: Jacobian is singular")))?;

        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(xi, di)| xi + alpha * di).collect();
            if let Ok(rt) = f(&trial) {
                let nt = max_norm(&rt);
                if nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < opts.min_damping {
                return Err(LhpError::NoConvergence {
                    what,
                    iterations: it + 1,
                    residual: norm,
                });
            }
        }
    }
    if norm <= opts.tol {
        return Ok(NewtonReport {
            x,
            residual: r,
            residual_norm: norm,
            iterations: opts.max_iter,
        });
    }
    Err(LhpError::NoConvergence {
        what,
        iterations: opts.max_iter,
        residual: norm,
    })
}
