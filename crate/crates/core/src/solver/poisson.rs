//! Conjugate-gradient solve of the pressure Poisson equation on a
//! rectangular cell grid with zero-gradient walls.

use crate::error::{Error, Result};

/// Cell-centred Neumann Laplacian, negated so it is positive semidefinite.
/// Its null space is the constant field.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NegLaplacian {
    pub nx: usize,
    pub ny: usize,
    pub inv_h2: f64,
}

impl NegLaplacian {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let xc = x[c];
                let mut acc = 0.0;
                if i > 0 {
                    acc += xc - x[c - 1];
                }
                if i + 1 < nx {
                    acc += xc - x[c + 1];
                }
                if j > 0 {
                    acc += xc - x[c - nx];
                }
                if j + 1 < ny {
                    acc += xc - x[c + nx];
                }
                out[c] = acc * self.inv_h2;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves `A x = b` for the negated Laplacian, starting from `x`.
///
/// `b` is shifted to zero mean first so the singular system is consistent.
/// Stops once the true residual's max-norm is at most `tol`. Returns the
/// iteration count and the final residual norm.
pub(crate) fn solve(
    op: &NegLaplacian,
    b: &mut [f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, f64)> {
    let n = b.len();
    let mean = b.iter().sum::<f64>() / n as f64;
    b.iter_mut().for_each(|v| *v -= mean);

    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        op.apply(x, ap);
        for k in 0..n {
            r[k] = b[k] - ap[k];
        }
    };
    true_residual(x, &mut r, &mut ap);
    let mut res = max_abs(&r);
    let mut iterations = 0;
    // Restarting from the true residual guards against drift in the
    // recursively updated one.
    while res > tol {
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut inner = 0;
        while inner < n.max(8) && iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let a = rr / pap;
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * ap[k];
            }
            iterations += 1;
            inner += 1;
            if max_abs(&r) <= 0.5 * tol {
                break;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        true_residual(x, &mut r, &mut ap);
        res = max_abs(&r);
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("pressure residual after {iterations} iterations")));
        }
        if iterations >= max_iter && res > tol {
            return Err(Error::PoissonNotConverged { iterations, residual: res });
        }
    }
    Ok((iterations, res))
}
