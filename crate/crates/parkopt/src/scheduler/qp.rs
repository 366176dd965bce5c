//! Primal-dual interior-point method for small convex quadratic programs.
//!
//! Solves `min ½ yᵀH y + cᵀy` subject to `lb ≤ y ≤ ub` and
//! `lo ≤ G y ≤ hi`, with `H` positive semidefinite. Bounds are turned into
//! inequality rows `A y ≤ b` and the Mehrotra predictor-corrector scheme is
//! applied. Fixed variables are substituted out before the solve.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const MAX_ITERS: usize = 200;
const STEP_FRACTION: f64 = 0.995;

/// Errors raised by the QP solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("bounds must be finite with lb <= ub")]
    BadBounds,
    #[error("interior-point method did not converge (residual {0:e})")]
    NotConverged(f64),
    #[error("normal equations are not positive definite")]
    Singular,
}

/// A small convex QP with bounded variables and two-sided rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    /// Row-major Hessian, `n × n`.
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
}

/// Minimizer with the objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl BoxQp {
    /// Objective value at `y`.
    pub fn objective(&self, y: &[f64]) -> f64 {
        let mut v = 0.0;
        for (i, yi) in y.iter().enumerate() {
            v += self.c[i] * yi;
            for (j, yj) in y.iter().enumerate() {
                v += 0.5 * yi * self.h[i][j] * yj;
            }
        }
        v
    }
}

/// Solves `qp` to high accuracy.
pub fn solve(qp: &BoxQp) -> Result<QpSolution, QpError> {
    let n_all = qp.c.len();
    for j in 0..n_all {
        if !(qp.lb[j].is_finite() && qp.ub[j].is_finite() && qp.lb[j] <= qp.ub[j]) {
            return Err(QpError::BadBounds);
        }
    }
    let free: Vec<usize> = (0..n_all).filter(|&j| qp.ub[j] > qp.lb[j]).collect();
    let mut y_all: Vec<f64> = qp.lb.clone();
    let n = free.len();
    if n == 0 {
        return Ok(QpSolution {
            objective: qp.objective(&y_all),
            y: y_all,
            iterations: 0,
        });
    }
    // Reduced data after substituting fixed variables.
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        c[a] = qp.c[i];
        for j in 0..n_all {
            if qp.ub[j] <= qp.lb[j] {
                c[a] += qp.h[i][j] * qp.lb[j];
            }
        }
        for (b, &j) in free.iter().enumerate() {
            h[(a, b)] = qp.h[i][j];
        }
    }
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b_vec: Vec<f64> = Vec::new();
    for (a, &i) in free.iter().enumerate() {
        let mut up = vec![0.0; n];
        up[a] = 1.0;
        a_rows.push(up);
        b_vec.push(qp.ub[i]);
        let mut lo = vec![0.0; n];
        lo[a] = -1.0;
        a_rows.push(lo);
        b_vec.push(-qp.lb[i]);
    }
    for (r, row) in qp.rows.iter().enumerate() {
        let fixed: f64 = (0..n_all)
            .filter(|&j| qp.ub[j] <= qp.lb[j])
            .map(|j| row[j] * qp.lb[j])
            .sum();
        let reduced: Vec<f64> = free.iter().map(|&j| row[j]).collect();
        if reduced.iter().all(|v| *v == 0.0) {
            continue;
        }
        a_rows.push(reduced.clone());
        b_vec.push(qp.row_hi[r] - fixed);
        a_rows.push(reduced.iter().map(|v| -v).collect());
        b_vec.push(fixed - qp.row_lo[r]);
    }
    let m = a_rows.len();
    let a = DMatrix::from_fn(m, n, |r, j| a_rows[r][j]);
    let b = DVector::from_vec(b_vec);

    let mut y = DVector::from_iterator(n, free.iter().map(|&i| 0.5 * (qp.lb[i] + qp.ub[i])));
    let mut s = (&b - &a * &y).map(|v| v.max(1.0));
    let mut z = DVector::<f64>::from_element(m, 1.0);
    let b_scale = 1.0 + b.amax();
    let c_scale = 1.0 + c.amax();
    let mut iterations = 0;
    let mut best = (f64::INFINITY, y.clone());
    for it in 0..MAX_ITERS {
        iterations = it + 1;
        let rd = &h * &y + &c + a.transpose() * &z;
        let rp = &a * &y + &s - &b;
        let mu = s.dot(&z) / m as f64;
        let last_err = (rp.amax() / b_scale).max(rd.amax() / c_scale).max(mu);
        if last_err < best.0 {
            best = (last_err, y.clone());
        }
        if rp.amax() <= 1e-11 * b_scale && rd.amax() <= 1e-10 * c_scale && mu <= 1e-13 {
            break;
        }
        // Round-off floors the residuals once the complementarity gap is tiny.
        if mu <= 1e-15 && last_err > 1e3 * best.0 {
            break;
        }
        let d = z.component_div(&s);
        let mut mat = h.clone();
        let ad = DMatrix::from_fn(m, n, |r, j| a[(r, j)] * d[r]);
        mat += a.transpose() * ad;
        let chol = match factor(mat) {
            Some(f) => f,
            // Late iterates can be ill-conditioned enough to lose definiteness.
            None if best.0 <= 1e-9 => break,
            None => return Err(QpError::Singular),
        };
        let solve_dir = |rc: &DVector<f64>| {
            let s_inv_rc = rc.component_div(&s);
            let rhs = -&rd - a.transpose() * d.component_mul(&rp) + a.transpose() * &s_inv_rc;
            let dy = chol.solve(&rhs);
            let dz = d.component_mul(&(&a * &dy + &rp)) - &s_inv_rc;
            let ds = -(rc + s.component_mul(&dz)).component_div(&z);
            (dy, ds, dz)
        };
        let max_step = |ds: &DVector<f64>, dz: &DVector<f64>| {
            let mut alpha: f64 = 1.0;
            for r in 0..m {
                if ds[r] < 0.0 {
                    alpha = alpha.min(-s[r] / ds[r]);
                }
                if dz[r] < 0.0 {
                    alpha = alpha.min(-z[r] / dz[r]);
                }
            }
            alpha
        };
        let rc_aff = s.component_mul(&z);
        let (_, ds_a, dz_a) = solve_dir(&rc_aff);
        let alpha_a = max_step(&ds_a, &dz_a);
        let mu_aff = (&s + alpha_a * &ds_a).dot(&(&z + alpha_a * &dz_a)) / m as f64;
        let centering = (mu_aff / mu).powi(3);
        let rc = &rc_aff + ds_a.component_mul(&dz_a) - DVector::from_element(m, centering * mu);
        let (dy, ds, dz) = solve_dir(&rc);
        let alpha = (STEP_FRACTION * max_step(&ds, &dz)).min(1.0);
        y += alpha * dy;
        s += alpha * ds;
        z += alpha * dz;
    }
    let (best_err, y) = best;
    if best_err > 1e-7 {
        return Err(QpError::NotConverged(best_err));
    }
    for (a_idx, &i) in free.iter().enumerate() {
        y_all[i] = y[a_idx].clamp(qp.lb[i], qp.ub[i]);
    }
    Ok(QpSolution {
        objective: qp.objective(&y_all),
        y: y_all,
        iterations,
    })
}

/// Cholesky factor of `mat`, retried with a growing diagonal shift when round-off breaks definiteness.
fn factor(mat: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = mat.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    for _ in 0..6 {
        let mut m = mat.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(c) = m.cholesky() {
            return Some(c);
        }
        shift = if shift == 0.0 {
            1e-14 * scale
        } else {
            shift * 100.0
        };
    }
    None
}
