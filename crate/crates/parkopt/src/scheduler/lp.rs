//! Dense bounded-variable primal simplex for small linear programs.
//!
//! Solves `min cᵀy` subject to `lb ≤ y ≤ ub` and `lo ≤ G y ≤ hi`, with
//! every bound finite. Each row gets a bounded slack `s = G y`, and a
//! phase-one artificial makes the starting basis feasible. Bland's rule
//! picks both entering and leaving variables, so the method cannot cycle.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 10_000;

/// Errors raised by the LP solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0})")]
    Infeasible(f64),
    #[error("bounds must be finite with lb <= ub")]
    BadBounds,
    #[error("simplex exceeded its pivot limit")]
    PivotLimit,
}

/// A small LP with bounded variables and two-sided rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLp {
    pub c: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
}

/// Optimal vertex with its reduced costs.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    /// Reduced cost of every structural variable at the optimal basis.
    pub reduced: Vec<f64>,
    /// Whether each structural variable is basic.
    pub basic: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    t: Vec<Vec<f64>>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => self.lb[j],
            Status::Upper => self.ub[j],
            Status::Basic => {
                let r = self.basis.iter().position(|&b| b == j).unwrap_or(0);
                self.xb[r]
            }
        }
    }

    fn reduced(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .basis
                .iter()
                .enumerate()
                .map(|(r, &b)| cost[b] * self.t[r][j])
                .sum::<f64>()
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
    }

    /// Runs simplex iterations for `cost` until no improving variable remains.
    fn optimize(&mut self, cost: &[f64]) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let n = self.status.len();
            let mut entering = None;
            for j in 0..n {
                if self.ub[j] - self.lb[j] <= 0.0 {
                    continue;
                }
                let d = self.reduced(cost, j);
                match self.status[j] {
                    Status::Lower if d < -COST_TOL => {
                        entering = Some((j, 1.0));
                        break;
                    }
                    Status::Upper if d > COST_TOL => {
                        entering = Some((j, -1.0));
                        break;
                    }
                    _ => {}
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            let mut step = self.ub[j] - self.lb[j];
            let mut leave: Option<(usize, bool)> = None;
            for (r, &b) in self.basis.iter().enumerate() {
                let delta = -dir * self.t[r][j];
                let limit = if delta < -PIVOT_TOL {
                    Some(((self.xb[r] - self.lb[b]).max(0.0) / -delta, false))
                } else if delta > PIVOT_TOL {
                    Some(((self.ub[b] - self.xb[r]).max(0.0) / delta, true))
                } else {
                    None
                };
                if let Some((lim, to_upper)) = limit {
                    let better = match leave {
                        None => lim < step,
                        Some((lr, _)) => lim < step - 1e-15 || (lim <= step && b < self.basis[lr]),
                    };
                    if better {
                        step = lim;
                        leave = Some((r, to_upper));
                    }
                }
            }
            for r in 0..self.basis.len() {
                self.xb[r] -= dir * step * self.t[r][j];
            }
            match leave {
                None => {
                    self.status[j] = if dir > 0.0 {
                        Status::Upper
                    } else {
                        Status::Lower
                    };
                }
                Some((r, to_upper)) => {
                    let start = if dir > 0.0 { self.lb[j] } else { self.ub[j] };
                    let old = self.basis[r];
                    self.status[old] = if to_upper {
                        Status::Upper
                    } else {
                        Status::Lower
                    };
                    self.pivot(r, j);
                    self.basis[r] = j;
                    self.status[j] = Status::Basic;
                    self.xb[r] = start + dir * step;
                }
            }
        }
        Err(LpError::PivotLimit)
    }
}

/// Solves `lp` to an optimal vertex.
pub fn solve(lp: &BoxLp) -> Result<LpSolution, LpError> {
    let n = lp.c.len();
    let m = lp.rows.len();
    for j in 0..n {
        if !(lp.lb[j].is_finite() && lp.ub[j].is_finite() && lp.lb[j] <= lp.ub[j]) {
            return Err(LpError::BadBounds);
        }
    }
    for r in 0..m {
        if !(lp.row_lo[r].is_finite() && lp.row_hi[r].is_finite() && lp.row_lo[r] <= lp.row_hi[r]) {
            return Err(LpError::BadBounds);
        }
    }
    // Columns: structural y, row slacks s, artificials a.
    let total = n + 2 * m;
    let mut lb = lp.lb.clone();
    let mut ub = lp.ub.clone();
    lb.extend(&lp.row_lo);
    ub.extend(&lp.row_hi);
    lb.extend(std::iter::repeat_n(0.0, m));
    ub.extend(std::iter::repeat_n(f64::MAX, m));
    let mut status = vec![Status::Lower; total];
    let mut t = vec![vec![0.0; total]; m];
    let mut xb = vec![0.0; m];
    let mut basis = Vec::with_capacity(m);
    for r in 0..m {
        let gy: f64 = lp.rows[r].iter().zip(&lp.lb).map(|(g, y)| g * y).sum();
        // Nonbasic slacks must sit on a bound; take the nearer one.
        let (s0, at) = if (gy - lp.row_lo[r]).abs() <= (gy - lp.row_hi[r]).abs() {
            (lp.row_lo[r], Status::Lower)
        } else {
            (lp.row_hi[r], Status::Upper)
        };
        status[n + r] = at;
        let resid = gy - s0;
        let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
        // Row r reads a + sign * s - sign * G y = 0, so the artificial starts basic.
        for j in 0..n {
            t[r][j] = -sign * lp.rows[r][j];
        }
        t[r][n + r] = sign;
        t[r][n + m + r] = 1.0;
        xb[r] = resid.abs();
        basis.push(n + m + r);
        status[n + m + r] = Status::Basic;
    }
    let mut tab = Tableau {
        t,
        xb,
        basis,
        status,
        lb,
        ub,
    };
    let mut phase1 = vec![0.0; total];
    for c in phase1.iter_mut().skip(n + m) {
        *c = 1.0;
    }
    tab.optimize(&phase1)?;
    let infeas: f64 = (n + m..total).map(|j| tab.value(j)).sum();
    if infeas > FEAS_TOL * (1.0 + lp.row_hi.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
        return Err(LpError::Infeasible(infeas));
    }
    for j in n + m..total {
        tab.ub[j] = 0.0;
        if tab.status[j] != Status::Basic {
            tab.status[j] = Status::Lower;
        }
    }
    let mut cost = lp.c.clone();
    cost.extend(std::iter::repeat_n(0.0, 2 * m));
    tab.optimize(&cost)?;
    let y: Vec<f64> = (0..n)
        .map(|j| tab.value(j).clamp(lp.lb[j], lp.ub[j]))
        .collect();
    let objective = y.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    let reduced = (0..n).map(|j| tab.reduced(&cost, j)).collect();
    let basic = (0..n).map(|j| tab.status[j] == Status::Basic).collect();
    Ok(LpSolution {
        y,
        objective,
        reduced,
        basic,
    })
}

/// Checks optimality of `sol` by reduced-cost signs at nonbasic bounds.
pub fn certify(lp: &BoxLp, sol: &LpSolution, tol: f64) -> bool {
    sol.y.iter().enumerate().all(|(j, &v)| {
        if sol.basic[j] || lp.ub[j] == lp.lb[j] {
            return true;
        }
        let d = sol.reduced[j];
        if (v - lp.lb[j]).abs() <= 1e-9 {
            d >= -tol
        } else {
            d <= tol
        }
    })
}
