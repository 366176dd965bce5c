//! Load-shifting incentives: the power-law shifting function, recovery of
//! shifted amounts from metered demand deltas, willingness estimation and
//! the incentive price.
//!
//! A user offered price `p` moves the fraction `γ p / (d + 1)^α` of its
//! inelastic load forward by `d` slots, up to a total of `η`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ridge added to every normal equation.
pub const RIDGE: f64 = 1e-8;

/// Errors raised by the incentive model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncentiveError {
    #[error("consumption shares sum to {0}, expected 1")]
    ShareMismatch(f64),
    #[error("demand deltas do not determine the shift matrix; widen the horizon")]
    RankDeficient,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("pricing denominator vanishes; no interior optimum")]
    DegenerateDenominator,
    #[error("invalid shift model: {0}")]
    InvalidModel(String),
}

/// Willingness parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserShift {
    /// Willingness exponent; larger values mean shorter acceptable delays.
    pub alpha: f64,
    /// Amplitude per unit price.
    pub gamma: f64,
}

fn default_eta() -> f64 {
    0.15
}

fn default_window() -> usize {
    4
}

/// Shifting behaviour of every user plus the park-wide cap and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftModel {
    pub users: Vec<UserShift>,
    /// Largest fraction of a slot's load a user will move.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Longest forward delay, in slots.
    #[serde(default = "default_window")]
    pub window: usize,
}

impl ShiftModel {
    pub fn validate(&self) -> Result<(), IncentiveError> {
        if !(0.0..1.0).contains(&self.eta) {
            return Err(IncentiveError::InvalidModel(format!(
                "eta = {} not in [0, 1)",
                self.eta
            )));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !(u.alpha > 0.0) || !(u.gamma >= 0.0) || !u.gamma.is_finite() {
                return Err(IncentiveError::InvalidModel(format!(
                    "user {i}: need alpha > 0 and finite gamma >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Fraction of `user`'s load moved by `d` slots at price `p`, capped at `η`.
pub fn shift_fraction(m: &ShiftModel, user: usize, p: f64, d: usize) -> f64 {
    let u = m.users[user];
    (u.gamma * p / ((d + 1) as f64).powf(u.alpha)).min(m.eta)
}

/// Consumption-share weighted shifting function of all users.
pub fn integral_shift(
    m: &ShiftModel,
    beta: &[f64],
    p: f64,
    d: usize,
) -> Result<f64, IncentiveError> {
    let sum: f64 = beta.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(IncentiveError::ShareMismatch(sum));
    }
    Ok(beta
        .iter()
        .enumerate()
        .map(|(i, b)| b * shift_fraction(m, i, p, d))
        .sum())
}

/// Energy moved from a slot with load `x_il` by `d` slots; zero beyond the window.
pub fn shifted_amount(
    x_il: f64,
    p: f64,
    d: usize,
    m: &ShiftModel,
    beta: &[f64],
) -> Result<f64, IncentiveError> {
    if d > m.window {
        return Ok(0.0);
    }
    Ok(x_il * integral_shift(m, beta, p, d)?)
}

/// Consumption shares `β_i` from metered loads (mean share over the series).
pub fn consumption_shares(loads: &[Vec<f64>]) -> Vec<f64> {
    let totals: Vec<f64> = loads.iter().map(|l| l.iter().sum()).collect();
    let all: f64 = totals.iter().sum();
    if all <= 0.0 {
        return vec![1.0 / loads.len().max(1) as f64; loads.len()];
    }
    totals.iter().map(|t| t / all).collect()
}

/// Energy moved between slots: `a[t][t']` leaves `t` and arrives at `t'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftMatrix {
    pub a: Vec<Vec<f64>>,
}

impl ShiftMatrix {
    pub fn zeros(t: usize) -> Self {
        Self {
            a: vec![vec![0.0; t]; t],
        }
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    /// Builds `A[t][t+d] = x(t) p(t+d) c(d-1)` for forward delays `1..=c.len()`.
    pub fn from_delay_profile(x: &[f64], prices: &[f64], c: &[f64]) -> Self {
        let t_len = x.len();
        let mut m = Self::zeros(t_len);
        for t in 0..t_len {
            for (j, cd) in c.iter().enumerate() {
                let dest = t + j + 1;
                if dest < t_len {
                    m.a[t][dest] = x[t] * prices[dest] * cd;
                }
            }
        }
        m
    }

    /// Largest absolute entry, used for relative error checks.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Net demand change at slot `t`: arrivals minus departures.
pub fn demand_delta(a: &ShiftMatrix, t: usize) -> f64 {
    let n = a.horizon();
    (0..n)
        .filter(|&s| s != t)
        .map(|s| a.a[s][t] - a.a[t][s])
        .sum()
}

/// Demand deltas for every slot of the horizon.
pub fn demand_deltas(a: &ShiftMatrix) -> Vec<f64> {
    (0..a.horizon()).map(|t| demand_delta(a, t)).collect()
}

/// Recovered shift matrix with the fit residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFit {
    pub matrix: ShiftMatrix,
    /// Aggregate shifting slope per delay `1..=W`.
    pub profile: Vec<f64>,
    /// Euclidean norm of `J − J(A)`.
    pub residual: f64,
}

fn solve_normal(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = m.ncols();
    let mut ata = m.transpose() * m;
    let scale = (0..n).map(|i| ata[(i, i)]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return None;
    }
    for i in 0..n {
        ata[(i, i)] += RIDGE;
    }
    let chol = ata.cholesky()?;
    let l = chol.l();
    let min_pivot = (0..n)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-10 * scale {
        return None;
    }
    Some(chol.solve(&(m.transpose() * rhs)))
}

/// Recovers the shift matrix from demand deltas.
///
/// Each entry follows `A[t][t'] = X_IL(t) p(t') c(t' − t)`, so the unknowns
/// are the aggregate slopes `c(1..=W)`. They are fitted by ridge least
/// squares and projected onto `c ≥ 0`.
pub fn solve_shift_matrix(
    j: &[f64],
    prices: &[f64],
    x_il: &[f64],
    window: usize,
) -> Result<ShiftFit, IncentiveError> {
    let t_len = j.len();
    if t_len < 2 || prices.len() != t_len || x_il.len() != t_len {
        return Err(IncentiveError::InsufficientData(
            "need at least two slots of matching length".into(),
        ));
    }
    let w = window.min(t_len - 1);
    if w == 0 {
        return Err(IncentiveError::RankDeficient);
    }
    if j.iter().all(|v| *v == 0.0) {
        return Ok(ShiftFit {
            matrix: ShiftMatrix::zeros(t_len),
            profile: vec![0.0; w],
            residual: 0.0,
        });
    }
    let mut m = DMatrix::<f64>::zeros(t_len, w);
    for t in 0..t_len {
        for d in 1..=w {
            let mut v = 0.0;
            if t >= d {
                v += x_il[t - d] * prices[t];
            }
            if t + d < t_len {
                v -= x_il[t] * prices[t + d];
            }
            m[(t, d - 1)] = v;
        }
    }
    let rhs = DVector::from_column_slice(j);
    let c = solve_normal(&m, &rhs).ok_or(IncentiveError::RankDeficient)?;
    let profile: Vec<f64> = c.iter().map(|v| v.max(0.0)).collect();
    let matrix = ShiftMatrix::from_delay_profile(x_il, prices, &profile);
    let fitted = demand_deltas(&matrix);
    let residual = fitted
        .iter()
        .zip(j)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ShiftFit {
        matrix,
        profile,
        residual,
    })
}

/// Estimated willingness of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedUser {
    pub alpha: f64,
    pub gamma: f64,
    /// Metered consumption share.
    pub beta: f64,
}

/// Per-delay slopes `y(d) = A[t][t+d] / (X(t) p(t+d))` by least squares over the horizon.
pub fn delay_slopes(a: &ShiftMatrix, prices: &[f64], x_il: &[f64]) -> Vec<(usize, f64)> {
    let n = a.horizon();
    let mut out = Vec::new();
    for d in 1..n {
        let (mut num, mut den) = (0.0, 0.0);
        for t in 0..n - d {
            let basis = x_il[t] * prices[t + d];
            num += a.a[t][t + d] * basis;
            den += basis * basis;
        }
        if den > 0.0 {
            let y = num / (den + RIDGE);
            if y > 0.0 {
                out.push((d, y));
            }
        }
    }
    out
}

/// Fits `(α, γ)` for every user from its own shift matrix.
///
/// The per-delay slopes come from a least-squares fit over all slot pairs;
/// `ln y(d) = ln γ − α ln(d + 1)` is then fitted in the log domain.
pub fn fit_shift_models(
    matrices: &[ShiftMatrix],
    prices: &[f64],
    loads: &[Vec<f64>],
) -> Result<Vec<FittedUser>, IncentiveError> {
    if matrices.len() != loads.len() {
        return Err(IncentiveError::InsufficientData(
            "one shift matrix and one load series per user are required".into(),
        ));
    }
    if prices.iter().any(|p| !(*p > 0.0)) {
        return Err(IncentiveError::InsufficientData(
            "prices must be strictly positive".into(),
        ));
    }
    let betas = consumption_shares(loads);
    let mut out = Vec::with_capacity(matrices.len());
    for (i, (a, x)) in matrices.iter().zip(loads).enumerate() {
        let slopes = delay_slopes(a, prices, x);
        if slopes.len() < 2 {
            return Err(IncentiveError::InsufficientData(format!(
                "user {i}: fewer than two delays with nonzero shifting"
            )));
        }
        let (alpha, gamma) = fit_power_law(&slopes)?;
        out.push(FittedUser {
            alpha,
            gamma,
            beta: betas[i],
        });
    }
    Ok(out)
}

/// Log-domain least squares for `y(d) = γ / (d + 1)^α`.
pub fn fit_power_law(slopes: &[(usize, f64)]) -> Result<(f64, f64), IncentiveError> {
    let n = slopes.len();
    let mut m = DMatrix::<f64>::zeros(n, 2);
    let mut rhs = DVector::<f64>::zeros(n);
    for (row, (d, y)) in slopes.iter().enumerate() {
        m[(row, 0)] = 1.0;
        m[(row, 1)] = -((*d + 1) as f64).ln();
        rhs[row] = y.ln();
    }
    let sol = solve_normal(&m, &rhs).ok_or_else(|| {
        IncentiveError::InsufficientData("delays do not identify the exponent".into())
    })?;
    Ok((sol[1], sol[0].exp()))
}

/// Total shifting slope of `user` over forward delays `1..=w`.
pub fn window_slope(m: &ShiftModel, user: usize, w: usize) -> f64 {
    let u = m.users[user];
    (1..=w)
        .map(|d| u.gamma / ((d + 1) as f64).powf(u.alpha))
        .sum()
}

/// Splits the load `x` that `user` moves at price `p` over delays `1..=w`.
///
/// Per-delay fractions follow the shifting function; the total is scaled
/// down to `η` when it would exceed the cap.
pub fn split_shift(m: &ShiftModel, user: usize, p: f64, w: usize, x: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=w).map(|d| shift_fraction(m, user, p, d)).collect();
    let total: f64 = raw.iter().sum();
    let scale = if total > m.eta { m.eta / total } else { 1.0 };
    raw.iter().map(|r| r * scale * x).collect()
}

/// Inputs of the per-slot pricing problem for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingUser {
    /// Shiftable load this slot.
    pub x: f64,
    pub a: f64,
    pub b: f64,
    /// Derivative of the shifted fraction with respect to price.
    pub slope: f64,
}

/// How the incentive price was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceMethod {
    /// Interior stationary point.
    ClosedForm,
    /// Stationary point outside `[0, p_cap]`, clamped to the interval.
    Clamped,
    /// A user's cap binds; golden-section search on the capped objective.
    Search,
}

/// Incentive price with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceOutcome {
    pub price: f64,
    pub method: PriceMethod,
}

/// Incentive payment and inelastic-load terms of the slot cost at price `p`.
///
/// Each user contributes `p X R − a X² (1 − R)² + b X (1 − R)` with
/// `R = min(p · slope, η)`.
pub fn price_objective(p: f64, users: &[PricingUser], eta: f64) -> f64 {
    users
        .iter()
        .map(|u| {
            let r = (p * u.slope).min(eta);
            p * u.x * r - u.a * u.x * u.x * (1.0 - r).powi(2) + u.b * u.x * (1.0 - r)
        })
        .sum()
}

/// Derivative of the uncapped objective; zero at the closed-form price.
pub fn price_first_order(p: f64, users: &[PricingUser]) -> f64 {
    users
        .iter()
        .map(|u| {
            let s = u.slope;
            2.0 * p * s * u.x + 2.0 * u.a * u.x * u.x * (1.0 - p * s) * s - u.b * u.x * s
        })
        .sum()
}

/// Unconstrained stationary point of the pricing objective.
pub fn closed_form_price(users: &[PricingUser]) -> Result<f64, IncentiveError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for u in users {
        let w = u.x * u.slope;
        num += w * (2.0 * u.a * u.x - u.b);
        den += w * (2.0 * u.a * u.x * u.slope - 2.0);
    }
    if den.abs() < 1e-12 {
        return Err(IncentiveError::DegenerateDenominator);
    }
    Ok(num / den)
}

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Cost-minimizing incentive price on `[0, p_cap]`.
///
/// Uses the stationary point when no user's cap binds there; otherwise
/// searches the capped objective.
pub fn optimal_incentive_price(
    users: &[PricingUser],
    eta: f64,
    p_cap: f64,
) -> Result<PriceOutcome, IncentiveError> {
    let p = closed_form_price(users)?;
    let (clamped, method) = if (0.0..=p_cap).contains(&p) {
        (p, PriceMethod::ClosedForm)
    } else {
        (p.clamp(0.0, p_cap), PriceMethod::Clamped)
    };
    if users.iter().all(|u| clamped * u.slope <= eta) {
        return Ok(PriceOutcome {
            price: clamped,
            method,
        });
    }
    let best = golden_section(|q| price_objective(q, users, eta), 0.0, p_cap, 1e-10);
    Ok(PriceOutcome {
        price: best,
        method: PriceMethod::Search,
    })
}

/// Sum of price times shifted energy.
pub fn incentive_cost(prices: &[f64], amounts: &[f64]) -> f64 {
    prices.iter().zip(amounts).map(|(p, a)| p * a).sum()
}
