//! Two-timescale dual scheduler.
//!
//! Slow multipliers `λ` price the long-run charge/discharge balance of every
//! battery and tank and move once per slot. Fast multipliers `τ` price the
//! per-hub supply/demand balance of each energy carrier and are iterated to
//! convergence inside every slot, either by plain dual ascent or with
//! momentum.

pub mod horizon;
pub mod hub;
pub mod lp;
pub mod qp;
pub mod slot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incentive::IncentiveError;
use crate::park_model::{
    Dispatch, Energy, HubDispatch, ModelError, ParkConfig, ScenarioSeries, SlotData, StorageState,
};

pub use horizon::{run_horizon, slot_cost, SlotRecord, Trajectory, ViolationCounts};
pub use hub::{HubInputs, HubModel};
pub use slot::{run_slot, SlotLoads, SlotOutcome};

/// Errors raised by the scheduler.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// A property that must hold at every slot was broken.
    #[error("invariant broken: {0}")]
    InvariantBroken(String),
    #[error("hub subproblem is infeasible: {0}")]
    Infeasible(String),
    #[error("hub subproblem is unbounded")]
    Unbounded,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Incentive(#[from] IncentiveError),
}

/// Fast-loop variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Momentum-accelerated iterations.
    Fast,
    /// Plain dual gradient iterations.
    Plain,
}

/// Baselines that switch off one feature of the park.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Everything enabled.
    Full,
    /// Storage disabled.
    Ta,
    /// Renewables forced to zero.
    Oa,
    /// Incentive price forced to zero.
    Ca,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::Ta, Ablation::Oa, Ablation::Ca];
}

/// Choice of the slow stepsize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoPolicy {
    /// Smallest stepsize that keeps every multiplier band valid.
    Auto,
    Fixed(f64),
}

/// Settings of the fast loop and the slow stepsize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma: f64,
    pub max_iter: usize,
    /// Stop once successive `τ` iterates differ by less than this.
    pub tol: f64,
    pub rho: RhoPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 0.2,
            max_iter: 200,
            tol: 0.01,
            rho: RhoPolicy::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SchedulerError::InvalidConfig(
                "sigma must be positive".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SchedulerError::InvalidConfig(
                "tolerance must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(SchedulerError::InvalidConfig(
                "max_iter must be positive".into(),
            ));
        }
        if let RhoPolicy::Fixed(r) = self.rho {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(SchedulerError::InvalidConfig(
                    "rho must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Price extremes that anchor the multiplier bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBand {
    pub p_e_max: f64,
    pub p_o_min: f64,
    /// Highest marginal cost of heat: boiler heat at the peak gas price.
    pub h_max: f64,
}

impl PriceBand {
    /// Band of `scenario` for the hubs of `cfg`.
    pub fn from_scenario(scenario: &ScenarioSeries, cfg: &ParkConfig) -> Self {
        Self {
            p_e_max: scenario.p_e_max(),
            p_o_min: scenario.p_o_min(),
            h_max: heat_value_max(cfg, scenario.p_g_max()),
        }
    }
}

/// Highest marginal cost of boiler heat at gas price `p_g_max`.
pub fn heat_value_max(cfg: &ParkConfig, p_g_max: f64) -> f64 {
    let eta = cfg
        .hubs
        .iter()
        .map(|h| h.eta_bg)
        .fold(f64::INFINITY, f64::min);
    p_g_max / eta
}

/// Slow and fast multipliers with their stepsizes and counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda_e: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub rho: f64,
    pub band: PriceBand,
    /// Balance prices per hub, `[electricity, heat]`.
    pub tau: Vec<[f64; 2]>,
    pub tau_prev: Vec<[f64; 2]>,
    pub theta: f64,
    pub theta_prev: f64,
    pub sigma: f64,
    /// Mini-slots run in the last slot.
    pub n: usize,
    /// Slots completed.
    pub t: usize,
}

/// Smallest slow stepsize that keeps every battery multiplier in its band.
pub fn rho_min(cfg: &ParkConfig, p_e_max: f64, p_o_min: f64) -> Result<f64, SchedulerError> {
    let mut best: f64 = 0.0;
    for (k, h) in cfg.hubs.iter().enumerate() {
        let den = h.b_max - h.b_min - h.d_e_max - h.c_e_max;
        if den <= 0.0 {
            return Err(SchedulerError::InvalidConfig(format!(
                "hub {k}: battery range does not exceed c_e_max + d_e_max"
            )));
        }
        best = best.max((p_e_max - p_o_min) / den);
    }
    Ok(best)
}

/// Smallest slow stepsize that keeps every tank multiplier in its band.
pub fn tank_rho_min(cfg: &ParkConfig, h_max: f64) -> Result<f64, SchedulerError> {
    let mut best: f64 = 0.0;
    for (k, h) in cfg.hubs.iter().enumerate() {
        let den = h.w_max - h.w_min - h.d_h_max - h.c_h_max;
        if den <= 0.0 {
            return Err(SchedulerError::InvalidConfig(format!(
                "hub {k}: tank range does not exceed c_h_max + d_h_max"
            )));
        }
        best = best.max(h_max / den);
    }
    Ok(best)
}

/// Stepsize chosen by `policy`: the larger of the battery and tank minima when automatic.
pub fn resolve_rho(
    cfg: &ParkConfig,
    band: &PriceBand,
    policy: RhoPolicy,
) -> Result<f64, SchedulerError> {
    match policy {
        RhoPolicy::Fixed(r) => Ok(r),
        RhoPolicy::Auto => {
            Ok(rho_min(cfg, band.p_e_max, band.p_o_min)?.max(tank_rho_min(cfg, band.h_max)?))
        }
    }
}

/// Initial multipliers matching the storage levels `s0`.
///
/// The battery multiplier starts at `ρ(B_0 − B_min − D_e_max) − p_e(0)` and
/// the tank multiplier at `ρ(W_0 − W_min − D_h_max) − h_max`, the inverse of
/// [`soc_from_lambda`]. Fast multipliers start at zero and `θ` at one.
pub fn init_lambda(
    cfg: &ParkConfig,
    rho: f64,
    s0: &StorageState,
    p_e0: f64,
    band: PriceBand,
    sigma: f64,
) -> DualState {
    let k = cfg.n_hubs();
    let lambda_e = cfg
        .hubs
        .iter()
        .zip(&s0.b)
        .map(|(h, b)| rho * (b - h.b_min - h.d_e_max) - p_e0)
        .collect();
    let lambda_h = cfg
        .hubs
        .iter()
        .zip(&s0.w)
        .map(|(h, w)| rho * (w - h.w_min - h.d_h_max) - band.h_max)
        .collect();
    DualState {
        lambda_e,
        lambda_h,
        rho,
        band,
        tau: vec![[0.0; 2]; k],
        tau_prev: vec![[0.0; 2]; k],
        theta: 1.0,
        theta_prev: 1.0,
        sigma,
        n: 0,
        t: 0,
    }
}

/// Moves every slow multiplier by `ρ` times the slot's net charge.
pub fn update_lambda(ds: &DualState, d: &Dispatch) -> DualState {
    let mut next = ds.clone();
    for (k, h) in d.hubs.iter().enumerate() {
        next.lambda_e[k] += ds.rho * (h.c_e - h.d_e);
        next.lambda_h[k] += ds.rho * (h.c_h - h.d_h);
    }
    next.t += 1;
    next
}

/// Closed intervals that bound the slow multipliers of one hub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub battery: (f64, f64),
    pub tank: (f64, f64),
}

/// Multiplier intervals of hub `k` for stepsize `rho` and `band`.
///
/// With `band.h_max = 0` the tank interval is `[−ρD_h_max, ρ(W_max − W_min) − ρD_h_max]`.
pub fn lambda_bounds(cfg: &ParkConfig, k: usize, rho: f64, band: &PriceBand) -> LambdaBounds {
    let h = &cfg.hubs[k];
    let b_lo = -band.p_e_max - rho * h.d_e_max;
    let w_lo = -band.h_max - rho * h.d_h_max;
    LambdaBounds {
        battery: (b_lo, b_lo + rho * (h.b_max - h.b_min)),
        tank: (w_lo, w_lo + rho * (h.w_max - h.w_min)),
    }
}

/// Storage levels implied by the slow multipliers.
pub fn soc_from_lambda(ds: &DualState, cfg: &ParkConfig) -> Result<StorageState, SchedulerError> {
    let mut b = Vec::with_capacity(cfg.n_hubs());
    let mut w = Vec::with_capacity(cfg.n_hubs());
    for (k, h) in cfg.hubs.iter().enumerate() {
        if ds.rho <= 0.0 {
            return Err(SchedulerError::InvariantBroken(
                "storage map needs a positive stepsize".into(),
            ));
        }
        let bk = (ds.lambda_e[k] + ds.band.p_e_max) / ds.rho + h.b_min + h.d_e_max;
        let wk = (ds.lambda_h[k] + ds.band.h_max) / ds.rho + h.w_min + h.d_h_max;
        let slack = 1e-9 * (1.0 + h.b_max.abs().max(h.w_max.abs()));
        if bk < h.b_min - slack || bk > h.b_max + slack {
            return Err(SchedulerError::InvariantBroken(format!(
                "hub {k}: battery level {bk} outside [{}, {}]",
                h.b_min, h.b_max
            )));
        }
        if wk < h.w_min - slack || wk > h.w_max + slack {
            return Err(SchedulerError::InvariantBroken(format!(
                "hub {k}: tank level {wk} outside [{}, {}]",
                h.w_min, h.w_max
            )));
        }
        b.push(bk);
        w.push(wk);
    }
    Ok(StorageState { b, w })
}

/// Momentum sequence step `θ = (1 + √(1 + 4θ_prev²)) / 2`.
pub fn theta_update(theta_prev: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * theta_prev * theta_prev).sqrt()) / 2.0
}

/// Extrapolated multipliers `(1 − ε)τ + ετ_prev` with `ε = (1 − θ_prev)/θ`.
pub fn momentum_combine(tau: &[f64], tau_prev: &[f64], theta: f64, theta_prev: f64) -> Vec<f64> {
    let eps = (1.0 - theta_prev) / theta;
    tau.iter()
        .zip(tau_prev)
        .map(|(t, p)| (1.0 - eps) * t + eps * p)
        .collect()
}

/// Demand minus supply of `energy` at hub `k`, the ascent direction for `τ`.
pub fn tau_gradient(
    d: &Dispatch,
    cfg: &ParkConfig,
    renewables: &[f64],
    k: usize,
    energy: Energy,
) -> f64 {
    let hp = &cfg.hubs[k];
    let supply = match energy {
        Energy::Electricity => d.hubs[k].x_e(hp, renewables[k]),
        Energy::Heat => d.hubs[k].x_h(hp),
    };
    d.hub_demand(cfg, k, energy) - supply
}

/// Dual ascent step `τ + σg`.
pub fn tau_step(tau: f64, gradient: f64, sigma: f64) -> f64 {
    tau + sigma * gradient
}

/// Consumption maximizing `a x² + b x − τ x` on `[0, bound]`.
pub fn solve_user_subproblem(tau: f64, a: f64, b: f64, bound: f64) -> f64 {
    ((b - tau) / (-2.0 * a)).clamp(0.0, bound)
}

/// Optimal vertex of hub `k`'s linear subproblem at balance prices `tau`.
///
/// The result is certified by its reduced costs before it is returned.
pub fn solve_hub_subproblem(
    cfg: &ParkConfig,
    k: usize,
    slot: &SlotData,
    inputs: HubInputs,
    tau: [f64; 2],
) -> Result<HubDispatch, SchedulerError> {
    if !(tau.iter().all(|v| v.is_finite())
        && inputs.lambda_e.is_finite()
        && inputs.lambda_h.is_finite())
    {
        return Err(SchedulerError::Solver("multipliers must be finite".into()));
    }
    if slot.p_o > slot.p_e {
        return Err(SchedulerError::Unbounded);
    }
    let model = HubModel::build(cfg, k, slot, inputs);
    let lp = model.lp(tau[0], tau[1]);
    let sol = lp::solve(&lp).map_err(|e| match e {
        lp::LpError::Infeasible(r) => SchedulerError::Infeasible(format!("hub {k}: residual {r}")),
        other => SchedulerError::Solver(other.to_string()),
    })?;
    if !lp::certify(&lp, &sol, 1e-9) {
        return Err(SchedulerError::Solver(format!(
            "hub {k}: optimality certificate failed"
        )));
    }
    Ok(hub::to_dispatch(&sol.y))
}

/// Additive gap `ρF` of the online cost over the relaxed optimum, with `F = Σ_k ½ max(C_e, D_e)² + ½ max(C_h, D_h)²`.
pub fn gap_bound(rho: f64, cfg: &ParkConfig) -> f64 {
    let f: f64 = cfg
        .hubs
        .iter()
        .map(|h| 0.5 * h.c_e_max.max(h.d_e_max).powi(2) + 0.5 * h.c_h_max.max(h.d_h_max).powi(2))
        .sum();
    rho * f
}
