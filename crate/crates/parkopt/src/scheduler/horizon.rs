//! Sequential slot loop over a scenario, with incentive pricing and cost accounting.

use serde::{Deserialize, Serialize};

use crate::incentive::{
    optimal_incentive_price, split_shift, window_slope, IncentiveError, PricingUser,
};
use crate::park_model::{Dispatch, ParkConfig, ScenarioSeries, SlotData, StorageState};

use super::slot::{run_slot, SlotLoads};
use super::{
    init_lambda, lambda_bounds, resolve_rho, soc_from_lambda, Ablation, DualState, Mode, PriceBand,
    SchedulerError, SolverConfig,
};

/// Cost of one slot's dispatch.
///
/// Grid and gas purchases less sales, plus per user the incentive paid and
/// `−a X̃² + b X̃` on the load `X̃ = X − shifted` kept in the slot, minus the
/// utility `a x² + b x` of every elastic load.
pub fn slot_cost(d: &Dispatch, slot: &SlotData, cfg: &ParkConfig) -> f64 {
    let trade = d.e() * slot.p_e + d.g() * slot.p_g - d.e_o() * slot.p_o;
    let users: f64 = cfg
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let sh = d.shifted.get(i).copied().unwrap_or(0.0);
            let kept = slot.x_il[i] - sh;
            d.price * sh - u.a * kept * kept + u.b * kept
        })
        .sum();
    let elastic: f64 = cfg
        .elastic_loads
        .iter()
        .zip(&d.el)
        .map(|(l, x)| l.a * x * x + l.b * x)
        .sum();
    trade + users - elastic
}

/// Counts of slots whose multipliers or implied storage left their bands.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub battery: usize,
    /// Tank multiplier outside the band anchored at the peak heat cost.
    pub tank: usize,
    /// Tank multiplier outside the band anchored at zero heat value.
    pub tank_zero_anchor: usize,
    /// Storage implied by the multipliers outside capacity.
    pub soc: usize,
    /// Slots whose executed dispatch still carries an imbalance.
    pub unbalanced: usize,
}

impl ViolationCounts {
    /// Violations of the properties the scheduler guarantees.
    pub fn guaranteed(&self) -> usize {
        self.battery + self.tank + self.soc + self.unbalanced
    }
}

/// Per-slot record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Multipliers after the slot's update.
    pub lambda_e: Vec<f64>,
    pub lambda_h: Vec<f64>,
    /// Physical storage after the slot.
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    pub dispatch: Dispatch,
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rho: f64,
    pub band: PriceBand,
    pub records: Vec<SlotRecord>,
    pub violations: ViolationCounts,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    pub fn mean_cost(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total_cost() / self.records.len() as f64
        }
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.iterations).collect()
    }
}

/// Prices the incentive for slot `t` and returns the loads served in it.
///
/// Loads arriving from earlier shifts are taken from `queue[i][0]`; this
/// slot's shifts are appended at their delays.
fn incentive_stage(
    cfg: &ParkConfig,
    scenario: &ScenarioSeries,
    t: usize,
    ablation: Ablation,
    queue: &mut [Vec<f64>],
) -> Result<SlotLoads, IncentiveError> {
    let slot = &scenario.slots[t];
    let m = &cfg.shift;
    let w = m.window.min(scenario.len() - 1 - t);
    let users: Vec<PricingUser> = cfg
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| PricingUser {
            x: slot.x_il[i],
            a: u.a,
            b: u.b,
            slope: window_slope(m, i, w),
        })
        .collect();
    let p_cap = scenario.p_e_max();
    let price = if ablation == Ablation::Ca || w == 0 {
        0.0
    } else {
        match optimal_incentive_price(&users, m.eta, p_cap) {
            Ok(o) => o.price,
            Err(IncentiveError::DegenerateDenominator) => {
                let f = |p| crate::incentive::price_objective(p, &users, m.eta);
                if f(p_cap) < f(0.0) {
                    p_cap
                } else {
                    0.0
                }
            }
            Err(e) => return Err(e),
        }
    };
    let n = cfg.n_users();
    let mut loads = SlotLoads {
        il: vec![0.0; n],
        price,
        shifted: vec![0.0; n],
        deferred: vec![0.0; n],
    };
    for i in 0..n {
        let q = &mut queue[i];
        loads.deferred[i] = if q.is_empty() { 0.0 } else { q.remove(0) };
        let parts = split_shift(m, i, price, w, slot.x_il[i]);
        for (d, amount) in parts.iter().enumerate() {
            if q.len() <= d {
                q.resize(d + 1, 0.0);
            }
            q[d] += amount;
        }
        loads.shifted[i] = parts.iter().sum();
        loads.il[i] = slot.x_il[i] - loads.shifted[i] + loads.deferred[i];
    }
    Ok(loads)
}

/// Runs the scheduler over every slot of `scenario`.
///
/// Starts from the configured storage levels with multipliers matched to
/// them and fast multipliers at zero, warm-starts `τ` from slot to slot and
/// counts band violations after every slow update.
pub fn run_horizon(
    scenario: &ScenarioSeries,
    cfg: &ParkConfig,
    scfg: &SolverConfig,
    mode: Mode,
    ablation: Ablation,
) -> Result<Trajectory, SchedulerError> {
    cfg.validate()?;
    scfg.validate()?;
    scenario.validate(cfg.n_hubs(), cfg.n_users())?;
    if scenario.is_empty() {
        return Err(SchedulerError::InvalidConfig(
            "scenario has no slots".into(),
        ));
    }
    let band = PriceBand::from_scenario(scenario, cfg);
    let rho = resolve_rho(cfg, &band, scfg.rho)?;
    let mut storage = StorageState::initial(cfg);
    let mut ds = init_lambda(cfg, rho, &storage, scenario.slots[0].p_e, band, scfg.sigma);
    let mut violations = ViolationCounts::default();
    check_bands(&ds, cfg, &mut violations);
    let mut queue: Vec<Vec<f64>> = vec![Vec::new(); cfg.n_users()];
    let mut records = Vec::with_capacity(scenario.len());
    for t in 0..scenario.len() {
        let slot = &scenario.slots[t];
        let loads = incentive_stage(cfg, scenario, t, ablation, &mut queue)?;
        let out = run_slot(&ds, &storage, slot, cfg, scfg, mode, ablation, &loads)?;
        if out.unbalanced {
            violations.unbalanced += 1;
        }
        ds = out.state;
        storage = out.storage;
        check_bands(&ds, cfg, &mut violations);
        records.push(SlotRecord {
            t,
            cost: slot_cost(&out.dispatch, slot, cfg),
            iterations: out.iterations,
            converged: out.converged,
            lambda_e: ds.lambda_e.clone(),
            lambda_h: ds.lambda_h.clone(),
            b: storage.b.clone(),
            w: storage.w.clone(),
            dispatch: out.dispatch,
        });
    }
    Ok(Trajectory {
        rho,
        band,
        records,
        violations,
    })
}

fn check_bands(ds: &DualState, cfg: &ParkConfig, v: &mut ViolationCounts) {
    let slack = |x: f64| 1e-9 * (1.0 + x.abs());
    let zero_anchor = PriceBand {
        h_max: 0.0,
        ..ds.band
    };
    let outside = |x: f64, (lo, hi): (f64, f64)| x < lo - slack(lo) || x > hi + slack(hi);
    for k in 0..cfg.n_hubs() {
        let b = lambda_bounds(cfg, k, ds.rho, &ds.band);
        let z = lambda_bounds(cfg, k, ds.rho, &zero_anchor);
        v.battery += outside(ds.lambda_e[k], b.battery) as usize;
        v.tank += outside(ds.lambda_h[k], b.tank) as usize;
        v.tank_zero_anchor += outside(ds.lambda_h[k], z.tank) as usize;
    }
    if ds.rho > 0.0 && soc_from_lambda(ds, cfg).is_err() {
        v.soc += 1;
    }
}
