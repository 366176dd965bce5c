//! One slot of the fast loop: balance-price iterations, storage guard and
//! residual projection.

use serde::{Deserialize, Serialize};

use crate::park_model::{
    step_battery, step_tank, Dispatch, Energy, ParkConfig, SlotData, StorageState,
};

use super::hub::{self, HubInputs, HubModel, N_VARS};
use super::qp;
use super::{
    momentum_combine, solve_user_subproblem, theta_update, update_lambda, Ablation, DualState,
    Mode, SchedulerError, SolverConfig,
};

/// Inelastic load and incentive decisions fixed before the fast loop starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotLoads {
    /// Inelastic electricity served per user, after shifting.
    pub il: Vec<f64>,
    pub price: f64,
    /// Load moved out of this slot per user.
    pub shifted: Vec<f64>,
    /// Load arriving from earlier slots per user.
    pub deferred: Vec<f64>,
}

impl SlotLoads {
    /// Serves every user's load in full at zero incentive.
    pub fn unshifted(x_il: &[f64]) -> Self {
        Self {
            il: x_il.to_vec(),
            price: 0.0,
            shifted: vec![0.0; x_il.len()],
            deferred: vec![0.0; x_il.len()],
        }
    }
}

/// Result of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    /// Executed, exactly balanced dispatch.
    pub dispatch: Dispatch,
    /// Fast-loop solution before the storage guard and balance projection.
    pub scheduled: Dispatch,
    /// Multipliers for the next slot.
    pub state: DualState,
    /// Physical storage levels after the slot.
    pub storage: StorageState,
    pub iterations: usize,
    /// Whether the stopping rule fired before the mini-slot cap.
    pub converged: bool,
    /// Largest balance residual absorbed by the projection.
    pub projected: f64,
    /// Set when the projection could not restore an exact balance.
    pub unbalanced: bool,
}

pub(crate) struct HubLoad {
    pub il_e: f64,
    pub il_h: f64,
    /// Elastic loads on this hub as `(index, energy, a, b, bound)`.
    pub els: Vec<(usize, Energy, f64, f64, f64)>,
}

impl HubLoad {
    /// Demand of electricity and heat at prices `tau`, with the elastic choices.
    pub fn demand(&self, tau: [f64; 2]) -> ([f64; 2], Vec<f64>) {
        let mut d = [self.il_e, self.il_h];
        let mut xs = Vec::with_capacity(self.els.len());
        for &(_, energy, a, b, bound) in &self.els {
            let e = energy_index(energy);
            let x = solve_user_subproblem(tau[e], a, b, bound);
            d[e] += x;
            xs.push(x);
        }
        (d, xs)
    }
}

fn energy_index(e: Energy) -> usize {
    match e {
        Energy::Electricity => 0,
        Energy::Heat => 1,
    }
}

/// Hub models and demand descriptions of one slot.
pub(crate) fn slot_models(
    cfg: &ParkConfig,
    slot: &SlotData,
    lambda_e: &[f64],
    lambda_h: &[f64],
    ablation: Ablation,
    il: &[f64],
) -> (Vec<HubModel>, Vec<HubLoad>) {
    let n_hubs = cfg.n_hubs();
    let models = (0..n_hubs)
        .map(|k| {
            let inputs = HubInputs {
                lambda_e: lambda_e[k],
                lambda_h: lambda_h[k],
                renewable: if ablation == Ablation::Oa {
                    0.0
                } else {
                    slot.r[k]
                },
                storage: ablation != Ablation::Ta,
            };
            HubModel::build(cfg, k, slot, inputs)
        })
        .collect();
    let loads = (0..n_hubs)
        .map(|k| HubLoad {
            il_e: il
                .iter()
                .enumerate()
                .map(|(i, x)| x * cfg.user_share(i, k))
                .sum(),
            il_h: slot.h_load * cfg.heat_share(k),
            els: cfg
                .elastic_loads
                .iter()
                .enumerate()
                .filter(|(_, l)| l.hub == k)
                .map(|(q, l)| (q, l.energy, l.a, l.b, l.bound))
                .collect(),
        })
        .collect();
    (models, loads)
}

/// Runs the fast loop for one slot and advances the slow multipliers.
///
/// Each mini-slot broadcasts `τ̄` (extrapolated with momentum in fast mode),
/// lets users choose their elastic loads, solves every hub's proximal
/// subproblem and moves `τ` along the resulting balance residual. The loop
/// stops when successive `τ` differ by less than `tol` and every residual is
/// below `tol/σ`. Executed storage moves are clipped to the physical levels,
/// the remaining imbalance is absorbed by grid trade, curtailment, boiler and
/// heat dump, and `λ` moves with the scheduled charge and discharge.
#[allow(clippy::too_many_arguments)]
pub fn run_slot(
    ds: &DualState,
    storage: &StorageState,
    slot: &SlotData,
    cfg: &ParkConfig,
    scfg: &SolverConfig,
    mode: Mode,
    ablation: Ablation,
    loads: &SlotLoads,
) -> Result<SlotOutcome, SchedulerError> {
    let n_hubs = cfg.n_hubs();
    let (models, hub_loads) =
        slot_models(cfg, slot, &ds.lambda_e, &ds.lambda_h, ablation, &loads.il);
    let cleared = clear_prices(&models, &hub_loads, &ds.tau, scfg, mode)?;
    let (tau, ys, els, iterations, converged) = (
        cleared.tau,
        cleared.ys,
        cleared.els,
        cleared.iterations,
        cleared.converged,
    );

    let mut dispatch = Dispatch::zeros(cfg);
    dispatch.price = loads.price;
    dispatch.shifted = loads.shifted.clone();
    dispatch.deferred = loads.deferred.clone();
    for k in 0..n_hubs {
        for (i, x) in loads.il.iter().enumerate() {
            dispatch.il[k][i] = x * cfg.user_share(i, k);
        }
        dispatch.heat_il[k] = hub_loads[k].il_h;
        dispatch.gas_load[k] = slot.g_load * cfg.gas_share(k);
        for (&(q, ..), x) in hub_loads[k].els.iter().zip(&els[k]) {
            dispatch.el[q] = *x;
        }
        dispatch.hubs[k] = hub::to_dispatch(&ys[k]);
    }
    let scheduled = dispatch.clone();

    let mut next_storage = storage.clone();
    for (k, hp) in cfg.hubs.iter().enumerate() {
        let h = &mut dispatch.hubs[k];
        let b = storage.b[k];
        h.c_e = h.c_e.min((hp.b_max - b) / hp.eta_ce).max(0.0);
        h.d_e = h
            .d_e
            .min((b + hp.eta_ce * h.c_e - hp.b_min) * hp.eta_de)
            .max(0.0);
        let w = storage.w[k];
        h.c_h = h.c_h.min((hp.w_max - w) / hp.eta_ch).max(0.0);
        h.d_h = h
            .d_h
            .min((w + hp.eta_ch * h.c_h - hp.w_min) * hp.eta_dh)
            .max(0.0);
        next_storage = step_battery(&next_storage, k, h.c_e, h.d_e, hp)
            .and_then(|s| step_tank(&s, k, h.c_h, h.d_h, hp))
            .map_err(|e| SchedulerError::InvariantBroken(e.to_string()))?;
    }

    let mut projected: f64 = 0.0;
    let mut unbalanced = false;
    for k in 0..n_hubs {
        let (moved, ok) = project_hub(&mut dispatch, cfg, &models[k], &hub_loads[k], k);
        projected = projected.max(moved);
        unbalanced |= !ok;
    }

    let mut state = update_lambda(ds, &scheduled);
    state.tau = tau.clone();
    state.tau_prev = tau;
    state.theta = cleared.theta;
    state.theta_prev = 1.0;
    state.n = iterations;
    Ok(SlotOutcome {
        dispatch,
        scheduled,
        state,
        storage: next_storage,
        iterations,
        converged,
        projected,
        unbalanced,
    })
}

/// Balance prices and decisions at the end of the fast loop.
pub(crate) struct Cleared {
    pub tau: Vec<[f64; 2]>,
    pub ys: Vec<[f64; N_VARS]>,
    /// Elastic consumption per hub, in the order of [`HubLoad::els`].
    pub els: Vec<Vec<f64>>,
    pub theta: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates the balance prices of every hub from `tau0` until the stopping rule fires.
pub(crate) fn clear_prices(
    models: &[HubModel],
    loads: &[HubLoad],
    tau0: &[[f64; 2]],
    scfg: &SolverConfig,
    mode: Mode,
) -> Result<Cleared, SchedulerError> {
    let n_hubs = models.len();
    let sigma = scfg.sigma;
    let mut tau: Vec<[f64; 2]> = tau0.to_vec();
    let mut tau_prev = tau.clone();
    let mut theta = 1.0;
    let mut ys: Vec<[f64; N_VARS]> = vec![[0.0; N_VARS]; n_hubs];
    let mut els: Vec<Vec<f64>> = vec![Vec::new(); n_hubs];
    let mut iterations = 0;
    let mut converged = false;
    for n in 1..=scfg.max_iter {
        iterations = n;
        let tau_bar: Vec<[f64; 2]> = match mode {
            Mode::Fast => {
                let next = theta_update(theta);
                let flat = momentum_combine(&tau.concat(), &tau_prev.concat(), next, theta);
                theta = next;
                flat.chunks(2).map(|c| [c[0], c[1]]).collect()
            }
            Mode::Plain => tau.clone(),
        };
        let mut step: f64 = 0.0;
        let mut resid: f64 = 0.0;
        let mut tau_next = Vec::with_capacity(n_hubs);
        for k in 0..n_hubs {
            let (demand, xs) = loads[k].demand(tau_bar[k]);
            let prox = models[k].prox(tau_bar[k], demand, sigma);
            let sol =
                qp::solve(&prox).map_err(|e| SchedulerError::Solver(format!("hub {k}: {e}")))?;
            let x = [models[k].x_e(&sol.y), models[k].x_h(&sol.y)];
            let mut t_k = [0.0; 2];
            for e in 0..2 {
                let g = demand[e] - x[e];
                t_k[e] = tau_bar[k][e] + sigma * g;
                step = step.max((t_k[e] - tau[k][e]).abs());
                resid = resid.max(g.abs());
            }
            ys[k].copy_from_slice(&sol.y);
            els[k] = xs;
            tau_next.push(t_k);
        }
        tau_prev = std::mem::replace(&mut tau, tau_next);
        if step < scfg.tol && resid <= scfg.tol / sigma {
            converged = true;
            break;
        }
    }
    Ok(Cleared {
        tau,
        ys,
        els,
        theta,
        iterations,
        converged,
    })
}

/// Moves `amount` of room out of `v` towards `limit`; returns what was moved.
fn take(v: &mut f64, limit: f64, amount: f64) -> f64 {
    if amount <= 0.0 {
        return 0.0;
    }
    if limit >= *v {
        let m = amount.min(limit - *v);
        *v += m;
        m
    } else {
        let m = amount.min(*v - limit);
        *v -= m;
        m
    }
}

/// Absorbs hub `k`'s balance residuals with its marginal slack devices.
///
/// Returns the largest residual handled and whether both balances close.
fn project_hub(
    d: &mut Dispatch,
    cfg: &ParkConfig,
    model: &HubModel,
    load: &HubLoad,
    k: usize,
) -> (f64, bool) {
    let mut ok = true;
    let mut y = hub::from_dispatch(&d.hubs[k]);
    let el_of = |d: &Dispatch, energy: Energy| -> f64 {
        load.els
            .iter()
            .filter(|l| l.1 == energy)
            .map(|l| d.el[l.0])
            .sum()
    };
    let shed = |d: &mut Dispatch, energy: Energy, mut amount: f64| -> f64 {
        let mut done = 0.0;
        for l in load.els.iter().filter(|l| l.1 == energy) {
            let m = amount.min(d.el[l.0]);
            d.el[l.0] -= m;
            amount -= m;
            done += m;
        }
        done
    };

    let demand_e = load.il_e + el_of(d, Energy::Electricity);
    let resid_e = model.x_e(&y) - demand_e;
    let moved_e = resid_e.abs();
    if resid_e < 0.0 {
        let mut need = -resid_e;
        let room = model.x_e_max - model.x_e(&y);
        if need > room {
            need -= shed(d, Energy::Electricity, need - room.max(0.0));
        }
        need -= take(&mut y[hub::E], model.ub[hub::E], need);
        need -= take(&mut y[hub::EO], 0.0, need);
        need -= take(&mut y[hub::SPILL], 0.0, need);
        need -= shed(d, Energy::Electricity, need);
        ok &= need <= 1e-9;
    } else if resid_e > 0.0 {
        let mut extra = resid_e;
        extra -= take(&mut y[hub::E], 0.0, extra);
        extra -= take(&mut y[hub::EO], model.ub[hub::EO], extra);
        extra -= take(&mut y[hub::SPILL], model.ub[hub::SPILL], extra);
        ok &= extra <= 1e-9;
    }

    let demand_h = load.il_h + el_of(d, Energy::Heat);
    let resid_h = model.x_h(&y) - demand_h;
    let moved_h = resid_h.abs();
    let eta_bg = cfg.hubs[k].eta_bg;
    if resid_h < 0.0 {
        let mut need = -resid_h;
        let gas_room = model.gas_cap - y[hub::GCHP] - y[hub::GB];
        let gb_limit = (model.ub[hub::GB]).min(y[hub::GB] + gas_room.max(0.0));
        need -= eta_bg * take(&mut y[hub::GB], gb_limit, need / eta_bg);
        need -= take(&mut y[hub::DUMP], 0.0, need);
        need -= shed(d, Energy::Heat, need);
        ok &= need <= 1e-9;
    } else if resid_h > 0.0 {
        let mut extra = resid_h;
        extra -= eta_bg * take(&mut y[hub::GB], 0.0, extra / eta_bg);
        extra -= take(&mut y[hub::DUMP], model.ub[hub::DUMP], extra);
        ok &= extra <= 1e-9;
    }
    d.hubs[k] = hub::to_dispatch(&y);
    (moved_e.max(moved_h), ok)
}
