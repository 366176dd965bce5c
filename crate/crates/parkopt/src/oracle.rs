//! Centralized reference solvers used to certify the distributed scheduler.
//!
//! [`centralized_subproblem`] solves one slot with every balance enforced
//! explicitly by projected gradient descent, [`brute_force_small`] scans a
//! grid of device settings, and [`relaxed_lower_bound`] bounds the best
//! time-average cost of a whole horizon when storage only has to balance
//! charge and discharge on average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::park_model::{Dispatch, Energy, ParkConfig, ScenarioSeries, SlotData};
use crate::scheduler::hub::{self, HubModel, N_VARS};
use crate::scheduler::slot::{clear_prices, slot_models, HubLoad, SlotLoads};
use crate::scheduler::{lp, Ablation, DualState, Mode, PriceBand, SchedulerError, SolverConfig};

/// Largest number of grid points [`brute_force_small`] evaluates per hub.
pub const GRID_LIMIT: u128 = 10_000_000;

/// Errors raised by the oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("descent stalled with objective change {0:e}")]
    NotConverged(f64),
    #[error("grid has {0} points per hub, above the limit")]
    GridTooLarge(u128),
    #[error("slot is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// How an oracle value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Grid,
    ProjectedDescent,
    FullHorizon,
}

/// Optimal value and minimizer found by an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub objective: f64,
    pub dispatch: Dispatch,
    pub method: OracleMethod,
    /// Grid step or stopping tolerance.
    pub resolution: f64,
}

/// Slot objective at fixed slow multipliers.
///
/// Grid and gas purchases less sales, plus `λ` times the net charge of every
/// battery and tank, plus the inelastic-load terms, less the elastic utilities.
pub fn slot_objective(
    d: &Dispatch,
    slot: &SlotData,
    cfg: &ParkConfig,
    lambda_e: &[f64],
    lambda_h: &[f64],
) -> f64 {
    let mut v = 0.0;
    for (k, h) in d.hubs.iter().enumerate() {
        v += slot.p_e * h.e - slot.p_o * h.e_o + slot.p_g * (h.g_chp + h.g_b);
        v += lambda_e[k] * (h.c_e - h.d_e) + lambda_h[k] * (h.c_h - h.d_h);
    }
    v += slot.p_g * d.gas_load.iter().sum::<f64>();
    for (i, u) in cfg.users.iter().enumerate() {
        let sh = d.shifted.get(i).copied().unwrap_or(0.0);
        let kept = slot.x_il[i] - sh;
        v += d.price * sh - u.a * kept * kept + u.b * kept;
    }
    for (l, x) in cfg.elastic_loads.iter().zip(&d.el) {
        v -= l.a * x * x + l.b * x;
    }
    v
}

/// Elastic loads of one carrier at one hub, as `(a, b, bound)`.
#[derive(Debug, Clone, Default)]
struct Pool {
    loads: Vec<(f64, f64, f64)>,
}

impl Pool {
    fn capacity(&self) -> f64 {
        self.loads.iter().map(|l| l.2).sum()
    }

    fn at_price(&self, nu: f64) -> Vec<f64> {
        self.loads
            .iter()
            .map(|&(a, b, bound)| ((b - nu) / (-2.0 * a)).clamp(0.0, bound))
            .collect()
    }

    /// Price `ν` at which the pool consumes exactly `s`.
    ///
    /// At an empty or full pool this is the one-sided marginal utility, so
    /// the eliminated utility stays continuously differentiable on `[0, capacity]`.
    fn price_for(&self, s: f64) -> f64 {
        let mut lo = self
            .loads
            .iter()
            .map(|&(a, b, bound)| b + 2.0 * a * bound)
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .loads
            .iter()
            .map(|l| l.1)
            .fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.at_price(mid).iter().sum::<f64>() > s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Best split of `s` over the pool, with its utility and marginal utility.
    fn split(&self, s: f64) -> (Vec<f64>, f64, f64) {
        if self.loads.is_empty() {
            return (Vec::new(), 0.0, 0.0);
        }
        let s = s.clamp(0.0, self.capacity());
        let nu = self.price_for(s);
        let mut xs = self.at_price(nu);
        let total: f64 = xs.iter().sum();
        // Spread the bisection round-off over the loads with room left.
        if total > 0.0 {
            let scale = s / total;
            for x in xs.iter_mut() {
                *x *= scale;
            }
        }
        let u = self
            .loads
            .iter()
            .zip(&xs)
            .map(|(&(a, b, _), x)| a * x * x + b * x)
            .sum();
        (xs, u, nu)
    }
}

/// One hub's slot problem in the oracle's own representation.
struct HubProblem {
    lb: [f64; N_VARS],
    ub: [f64; N_VARS],
    cost: [f64; N_VARS],
    a_e: [f64; N_VARS],
    a_h: [f64; N_VARS],
    renewable: f64,
    il_e: f64,
    il_h: f64,
    x_e_max: f64,
    x_h_max: f64,
    gas_cap: f64,
    pools: [Pool; 2],
    /// Indices of the elastic loads in each pool.
    ids: [Vec<usize>; 2],
}

impl HubProblem {
    fn new(cfg: &ParkConfig, k: usize, slot: &SlotData, lam: (f64, f64), il: &[f64]) -> Self {
        let h = &cfg.hubs[k];
        let mut ub = [0.0; N_VARS];
        ub[hub::E] = cfg.hub_e_max(k);
        ub[hub::EO] = cfg.hub_e_o_max(k);
        ub[hub::CE] = h.c_e_max;
        ub[hub::DE] = h.d_e_max;
        ub[hub::CH] = h.c_h_max;
        ub[hub::DH] = h.d_h_max;
        ub[hub::GCHP] = (h.e_chp_max / h.eta_pg).min(h.h_chp_max / h.eta_hg);
        ub[hub::GB] = h.h_b_max / h.eta_bg;
        ub[hub::SPILL] = slot.r[k];
        ub[hub::DUMP] = h.h_chp_max + h.h_b_max + h.d_h_max;
        let mut cost = [0.0; N_VARS];
        cost[hub::E] = slot.p_e;
        cost[hub::EO] = -slot.p_o;
        cost[hub::CE] = lam.0;
        cost[hub::DE] = -lam.0;
        cost[hub::CH] = lam.1;
        cost[hub::DH] = -lam.1;
        cost[hub::GCHP] = slot.p_g;
        cost[hub::GB] = slot.p_g;
        let mut a_e = [0.0; N_VARS];
        a_e[hub::E] = 1.0;
        a_e[hub::EO] = -1.0;
        a_e[hub::CE] = -1.0;
        a_e[hub::DE] = 1.0;
        a_e[hub::GCHP] = h.eta_pg;
        a_e[hub::SPILL] = -1.0;
        let mut a_h = [0.0; N_VARS];
        a_h[hub::CH] = -1.0;
        a_h[hub::DH] = 1.0;
        a_h[hub::GCHP] = h.eta_hg;
        a_h[hub::GB] = h.eta_bg;
        a_h[hub::DUMP] = -1.0;
        let mut pools = [Pool::default(), Pool::default()];
        let mut ids = [Vec::new(), Vec::new()];
        for (q, l) in cfg
            .elastic_loads
            .iter()
            .enumerate()
            .filter(|(_, l)| l.hub == k)
        {
            let e = match l.energy {
                Energy::Electricity => 0,
                Energy::Heat => 1,
            };
            pools[e].loads.push((l.a, l.b, l.bound));
            ids[e].push(q);
        }
        Self {
            lb: [0.0; N_VARS],
            ub,
            cost,
            a_e,
            a_h,
            renewable: slot.r[k],
            il_e: il
                .iter()
                .enumerate()
                .map(|(i, x)| x * cfg.user_share(i, k))
                .sum(),
            il_h: slot.h_load * cfg.heat_share(k),
            x_e_max: h.x_e_max,
            x_h_max: h.x_h_max(),
            gas_cap: (cfg.hub_g_max(k) - slot.g_load * cfg.gas_share(k)).max(0.0),
            pools,
            ids,
        }
    }

    fn outputs(&self, y: &[f64]) -> [f64; 2] {
        let dot = |a: &[f64; N_VARS]| a.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        [dot(&self.a_e) + self.renewable, dot(&self.a_h)]
    }

    /// Ranges of the hub outputs that the loads can absorb.
    fn slabs(&self) -> [(f64, f64); 2] {
        [
            (
                self.il_e,
                self.x_e_max.min(self.il_e + self.pools[0].capacity()),
            ),
            (
                self.il_h,
                self.x_h_max.min(self.il_h + self.pools[1].capacity()),
            ),
        ]
    }

    /// Device cost less the elastic utility, with the gradient in `y`.
    fn value(&self, y: &[f64]) -> (f64, [f64; N_VARS]) {
        let x = self.outputs(y);
        let (_, u_e, nu_e) = self.pools[0].split(x[0] - self.il_e);
        let (_, u_h, nu_h) = self.pools[1].split(x[1] - self.il_h);
        let mut g = self.cost;
        for j in 0..N_VARS {
            g[j] -= nu_e * self.a_e[j] + nu_h * self.a_h[j];
        }
        let v = self.cost.iter().zip(y).map(|(c, q)| c * q).sum::<f64>() - u_e - u_h;
        (v, g)
    }

    fn feasible(&self) -> bool {
        let s = self.slabs();
        s[0].0 <= s[0].1 + 1e-12 && s[1].0 <= s[1].1 + 1e-12
    }
}

/// Largest number of multiplier updates of [`augmented`].
const OUTER_ITERS: usize = 400;
/// Largest number of projected-gradient steps per multiplier update.
const INNER_ITERS: usize = 200_000;
/// Penalty weight of the augmented Lagrangian.
const PENALTY: f64 = 10.0;

/// Minimizer of one hub's slot problem, with the elastic loads of each carrier.
struct HubSolution {
    y: [f64; N_VARS],
    els: [Vec<f64>; 2],
}

/// Solves one hub's slot problem by the method of multipliers.
///
/// Elastic loads are explicit variables and both balances are explicit
/// equality constraints; output caps and the gas limit are inequalities.
/// Each subproblem is minimized over the variable boxes by accelerated
/// projected gradient with restarts, so the projection is an exact clip.
fn augmented(p: &HubProblem, tol: f64) -> Result<HubSolution, OracleError> {
    let n_e = p.pools[0].loads.len();
    let n_h = p.pools[1].loads.len();
    let n = N_VARS + n_e + n_h;
    let mut lb = vec![0.0; n];
    let mut ub = vec![0.0; n];
    lb[..N_VARS].copy_from_slice(&p.lb);
    ub[..N_VARS].copy_from_slice(&p.ub);
    let mut quad = vec![(0.0, 0.0); n];
    for (e, pool) in p.pools.iter().enumerate() {
        let off = N_VARS + if e == 0 { 0 } else { n_e };
        for (q, &(a, b, bound)) in pool.loads.iter().enumerate() {
            ub[off + q] = bound;
            quad[off + q] = (a, b);
        }
    }
    let mut lin = vec![0.0; n];
    lin[..N_VARS].copy_from_slice(&p.cost);
    // Rows `r·z + r0`: two balances (= 0), then output caps and gas (≤ 0).
    let mut rows = vec![vec![0.0; n]; 5];
    let mut r0 = [0.0; 5];
    rows[0][..N_VARS].copy_from_slice(&p.a_e);
    rows[1][..N_VARS].copy_from_slice(&p.a_h);
    rows[2][..N_VARS].copy_from_slice(&p.a_e);
    rows[3][..N_VARS].copy_from_slice(&p.a_h);
    rows[4][hub::GCHP] = 1.0;
    rows[4][hub::GB] = 1.0;
    for j in N_VARS..N_VARS + n_e {
        rows[0][j] = -1.0;
    }
    for j in N_VARS + n_e..n {
        rows[1][j] = -1.0;
    }
    r0[0] = p.renewable - p.il_e;
    r0[1] = -p.il_h;
    r0[2] = p.renewable - p.x_e_max;
    r0[3] = -p.x_h_max;
    r0[4] = -p.gas_cap;
    let row_val =
        |r: usize, z: &[f64]| rows[r].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + r0[r];
    let lipschitz = 2.0 * quad.iter().fold(0.0f64, |m, q| m.max(q.0.abs()))
        + PENALTY
            * rows
                .iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>();
    let step = 1.0 / lipschitz;
    let clip = |z: &mut [f64]| {
        for j in 0..n {
            z[j] = z[j].clamp(lb[j], ub[j]);
        }
    };

    let mut mult = [0.0; 5];
    let mut z: Vec<f64> = (0..n).map(|j| 0.5 * (lb[j] + ub[j])).collect();
    let tol = tol.max(1e-12);
    let mut inner_tol: f64 = 1e-3;
    let grad = |z: &[f64], mult: &[f64; 5], g: &mut [f64]| {
        for j in 0..n {
            g[j] = lin[j] - 2.0 * quad[j].0 * z[j] - quad[j].1;
        }
        for r in 0..5 {
            let v = row_val(r, z);
            let w = if r < 2 {
                mult[r] + PENALTY * v
            } else {
                (mult[r] + PENALTY * v).max(0.0)
            };
            if w != 0.0 {
                for j in 0..n {
                    g[j] += w * rows[r][j];
                }
            }
        }
    };
    let mut g = vec![0.0; n];
    for _ in 0..OUTER_ITERS {
        // Accelerated projected gradient with gradient-based restart.
        let mut x_prev = z.clone();
        let mut yk = z.clone();
        let mut t = 1.0f64;
        let mut stationary = f64::INFINITY;
        for _ in 0..INNER_ITERS {
            grad(&yk, &mult, &mut g);
            let mut x: Vec<f64> = (0..n).map(|j| yk[j] - step * g[j]).collect();
            clip(&mut x);
            // Restart when the momentum points uphill.
            let uphill: f64 = (0..n).map(|j| (yk[j] - x[j]) * (x[j] - x_prev[j])).sum();
            let t_next = if uphill > 0.0 {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
            };
            let beta = if uphill > 0.0 {
                0.0
            } else {
                (t - 1.0) / t_next
            };
            grad(&x, &mult, &mut g);
            stationary = (0..n)
                .map(|j| ((x[j] - g[j]).clamp(lb[j], ub[j]) - x[j]).abs())
                .fold(0.0, f64::max);
            yk = (0..n).map(|j| x[j] + beta * (x[j] - x_prev[j])).collect();
            clip(&mut yk);
            x_prev = x;
            t = t_next;
            if stationary <= inner_tol {
                break;
            }
        }
        z = x_prev;
        let mut infeas: f64 = 0.0;
        for r in 0..5 {
            let v = row_val(r, &z);
            if r < 2 {
                mult[r] += PENALTY * v;
                infeas = infeas.max(v.abs());
            } else {
                mult[r] = (mult[r] + PENALTY * v).max(0.0);
                infeas = infeas.max(v.max(0.0)).max((mult[r] * v).abs());
            }
        }
        if infeas <= tol && stationary <= tol {
            let mut y = [0.0; N_VARS];
            y.copy_from_slice(&z[..N_VARS]);
            return Ok(HubSolution {
                y,
                els: [z[N_VARS..N_VARS + n_e].to_vec(), z[N_VARS + n_e..].to_vec()],
            });
        }
        inner_tol = (inner_tol * 0.1).max(0.1 * tol);
    }
    Err(OracleError::NotConverged(tol))
}

fn assemble(
    cfg: &ParkConfig,
    slot: &SlotData,
    loads: &SlotLoads,
    hubs: &[(HubProblem, HubSolution)],
) -> Dispatch {
    let mut d = Dispatch::zeros(cfg);
    d.price = loads.price;
    d.shifted = loads.shifted.clone();
    d.deferred = loads.deferred.clone();
    for (k, (p, sol)) in hubs.iter().enumerate() {
        d.hubs[k] = hub::to_dispatch(&sol.y);
        for (i, x) in loads.il.iter().enumerate() {
            d.il[k][i] = x * cfg.user_share(i, k);
        }
        d.heat_il[k] = p.il_h;
        d.gas_load[k] = slot.g_load * cfg.gas_share(k);
        for e in 0..2 {
            for (q, v) in p.ids[e].iter().zip(&sol.els[e]) {
                d.el[*q] = *v;
            }
        }
    }
    d
}

/// Exact slot optimum at the slow multipliers of `ds`, with balances enforced.
///
/// Each hub is solved separately by the method of multipliers with the
/// balances as explicit constraints; `tol` bounds the constraint violation
/// and the projected-gradient stationarity at the returned point.
pub fn centralized_subproblem(
    ds: &DualState,
    slot: &SlotData,
    loads: &SlotLoads,
    cfg: &ParkConfig,
    tol: f64,
) -> Result<OracleReport, OracleError> {
    let mut hubs = Vec::with_capacity(cfg.n_hubs());
    for k in 0..cfg.n_hubs() {
        let p = HubProblem::new(cfg, k, slot, (ds.lambda_e[k], ds.lambda_h[k]), &loads.il);
        if !p.feasible() {
            return Err(OracleError::Infeasible(format!(
                "hub {k} cannot serve its load"
            )));
        }
        let sol = augmented(&p, tol)?;
        hubs.push((p, sol));
    }
    let dispatch = assemble(cfg, slot, loads, &hubs);
    Ok(OracleReport {
        objective: slot_objective(&dispatch, slot, cfg, &ds.lambda_e, &ds.lambda_h),
        dispatch,
        method: OracleMethod::ProjectedDescent,
        resolution: tol,
    })
}

/// Best value of `price · v − U(v − base)` for `v` in `[lo, hi]`, if nonempty.
fn best_on_line(pool: &Pool, price: f64, lo: f64, hi: f64) -> Option<f64> {
    if lo > hi + 1e-12 {
        return None;
    }
    // The cost is convex in v; its minimizer is where the marginal utility meets `price`.
    let target: f64 = pool.at_price(price).iter().sum();
    Some(target.clamp(lo, hi.max(lo)))
}

/// Grid minimum of the slot objective at the slow multipliers of `ds`.
///
/// Every device except grid purchase and boiler runs over an `h`-grid of its
/// box; grid purchase and boiler output then follow from exact
/// one-dimensional minimizations against the elastic loads of their carrier.
pub fn brute_force_small(
    ds: &DualState,
    slot: &SlotData,
    loads: &SlotLoads,
    cfg: &ParkConfig,
    h: f64,
) -> Result<OracleReport, OracleError> {
    let free = [
        hub::EO,
        hub::CE,
        hub::DE,
        hub::CH,
        hub::DH,
        hub::GCHP,
        hub::SPILL,
        hub::DUMP,
    ];
    let mut hubs = Vec::with_capacity(cfg.n_hubs());
    for k in 0..cfg.n_hubs() {
        let p = HubProblem::new(cfg, k, slot, (ds.lambda_e[k], ds.lambda_h[k]), &loads.il);
        let axes: Vec<Vec<f64>> = free
            .iter()
            .map(|&j| {
                let n = (p.ub[j] / h).floor() as usize;
                let mut v: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
                if p.ub[j] - n as f64 * h > 1e-12 {
                    v.push(p.ub[j]);
                }
                v
            })
            .collect();
        let count: u128 = axes.iter().map(|a| a.len() as u128).product();
        if count > GRID_LIMIT {
            return Err(OracleError::GridTooLarge(count));
        }
        let slabs = p.slabs();
        let mut best: Option<(f64, [f64; N_VARS])> = None;
        let mut idx = vec![0usize; free.len()];
        'grid: loop {
            let mut y = [0.0; N_VARS];
            for (a, &j) in free.iter().enumerate() {
                y[j] = axes[a][idx[a]];
            }
            let base = p.outputs(&y);
            // Grid purchase: x_E = base_E + E within the electricity slab.
            let e_lo = (slabs[0].0 - base[0]).max(0.0);
            let e_hi = (slabs[0].1 - base[0]).min(p.ub[hub::E]);
            let e_ok = best_on_line(
                &p.pools[0],
                slot.p_e,
                base[0] + e_lo - p.il_e,
                base[0] + e_hi - p.il_e,
            );
            let gas_room = p.gas_cap - y[hub::GCHP];
            let eta = cfg.hubs[k].eta_bg;
            let g_hi_box = p.ub[hub::GB].min(gas_room);
            let g_lo = ((slabs[1].0 - base[1]) / eta).max(0.0);
            let g_hi = ((slabs[1].1 - base[1]) / eta).min(g_hi_box);
            let h_ok = best_on_line(
                &p.pools[1],
                slot.p_g / eta,
                base[1] + eta * g_lo - p.il_h,
                base[1] + eta * g_hi - p.il_h,
            );
            if let (Some(se), Some(sh)) = (e_ok, h_ok) {
                if gas_room >= -1e-12 {
                    y[hub::E] = (se + p.il_e - base[0]).clamp(0.0, p.ub[hub::E]);
                    y[hub::GB] = ((sh + p.il_h - base[1]) / eta).clamp(0.0, p.ub[hub::GB]);
                    let (v, _) = p.value(&y);
                    if best.is_none_or(|(b, _)| v < b) {
                        best = Some((v, y));
                    }
                }
            }
            for a in (0..free.len()).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    continue 'grid;
                }
                idx[a] = 0;
            }
            break;
        }
        let Some((_, y)) = best else {
            return Err(OracleError::Infeasible(format!(
                "no grid point of hub {k} is feasible"
            )));
        };
        let x = p.outputs(&y);
        let els = [
            p.pools[0].split(x[0] - p.il_e).0,
            p.pools[1].split(x[1] - p.il_h).0,
        ];
        hubs.push((p, HubSolution { y, els }));
    }
    let dispatch = assemble(cfg, slot, loads, &hubs);
    Ok(OracleReport {
        objective: slot_objective(&dispatch, slot, cfg, &ds.lambda_e, &ds.lambda_h),
        dispatch,
        method: OracleMethod::Grid,
        resolution: h,
    })
}

/// Lower bound on the time-average cost with storage balanced only on average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedBound {
    /// Best time-average dual value found.
    pub value: f64,
    /// Constant multipliers attaining it, per hub.
    pub lambda_e: Vec<f64>,
    pub lambda_h: Vec<f64>,
    /// Average net charge per hub at those multipliers.
    pub net_e: Vec<f64>,
    pub net_h: Vec<f64>,
    pub steps: usize,
}

/// Number of bisection steps on the constant multipliers.
const BISECTION_STEPS: usize = 24;

/// Dual value of one slot at constant multipliers and balance prices `tau`.
///
/// Any `tau` gives a valid lower bound on the slot optimum; the fast loop
/// supplies prices near the maximizer. Returns the value and the net
/// battery and tank charge of the hub solutions.
fn slot_dual(
    models: &[HubModel],
    loads: &[HubLoad],
    tau: &[[f64; 2]],
    constant: f64,
) -> Result<(f64, Vec<(f64, f64)>), OracleError> {
    let ties = [
        hub::TIE_TRADE,
        hub::TIE_TRADE,
        hub::TIE_CYCLE,
        hub::TIE_CYCLE,
        hub::TIE_CYCLE,
        hub::TIE_CYCLE,
        hub::TIE_GAS,
        hub::TIE_GAS,
        hub::TIE_SPILL,
        hub::TIE_SPILL,
    ];
    let mut value = constant;
    let mut nets = Vec::with_capacity(models.len());
    for (k, m) in models.iter().enumerate() {
        let mut clean = m.clone();
        for j in 0..N_VARS {
            clean.cost[j] -= ties[j];
        }
        let lp = clean.lp(tau[k][0], tau[k][1]);
        let sol = lp::solve(&lp).map_err(|e| SchedulerError::Solver(e.to_string()))?;
        value += sol.objective - tau[k][0] * m.renewable;
        value += tau[k][0] * loads[k].il_e + tau[k][1] * loads[k].il_h;
        for &(_, energy, a, b, bound) in &loads[k].els {
            let e = match energy {
                Energy::Electricity => 0,
                Energy::Heat => 1,
            };
            let x = ((b - tau[k][e]) / (-2.0 * a)).clamp(0.0, bound);
            value += tau[k][e] * x - (a * x * x + b * x);
        }
        nets.push((
            sol.y[hub::CE] - sol.y[hub::DE],
            sol.y[hub::CH] - sol.y[hub::DH],
        ));
    }
    Ok((value, nets))
}

/// Time-average optimum of the horizon with average storage balance only.
///
/// The average charge-equals-discharge constraints are priced by constant
/// multipliers; each slot is then cleared separately and its dual value is a
/// valid lower bound. Multipliers are bisected on the sign of the average net
/// charge and the best bound is kept. Incentive shifting is off because it
/// couples slots.
pub fn relaxed_lower_bound(
    scenario: &ScenarioSeries,
    cfg: &ParkConfig,
) -> Result<RelaxedBound, OracleError> {
    cfg.validate().map_err(SchedulerError::from)?;
    scenario
        .validate(cfg.n_hubs(), cfg.n_users())
        .map_err(SchedulerError::from)?;
    let n = cfg.n_hubs();
    let t_len = scenario.len();
    if t_len == 0 {
        return Err(OracleError::Infeasible("scenario has no slots".into()));
    }
    let band = PriceBand::from_scenario(scenario, cfg);
    let mut lo_e = vec![-band.p_e_max - 0.01; n];
    let mut hi_e = vec![-band.p_o_min + 0.01; n];
    let mut lo_h = vec![-band.h_max - 0.01; n];
    let mut hi_h = vec![0.01; n];
    let scfg = SolverConfig {
        tol: 1e-5,
        max_iter: 500,
        ..SolverConfig::default()
    };
    let constants: Vec<f64> = scenario
        .slots
        .iter()
        .map(|s| {
            let users: f64 = cfg
                .users
                .iter()
                .zip(&s.x_il)
                .map(|(u, x)| -u.a * x * x + u.b * x)
                .sum();
            users + s.p_g * s.g_load
        })
        .collect();
    let mut warm: Vec<Vec<[f64; 2]>> = vec![vec![[0.0; 2]; n]; t_len];
    let mut best: Option<RelaxedBound> = None;
    for step in 0..=BISECTION_STEPS {
        let lam_e: Vec<f64> = (0..n).map(|k| 0.5 * (lo_e[k] + hi_e[k])).collect();
        let lam_h: Vec<f64> = (0..n).map(|k| 0.5 * (lo_h[k] + hi_h[k])).collect();
        let mut total = 0.0;
        let mut net_e = vec![0.0; n];
        let mut net_h = vec![0.0; n];
        for (t, slot) in scenario.slots.iter().enumerate() {
            let (models, loads) = slot_models(cfg, slot, &lam_e, &lam_h, Ablation::Ca, &slot.x_il);
            let cleared = clear_prices(&models, &loads, &warm[t], &scfg, Mode::Plain)?;
            let (v, nets) = slot_dual(&models, &loads, &cleared.tau, constants[t])?;
            warm[t] = cleared.tau;
            total += v;
            for (k, (ne, nh)) in nets.into_iter().enumerate() {
                net_e[k] += ne;
                net_h[k] += nh;
            }
        }
        let value = total / t_len as f64;
        for k in 0..n {
            net_e[k] /= t_len as f64;
            net_h[k] /= t_len as f64;
            // The dual value rises with λ while storage charges on average.
            if net_e[k] > 0.0 {
                lo_e[k] = lam_e[k];
            } else {
                hi_e[k] = lam_e[k];
            }
            if net_h[k] > 0.0 {
                lo_h[k] = lam_h[k];
            } else {
                hi_h[k] = lam_h[k];
            }
        }
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(RelaxedBound {
                value,
                lambda_e: lam_e,
                lambda_h: lam_h,
                net_e,
                net_h,
                steps: step + 1,
            });
        }
    }
    best.ok_or(OracleError::NotConverged(f64::NAN))
}
