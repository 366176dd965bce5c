//! Device models, energy-balance accounting and feasibility checks.
//!
//! Energies are in MWh per slot, prices in ¥/kWh (numerically k¥/MWh) and
//! money in k¥. Scenario files may use other units; [`crate::sim::ingest`]
//! converts them on load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incentive::ShiftModel;

/// Absolute tolerance on balance residuals of an accepted dispatch (MWh).
pub const BALANCE_TOL: f64 = 1e-6;

/// Slack used when comparing decisions against their bounds.
const BOUND_TOL: f64 = 1e-9;

/// Errors raised by the device models and configuration checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// A device would leave its capacity range.
    #[error("capacity violation: {what} at hub {hub} = {value} outside [{min}, {max}]")]
    CapacityViolation {
        what: &'static str,
        hub: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    /// A decision passed to a device model is outside its box.
    #[error("bound violation: {what} = {value} outside [0, {max}]")]
    BoundViolation {
        what: &'static str,
        value: f64,
        max: f64,
    },
    /// The park configuration is inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// The scenario series is inconsistent.
    #[error("invalid scenario at slot {slot}: {reason}")]
    InvalidScenario { slot: usize, reason: String },
}

/// Energy carriers delivered by a hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Energy {
    Electricity,
    Heat,
}

/// Static parameters of one energy hub: battery, water tank, CHP unit and boiler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubParams {
    pub b_min: f64,
    pub b_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub c_e_max: f64,
    pub d_e_max: f64,
    pub c_h_max: f64,
    pub d_h_max: f64,
    pub eta_ce: f64,
    pub eta_de: f64,
    pub eta_ch: f64,
    pub eta_dh: f64,
    pub eta_pg: f64,
    pub eta_hg: f64,
    pub eta_bg: f64,
    pub e_chp_max: f64,
    pub h_chp_max: f64,
    pub h_b_max: f64,
    /// Upper bound on electricity delivered to users by this hub.
    pub x_e_max: f64,
    /// Upper bound on heat delivered to users; defaults to CHP + boiler + tank maxima.
    #[serde(default)]
    pub x_h_max: Option<f64>,
    /// Battery state of charge at slot 0.
    pub b_init: f64,
    /// Tank thermal energy at slot 0.
    pub w_init: f64,
}

impl HubParams {
    /// Heat delivery bound, falling back to the sum of the heat sources.
    pub fn x_h_max(&self) -> f64 {
        self.x_h_max
            .unwrap_or(self.h_chp_max + self.h_b_max + self.d_h_max)
    }

    /// Largest gas burn the CHP unit accepts without breaking either output limit.
    pub fn g_chp_max(&self) -> f64 {
        (self.e_chp_max / self.eta_pg).min(self.h_chp_max / self.eta_hg)
    }

    /// Largest gas burn the boiler accepts.
    pub fn g_b_max(&self) -> f64 {
        self.h_b_max / self.eta_bg
    }

    /// Checks ordering, efficiency ranges and the battery stepsize denominator.
    pub fn validate(&self, hub: usize) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(format!("hub {hub}: {msg}")));
        if !(self.b_min < self.b_max) {
            return bad("b_min must be below b_max".into());
        }
        if !(self.w_min < self.w_max) {
            return bad("w_min must be below w_max".into());
        }
        let effs = [
            ("eta_ce", self.eta_ce),
            ("eta_de", self.eta_de),
            ("eta_ch", self.eta_ch),
            ("eta_dh", self.eta_dh),
            ("eta_pg", self.eta_pg),
            ("eta_hg", self.eta_hg),
            ("eta_bg", self.eta_bg),
        ];
        for (name, v) in effs {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} not in (0, 1]"));
            }
        }
        let maxima = [
            ("c_e_max", self.c_e_max),
            ("d_e_max", self.d_e_max),
            ("c_h_max", self.c_h_max),
            ("d_h_max", self.d_h_max),
            ("e_chp_max", self.e_chp_max),
            ("h_chp_max", self.h_chp_max),
            ("h_b_max", self.h_b_max),
            ("x_e_max", self.x_e_max),
            ("x_h_max", self.x_h_max()),
        ];
        for (name, v) in maxima {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if self.b_max - self.b_min - self.d_e_max - self.c_e_max <= 0.0 {
            return bad("battery range must exceed c_e_max + d_e_max".into());
        }
        if self.w_max - self.w_min - self.d_h_max - self.c_h_max <= 0.0 {
            return bad("tank range must exceed c_h_max + d_h_max".into());
        }
        if !(self.b_min..=self.b_max).contains(&self.b_init) {
            return bad("b_init outside [b_min, b_max]".into());
        }
        if !(self.w_min..=self.w_max).contains(&self.w_init) {
            return bad("w_init outside [w_min, w_max]".into());
        }
        Ok(())
    }
}

/// Utility coefficients and hub routing of one inelastic-load user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserParams {
    pub a: f64,
    pub b: f64,
    /// Fraction of this user's load served by each hub; equal split when absent.
    #[serde(default)]
    pub hub_shares: Option<Vec<f64>>,
}

/// One elastic load served by a hub, with utility `a x² + b x` on `[0, bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticLoad {
    pub hub: usize,
    pub energy: Energy,
    pub a: f64,
    pub b: f64,
    pub bound: f64,
}

/// Park-level trade limits with their per-hub split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeLimits {
    pub e_max: f64,
    pub g_max: f64,
    pub e_o_max: f64,
    /// Fraction of every park limit granted to each hub; equal split when absent.
    #[serde(default)]
    pub shares: Option<Vec<f64>>,
}

/// Static description of the whole park.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkConfig {
    pub hubs: Vec<HubParams>,
    pub users: Vec<UserParams>,
    #[serde(default)]
    pub elastic_loads: Vec<ElasticLoad>,
    pub trade: TradeLimits,
    /// Split of the inelastic heat demand across hubs; equal split when absent.
    #[serde(default)]
    pub heat_shares: Option<Vec<f64>>,
    /// Split of the gas demand across hub gas contracts; equal split when absent.
    #[serde(default)]
    pub gas_shares: Option<Vec<f64>>,
    pub shift: ShiftModel,
}

fn share_or_equal(shares: &Option<Vec<f64>>, k: usize, n: usize) -> f64 {
    match shares {
        Some(s) => s[k],
        None => 1.0 / n as f64,
    }
}

fn check_shares(name: &str, shares: &Option<Vec<f64>>, n: usize) -> Result<(), ModelError> {
    if let Some(s) = shares {
        if s.len() != n {
            return Err(ModelError::InvalidConfig(format!(
                "{name} has {} entries, expected {n}",
                s.len()
            )));
        }
        if s.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "{name} must be nonnegative"
            )));
        }
        let sum: f64 = s.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidConfig(format!(
                "{name} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

impl ParkConfig {
    pub fn n_hubs(&self) -> usize {
        self.hubs.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Fraction of park trade limits assigned to hub `k`.
    pub fn trade_share(&self, k: usize) -> f64 {
        share_or_equal(&self.trade.shares, k, self.n_hubs())
    }

    pub fn hub_e_max(&self, k: usize) -> f64 {
        self.trade.e_max * self.trade_share(k)
    }

    pub fn hub_e_o_max(&self, k: usize) -> f64 {
        self.trade.e_o_max * self.trade_share(k)
    }

    pub fn hub_g_max(&self, k: usize) -> f64 {
        self.trade.g_max * self.trade_share(k)
    }

    /// Fraction of user `i`'s inelastic load served by hub `k`.
    pub fn user_share(&self, i: usize, k: usize) -> f64 {
        share_or_equal(&self.users[i].hub_shares, k, self.n_hubs())
    }

    pub fn heat_share(&self, k: usize) -> f64 {
        share_or_equal(&self.heat_shares, k, self.n_hubs())
    }

    pub fn gas_share(&self, k: usize) -> f64 {
        share_or_equal(&self.gas_shares, k, self.n_hubs())
    }

    /// Checks every structural invariant of the configuration.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hubs.is_empty() {
            return Err(ModelError::InvalidConfig(
                "at least one hub is required".into(),
            ));
        }
        for (k, h) in self.hubs.iter().enumerate() {
            h.validate(k)?;
        }
        let k = self.n_hubs();
        for (i, u) in self.users.iter().enumerate() {
            if !(u.a < 0.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "user {i}: a must be negative"
                )));
            }
            check_shares(&format!("user {i} hub_shares"), &u.hub_shares, k)?;
        }
        for (q, el) in self.elastic_loads.iter().enumerate() {
            if !(el.a < 0.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "elastic load {q}: a must be negative"
                )));
            }
            if el.hub >= k {
                return Err(ModelError::InvalidConfig(format!(
                    "elastic load {q}: hub {} does not exist",
                    el.hub
                )));
            }
            if !(el.bound >= 0.0 && el.bound.is_finite()) {
                return Err(ModelError::InvalidConfig(format!(
                    "elastic load {q}: bound must be finite and nonnegative"
                )));
            }
        }
        let t = &self.trade;
        for (name, v) in [
            ("e_max", t.e_max),
            ("g_max", t.g_max),
            ("e_o_max", t.e_o_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidConfig(format!(
                    "trade {name} must be finite and nonnegative"
                )));
            }
        }
        check_shares("trade shares", &t.shares, k)?;
        check_shares("heat_shares", &self.heat_shares, k)?;
        check_shares("gas_shares", &self.gas_shares, k)?;
        if self.shift.users.len() != self.n_users() {
            return Err(ModelError::InvalidConfig(format!(
                "shift model lists {} users, config has {}",
                self.shift.users.len(),
                self.n_users()
            )));
        }
        self.shift
            .validate()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Battery and tank energy content per hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub b: Vec<f64>,
    pub w: Vec<f64>,
}

impl StorageState {
    /// Storage levels at slot 0 as configured.
    pub fn initial(cfg: &ParkConfig) -> Self {
        Self {
            b: cfg.hubs.iter().map(|h| h.b_init).collect(),
            w: cfg.hubs.iter().map(|h| h.w_init).collect(),
        }
    }
}

/// Exogenous data for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotData {
    pub p_e: f64,
    pub p_g: f64,
    pub p_o: f64,
    /// Renewable generation per hub.
    pub r: Vec<f64>,
    /// Inelastic electrical load per user.
    pub x_il: Vec<f64>,
    pub h_load: f64,
    pub g_load: f64,
}

/// Per-slot exogenous series over a horizon of `T` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSeries {
    pub slots: Vec<SlotData>,
}

impl ScenarioSeries {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn p_e_max(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.p_e)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn p_o_min(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.p_o)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn p_g_max(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.p_g)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks shapes, signs and the no-arbitrage rule `p_o ≤ p_e`.
    pub fn validate(&self, n_hubs: usize, n_users: usize) -> Result<(), ModelError> {
        for (t, s) in self.slots.iter().enumerate() {
            let bad = |reason: String| Err(ModelError::InvalidScenario { slot: t, reason });
            if s.r.len() != n_hubs {
                return bad(format!(
                    "{} renewable columns, expected {n_hubs}",
                    s.r.len()
                ));
            }
            if s.x_il.len() != n_users {
                return bad(format!("{} load columns, expected {n_users}", s.x_il.len()));
            }
            let scalars = [
                ("p_e", s.p_e),
                ("p_g", s.p_g),
                ("p_o", s.p_o),
                ("H_load", s.h_load),
                ("G_load", s.g_load),
            ];
            for (name, v) in scalars {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("{name} = {v} must be finite and nonnegative"));
                }
            }
            if s.r
                .iter()
                .chain(&s.x_il)
                .any(|v| !(*v >= 0.0 && v.is_finite()))
            {
                return bad("renewables and loads must be finite and nonnegative".into());
            }
            if s.p_o > s.p_e {
                return bad(format!("p_o = {} exceeds p_e = {}", s.p_o, s.p_e));
            }
        }
        Ok(())
    }
}

/// Device and trade decisions of one hub in one slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HubDispatch {
    /// Grid purchase through this hub's share.
    pub e: f64,
    /// Grid sale through this hub's share.
    pub e_o: f64,
    pub c_e: f64,
    pub d_e: f64,
    pub c_h: f64,
    pub d_h: f64,
    pub g_chp: f64,
    pub g_b: f64,
    /// Curtailed renewable generation.
    pub spill: f64,
    /// Heat rejected through the dump radiator.
    pub dump: f64,
}

impl HubDispatch {
    /// Electricity available to users: CHP, storage, renewables and net trade.
    pub fn x_e(&self, hub: &HubParams, renewable: f64) -> f64 {
        hub.eta_pg * self.g_chp + self.d_e - self.c_e + renewable - self.spill + self.e - self.e_o
    }

    /// Heat available to users: CHP, boiler and tank, less any dumped heat.
    pub fn x_h(&self, hub: &HubParams) -> f64 {
        hub.eta_hg * self.g_chp + hub.eta_bg * self.g_b + self.d_h - self.c_h - self.dump
    }
}

/// Decisions of the whole park in one slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub hubs: Vec<HubDispatch>,
    /// Inelastic electricity served, indexed `[hub][user]`.
    pub il: Vec<Vec<f64>>,
    /// Inelastic heat served per hub.
    pub heat_il: Vec<f64>,
    /// Gas demand bought through each hub's gas contract.
    pub gas_load: Vec<f64>,
    /// Consumption of every elastic load.
    pub el: Vec<f64>,
    /// Incentive price offered this slot.
    pub price: f64,
    /// Inelastic load moved out of this slot, per user.
    pub shifted: Vec<f64>,
    /// Load arriving this slot from earlier shifts, per user.
    pub deferred: Vec<f64>,
}

impl Dispatch {
    /// All-zero dispatch shaped for `cfg`.
    pub fn zeros(cfg: &ParkConfig) -> Self {
        let k = cfg.n_hubs();
        let i = cfg.n_users();
        Self {
            hubs: vec![HubDispatch::default(); k],
            il: vec![vec![0.0; i]; k],
            heat_il: vec![0.0; k],
            gas_load: vec![0.0; k],
            el: vec![0.0; cfg.elastic_loads.len()],
            price: 0.0,
            shifted: vec![0.0; i],
            deferred: vec![0.0; i],
        }
    }

    /// Park electricity purchase.
    pub fn e(&self) -> f64 {
        self.hubs.iter().map(|h| h.e).sum()
    }

    /// Park electricity sale.
    pub fn e_o(&self) -> f64 {
        self.hubs.iter().map(|h| h.e_o).sum()
    }

    /// Park gas purchase, hub burns plus gas demand.
    pub fn g(&self) -> f64 {
        self.hubs.iter().map(|h| h.g_chp + h.g_b).sum::<f64>() + self.gas_load.iter().sum::<f64>()
    }

    /// Demand placed on hub `k` for `energy` by inelastic and elastic loads.
    pub fn hub_demand(&self, cfg: &ParkConfig, k: usize, energy: Energy) -> f64 {
        let inelastic = match energy {
            Energy::Electricity => self.il[k].iter().sum(),
            Energy::Heat => self.heat_il[k],
        };
        let elastic: f64 = cfg
            .elastic_loads
            .iter()
            .zip(&self.el)
            .filter(|(l, _)| l.hub == k && l.energy == energy)
            .map(|(_, x)| *x)
            .sum();
        inelastic + elastic
    }
}

/// Output of a CHP unit burning `g_chp` units of gas.
pub fn chp_output(g_chp: f64, hub: &HubParams) -> Result<(f64, f64), ModelError> {
    if g_chp < 0.0 {
        return Err(ModelError::BoundViolation {
            what: "G_chp",
            value: g_chp,
            max: f64::INFINITY,
        });
    }
    let e = hub.eta_pg * g_chp;
    let h = hub.eta_hg * g_chp;
    if e > hub.e_chp_max {
        return Err(ModelError::CapacityViolation {
            what: "E_chp",
            hub: 0,
            value: e,
            min: 0.0,
            max: hub.e_chp_max,
        });
    }
    if h > hub.h_chp_max {
        return Err(ModelError::CapacityViolation {
            what: "H_chp",
            hub: 0,
            value: h,
            min: 0.0,
            max: hub.h_chp_max,
        });
    }
    Ok((e, h))
}

/// Heat output of a boiler burning `g_b` units of gas.
pub fn boiler_output(g_b: f64, hub: &HubParams) -> Result<f64, ModelError> {
    if g_b < 0.0 {
        return Err(ModelError::BoundViolation {
            what: "G_b",
            value: g_b,
            max: f64::INFINITY,
        });
    }
    let h = hub.eta_bg * g_b;
    if h > hub.h_b_max {
        return Err(ModelError::CapacityViolation {
            what: "H_b",
            hub: 0,
            value: h,
            min: 0.0,
            max: hub.h_b_max,
        });
    }
    Ok(h)
}

#[allow(clippy::too_many_arguments)]
fn step_store(
    level: f64,
    hub: usize,
    charge: f64,
    discharge: f64,
    c_max: f64,
    d_max: f64,
    eta_c: f64,
    eta_d: f64,
    lo: f64,
    hi: f64,
    names: (&'static str, &'static str, &'static str),
) -> Result<f64, ModelError> {
    if !(0.0..=c_max).contains(&charge) {
        return Err(ModelError::BoundViolation {
            what: names.0,
            value: charge,
            max: c_max,
        });
    }
    if !(0.0..=d_max).contains(&discharge) {
        return Err(ModelError::BoundViolation {
            what: names.1,
            value: discharge,
            max: d_max,
        });
    }
    let next = level + eta_c * charge - discharge / eta_d;
    if next < lo - BOUND_TOL || next > hi + BOUND_TOL {
        return Err(ModelError::CapacityViolation {
            what: names.2,
            hub,
            value: next,
            min: lo,
            max: hi,
        });
    }
    Ok(next.clamp(lo, hi))
}

/// Advances battery `hub` by one slot of charging `c_e` and discharging `d_e`.
pub fn step_battery(
    state: &StorageState,
    hub: usize,
    c_e: f64,
    d_e: f64,
    params: &HubParams,
) -> Result<StorageState, ModelError> {
    let b = step_store(
        state.b[hub],
        hub,
        c_e,
        d_e,
        params.c_e_max,
        params.d_e_max,
        params.eta_ce,
        params.eta_de,
        params.b_min,
        params.b_max,
        ("C_e", "D_e", "battery"),
    )?;
    let mut next = state.clone();
    next.b[hub] = b;
    Ok(next)
}

/// Advances tank `hub` by one slot of charging `c_h` and discharging `d_h`.
pub fn step_tank(
    state: &StorageState,
    hub: usize,
    c_h: f64,
    d_h: f64,
    params: &HubParams,
) -> Result<StorageState, ModelError> {
    let w = step_store(
        state.w[hub],
        hub,
        c_h,
        d_h,
        params.c_h_max,
        params.d_h_max,
        params.eta_ch,
        params.eta_dh,
        params.w_min,
        params.w_max,
        ("C_h", "D_h", "tank"),
    )?;
    let mut next = state.clone();
    next.w[hub] = w;
    Ok(next)
}

/// Signed supply-minus-demand residuals of a dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResiduals {
    /// Electricity residual per hub.
    pub hub_e: Vec<f64>,
    /// Heat residual per hub.
    pub hub_h: Vec<f64>,
    /// Park electricity available minus park electricity served.
    pub park_e: f64,
    /// Park heat available minus park heat served.
    pub park_h: f64,
    /// Gas left for users minus gas demand served.
    pub park_g: f64,
}

impl BalanceResiduals {
    /// Largest absolute residual over hubs and energies.
    pub fn max_abs(&self) -> f64 {
        self.hub_e
            .iter()
            .chain(&self.hub_h)
            .chain([&self.park_e, &self.park_h, &self.park_g])
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Supply-minus-demand residuals per hub and for the park totals.
pub fn balance_residuals(d: &Dispatch, s: &SlotData, cfg: &ParkConfig) -> BalanceResiduals {
    let k = cfg.n_hubs();
    let mut hub_e = Vec::with_capacity(k);
    let mut hub_h = Vec::with_capacity(k);
    for (j, (hd, hp)) in d.hubs.iter().zip(&cfg.hubs).enumerate() {
        hub_e.push(hd.x_e(hp, s.r[j]) - d.hub_demand(cfg, j, Energy::Electricity));
        hub_h.push(hd.x_h(hp) - d.hub_demand(cfg, j, Energy::Heat));
    }
    let e_tot: f64 = d
        .hubs
        .iter()
        .zip(&cfg.hubs)
        .enumerate()
        .map(|(j, (hd, hp))| hp.eta_pg * hd.g_chp + hd.d_e - hd.c_e + s.r[j] - hd.spill)
        .sum::<f64>()
        + d.e()
        - d.e_o();
    let h_tot: f64 = d
        .hubs
        .iter()
        .zip(&cfg.hubs)
        .map(|(hd, hp)| hd.x_h(hp))
        .sum();
    let g_tot = d.g() - d.hubs.iter().map(|h| h.g_chp + h.g_b).sum::<f64>();
    let e_served: f64 = (0..k)
        .map(|j| d.hub_demand(cfg, j, Energy::Electricity))
        .sum();
    let h_served: f64 = (0..k).map(|j| d.hub_demand(cfg, j, Energy::Heat)).sum();
    BalanceResiduals {
        hub_e,
        hub_h,
        park_e: e_tot - e_served,
        park_h: h_tot - h_served,
        park_g: g_tot - d.gas_load.iter().sum::<f64>(),
    }
}

/// Which park trade a [`Violation::TradeBound`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trade {
    E,
    G,
    EO,
}

/// One broken box constraint with the amount by which it is exceeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// A decision variable is negative.
    Negative(&'static str, usize, f64),
    ChargeBound(usize, f64),
    DischargeBound(usize, f64),
    TankChargeBound(usize, f64),
    TankDischargeBound(usize, f64),
    ChpBound(usize, f64),
    BoilerBound(usize, f64),
    SpillBound(usize, f64),
    TradeBound(Trade, f64),
    /// Hub output above its delivery limit, with the energy carrier.
    HubOutputBound(usize, Energy, f64),
    ElasticBound(usize, f64),
}

/// Lists every broken box constraint of `d`. Renewable curtailment is
/// checked only when `renewables` is supplied.
pub fn validate_dispatch(d: &Dispatch, cfg: &ParkConfig) -> Vec<Violation> {
    validate_dispatch_with(d, cfg, None)
}

/// As [`validate_dispatch`], also bounding curtailment by the available renewables.
pub fn validate_dispatch_with(
    d: &Dispatch,
    cfg: &ParkConfig,
    renewables: Option<&[f64]>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let over = |v: f64, max: f64| v - max > BOUND_TOL;
    for (k, (hd, hp)) in d.hubs.iter().zip(&cfg.hubs).enumerate() {
        let fields = [
            ("E", hd.e),
            ("E_o", hd.e_o),
            ("C_e", hd.c_e),
            ("D_e", hd.d_e),
            ("C_h", hd.c_h),
            ("D_h", hd.d_h),
            ("G_chp", hd.g_chp),
            ("G_b", hd.g_b),
            ("spill", hd.spill),
            ("dump", hd.dump),
        ];
        for (name, v) in fields {
            if v < -BOUND_TOL {
                out.push(Violation::Negative(name, k, v));
            }
        }
        if over(hd.c_e, hp.c_e_max) {
            out.push(Violation::ChargeBound(k, hd.c_e - hp.c_e_max));
        }
        if over(hd.d_e, hp.d_e_max) {
            out.push(Violation::DischargeBound(k, hd.d_e - hp.d_e_max));
        }
        if over(hd.c_h, hp.c_h_max) {
            out.push(Violation::TankChargeBound(k, hd.c_h - hp.c_h_max));
        }
        if over(hd.d_h, hp.d_h_max) {
            out.push(Violation::TankDischargeBound(k, hd.d_h - hp.d_h_max));
        }
        let (e_chp, h_chp) = (hp.eta_pg * hd.g_chp, hp.eta_hg * hd.g_chp);
        let chp_excess = (e_chp - hp.e_chp_max).max(h_chp - hp.h_chp_max);
        if chp_excess > BOUND_TOL {
            out.push(Violation::ChpBound(k, chp_excess));
        }
        if over(hp.eta_bg * hd.g_b, hp.h_b_max) {
            out.push(Violation::BoilerBound(k, hp.eta_bg * hd.g_b - hp.h_b_max));
        }
        if let Some(r) = renewables {
            if over(hd.spill, r[k]) {
                out.push(Violation::SpillBound(k, hd.spill - r[k]));
            }
            let x_e = hd.x_e(hp, r[k]);
            if over(x_e, hp.x_e_max) {
                out.push(Violation::HubOutputBound(
                    k,
                    Energy::Electricity,
                    x_e - hp.x_e_max,
                ));
            }
            if x_e < -BOUND_TOL {
                out.push(Violation::HubOutputBound(k, Energy::Electricity, x_e));
            }
        }
        let x_h = hd.x_h(hp);
        if over(x_h, hp.x_h_max()) {
            out.push(Violation::HubOutputBound(
                k,
                Energy::Heat,
                x_h - hp.x_h_max(),
            ));
        }
        if x_h < -BOUND_TOL {
            out.push(Violation::HubOutputBound(k, Energy::Heat, x_h));
        }
    }
    let t = &cfg.trade;
    if over(d.e(), t.e_max) {
        out.push(Violation::TradeBound(Trade::E, d.e() - t.e_max));
    }
    if over(d.g(), t.g_max) {
        out.push(Violation::TradeBound(Trade::G, d.g() - t.g_max));
    }
    if over(d.e_o(), t.e_o_max) {
        out.push(Violation::TradeBound(Trade::EO, d.e_o() - t.e_o_max));
    }
    for (q, (l, x)) in cfg.elastic_loads.iter().zip(&d.el).enumerate() {
        if *x < -BOUND_TOL || over(*x, l.bound) {
            out.push(Violation::ElasticBound(q, *x));
        }
    }
    out
}
