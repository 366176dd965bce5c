//! Linear model of one hub's decisions for a single slot.
//!
//! The decision vector is `[E, E_o, C_e, D_e, C_h, D_h, G_chp, G_b, spill, dump]`.
//! Hub outputs are affine in it: `x_E = a_e·y + R` and `x_H = a_h·y`.

use crate::park_model::{HubDispatch, ParkConfig, SlotData};

use super::lp::BoxLp;
use super::qp::BoxQp;

pub const N_VARS: usize = 10;
pub const E: usize = 0;
pub const EO: usize = 1;
pub const CE: usize = 2;
pub const DE: usize = 3;
pub const CH: usize = 4;
pub const DH: usize = 5;
pub const GCHP: usize = 6;
pub const GB: usize = 7;
pub const SPILL: usize = 8;
pub const DUMP: usize = 9;

/// Tie-break weight on grid trade.
pub const TIE_TRADE: f64 = 1e-6;
/// Tie-break weight on storage cycling.
pub const TIE_CYCLE: f64 = 1e-7;
/// Tie-break weight on gas burn.
pub const TIE_GAS: f64 = 1e-8;
/// Tie-break weight on curtailment and dumped heat.
pub const TIE_SPILL: f64 = 1e-6;

/// Bounds, costs and output maps of one hub in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct HubModel {
    pub lb: [f64; N_VARS],
    pub ub: [f64; N_VARS],
    /// Cost of every decision before the balance prices are applied.
    pub cost: [f64; N_VARS],
    pub a_e: [f64; N_VARS],
    pub a_h: [f64; N_VARS],
    /// Renewable generation entering the electricity output.
    pub renewable: f64,
    pub x_e_max: f64,
    pub x_h_max: f64,
    /// Gas left for the hub after the gas demand routed through it.
    pub gas_cap: f64,
}

/// Inputs that vary per slot for one hub.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubInputs {
    pub lambda_e: f64,
    pub lambda_h: f64,
    pub renewable: f64,
    /// Whether the battery and tank may operate.
    pub storage: bool,
}

impl HubModel {
    /// Builds the model of hub `k` for `slot`.
    pub fn build(cfg: &ParkConfig, k: usize, slot: &SlotData, inp: HubInputs) -> Self {
        let h = &cfg.hubs[k];
        let store = if inp.storage { 1.0 } else { 0.0 };
        let mut ub = [0.0; N_VARS];
        ub[E] = cfg.hub_e_max(k);
        ub[EO] = cfg.hub_e_o_max(k);
        ub[CE] = h.c_e_max * store;
        ub[DE] = h.d_e_max * store;
        ub[CH] = h.c_h_max * store;
        ub[DH] = h.d_h_max * store;
        ub[GCHP] = h.g_chp_max();
        ub[GB] = h.g_b_max();
        ub[SPILL] = inp.renewable;
        ub[DUMP] = h.h_chp_max + h.h_b_max + h.d_h_max;
        let mut cost = [0.0; N_VARS];
        cost[E] = slot.p_e + TIE_TRADE;
        cost[EO] = -slot.p_o + TIE_TRADE;
        cost[CE] = inp.lambda_e + TIE_CYCLE;
        cost[DE] = -inp.lambda_e + TIE_CYCLE;
        cost[CH] = inp.lambda_h + TIE_CYCLE;
        cost[DH] = -inp.lambda_h + TIE_CYCLE;
        cost[GCHP] = slot.p_g + TIE_GAS;
        cost[GB] = slot.p_g + TIE_GAS;
        cost[SPILL] = TIE_SPILL;
        cost[DUMP] = TIE_SPILL;
        let mut a_e = [0.0; N_VARS];
        a_e[E] = 1.0;
        a_e[EO] = -1.0;
        a_e[CE] = -1.0;
        a_e[DE] = 1.0;
        a_e[GCHP] = h.eta_pg;
        a_e[SPILL] = -1.0;
        let mut a_h = [0.0; N_VARS];
        a_h[CH] = -1.0;
        a_h[DH] = 1.0;
        a_h[GCHP] = h.eta_hg;
        a_h[GB] = h.eta_bg;
        a_h[DUMP] = -1.0;
        let gas_load = slot.g_load * cfg.gas_share(k);
        Self {
            lb: [0.0; N_VARS],
            ub,
            cost,
            a_e,
            a_h,
            renewable: inp.renewable,
            x_e_max: h.x_e_max,
            x_h_max: h.x_h_max(),
            gas_cap: (cfg.hub_g_max(k) - gas_load).max(0.0),
        }
    }

    pub fn x_e(&self, y: &[f64]) -> f64 {
        dot(&self.a_e, y) + self.renewable
    }

    pub fn x_h(&self, y: &[f64]) -> f64 {
        dot(&self.a_h, y)
    }

    fn rows(&self) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut gas = vec![0.0; N_VARS];
        gas[GCHP] = 1.0;
        gas[GB] = 1.0;
        (
            vec![self.a_e.to_vec(), self.a_h.to_vec(), gas],
            vec![-self.renewable, 0.0, 0.0],
            vec![self.x_e_max - self.renewable, self.x_h_max, self.gas_cap],
        )
    }

    /// Linear program `min cost·y − τ_E x_E − τ_H x_H` over the hub's boxes.
    pub fn lp(&self, tau_e: f64, tau_h: f64) -> BoxLp {
        let c = (0..N_VARS)
            .map(|j| self.cost[j] - tau_e * self.a_e[j] - tau_h * self.a_h[j])
            .collect();
        let (rows, row_lo, row_hi) = self.rows();
        BoxLp {
            c,
            lb: self.lb.to_vec(),
            ub: self.ub.to_vec(),
            rows,
            row_lo,
            row_hi,
        }
    }

    /// Proximal program `min cost·y − τ̄·x + (σ/2)‖x − d‖²`, with `x` the hub outputs.
    pub fn prox(&self, tau: [f64; 2], demand: [f64; 2], sigma: f64) -> BoxQp {
        let maps = [&self.a_e, &self.a_h];
        let offsets = [self.renewable - demand[0], -demand[1]];
        let mut h = vec![vec![0.0; N_VARS]; N_VARS];
        let mut c = self.cost.to_vec();
        for (e, a) in maps.iter().enumerate() {
            for i in 0..N_VARS {
                c[i] += a[i] * (sigma * offsets[e] - tau[e]);
                for j in 0..N_VARS {
                    h[i][j] += sigma * a[i] * a[j];
                }
            }
        }
        let (rows, row_lo, row_hi) = self.rows();
        BoxQp {
            h,
            c,
            lb: self.lb.to_vec(),
            ub: self.ub.to_vec(),
            rows,
            row_lo,
            row_hi,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decision vector as a hub dispatch.
pub fn to_dispatch(y: &[f64]) -> HubDispatch {
    HubDispatch {
        e: y[E],
        e_o: y[EO],
        c_e: y[CE],
        d_e: y[DE],
        c_h: y[CH],
        d_h: y[DH],
        g_chp: y[GCHP],
        g_b: y[GB],
        spill: y[SPILL],
        dump: y[DUMP],
    }
}

/// Hub dispatch as a decision vector.
pub fn from_dispatch(d: &HubDispatch) -> [f64; N_VARS] {
    [
        d.e, d.e_o, d.c_e, d.d_e, d.c_h, d.d_h, d.g_chp, d.g_b, d.spill, d.dump,
    ]
}
