mod common;

use common::{close, hub, one_hub, park, quiet_slot};
use parkopt::park_model::*;
use proptest::prelude::*;

fn state(b: f64, w: f64) -> StorageState {
    StorageState {
        b: vec![b],
        w: vec![w],
    }
}

#[test]
fn battery_charge_adds_efficiency_scaled_energy() {
    let h = hub();
    let next = step_battery(&state(2.0, 0.0), 0, 1.0, 0.0, &h).unwrap();
    assert!(close(next.b[0], 2.98, 1e-12));
}

#[test]
fn battery_idle_keeps_level() {
    let next = step_battery(&state(2.0, 0.0), 0, 0.0, 0.0, &hub()).unwrap();
    assert_eq!(next.b[0], 2.0);
}

#[test]
fn battery_discharge_draws_grossed_up_energy() {
    let next = step_battery(&state(2.0, 0.0), 0, 0.0, 0.98, &hub()).unwrap();
    assert!(close(next.b[0], 1.0, 1e-12));
}

#[test]
fn battery_rejects_out_of_box_inputs() {
    let h = hub();
    let err = step_battery(&state(2.0, 0.0), 0, h.c_e_max + 0.5, 0.0, &h).unwrap_err();
    assert!(matches!(err, ModelError::BoundViolation { .. }));
}

#[test]
fn tank_charge_adds_efficiency_scaled_energy() {
    let next = step_tank(&state(0.0, 1.0), 0, 0.49, 0.0, &hub()).unwrap();
    assert!(close(next.w[0], 1.4802, 1e-12));
}

#[test]
fn tank_idle_keeps_level() {
    let next = step_tank(&state(0.0, 1.0), 0, 0.0, 0.0, &hub()).unwrap();
    assert_eq!(next.w[0], 1.0);
}

#[test]
fn tank_overdraw_is_a_capacity_violation() {
    let err = step_tank(&state(0.0, 0.5), 0, 0.0, 0.98, &hub()).unwrap_err();
    assert!(matches!(err, ModelError::CapacityViolation { .. }));
}

#[test]
fn chp_splits_gas_into_power_and_heat() {
    let mut h = hub();
    h.e_chp_max = 10.0;
    h.h_chp_max = 10.0;
    let (e, q) = chp_output(10.0, &h).unwrap();
    assert!(close(e, 3.5, 1e-12));
    assert!(close(q, 4.5, 1e-12));
    assert_eq!(chp_output(0.0, &h).unwrap(), (0.0, 0.0));
}

#[test]
fn chp_above_capacity_is_rejected() {
    let h = hub();
    let g = (h.e_chp_max + 1e-3) / h.eta_pg;
    assert!(matches!(
        chp_output(g, &h),
        Err(ModelError::CapacityViolation { .. })
    ));
}

#[test]
fn boiler_converts_gas_to_heat() {
    let h = hub();
    assert!(close(boiler_output(2.0, &h).unwrap(), 1.7, 1e-12));
    assert_eq!(boiler_output(0.0, &h).unwrap(), 0.0);
    let mut small = h;
    small.h_b_max = 1.0;
    assert!(matches!(
        boiler_output(2.0, &small),
        Err(ModelError::CapacityViolation { .. })
    ));
}

#[test]
fn zero_dispatch_balances_an_empty_slot() {
    let cfg = park();
    let slot = quiet_slot(&cfg, 0.5, 0.4, 0.2);
    let r = balance_residuals(&Dispatch::zeros(&cfg), &slot, &cfg);
    assert_eq!(r.max_abs(), 0.0);
}

fn served(cfg: &ParkConfig, supply: f64, il: f64, el: f64) -> Dispatch {
    let mut d = Dispatch::zeros(cfg);
    d.hubs[0].e = supply;
    d.il[0][0] = il;
    d.el[0] = el;
    d
}

#[test]
fn matched_supply_has_zero_residual() {
    let cfg = one_hub();
    let slot = quiet_slot(&cfg, 0.5, 0.4, 0.2);
    let r = balance_residuals(&served(&cfg, 5.0, 3.0, 2.0), &slot, &cfg);
    assert!(close(r.hub_e[0], 0.0, 1e-12));
    assert!(close(r.park_e, 0.0, 1e-12));
}

#[test]
fn surplus_supply_shows_as_positive_residual() {
    let cfg = one_hub();
    let slot = quiet_slot(&cfg, 0.5, 0.4, 0.2);
    let r = balance_residuals(&served(&cfg, 5.0, 3.0, 1.0), &slot, &cfg);
    assert!(close(r.hub_e[0], 1.0, 1e-12));
}

#[test]
fn feasible_dispatch_has_no_violations() {
    let cfg = park();
    let mut d = Dispatch::zeros(&cfg);
    d.hubs[0].c_e = cfg.hubs[0].c_e_max;
    d.hubs[1].g_b = 1.0;
    assert!(validate_dispatch(&d, &cfg).is_empty());
}

#[test]
fn overcharge_is_reported_with_its_excess() {
    let cfg = park();
    let mut d = Dispatch::zeros(&cfg);
    d.hubs[1].c_e = cfg.hubs[1].c_e_max + 0.1;
    let v = validate_dispatch(&d, &cfg);
    assert_eq!(v.len(), 1);
    match v[0] {
        Violation::ChargeBound(k, x) => {
            assert_eq!(k, 1);
            assert!(close(x, 0.1, 1e-12));
        }
        ref other => panic!("unexpected violation {other:?}"),
    }
}

#[test]
fn park_purchase_above_limit_is_reported() {
    let cfg = one_hub();
    let mut d = Dispatch::zeros(&cfg);
    d.hubs[0].e = cfg.trade.e_max + 1.0;
    let v = validate_dispatch(&d, &cfg);
    assert!(v
        .iter()
        .any(|x| matches!(x, Violation::TradeBound(Trade::E, a) if close(*a, 1.0, 1e-12))));
}

#[test]
fn sale_price_above_purchase_price_is_rejected() {
    let cfg = park();
    let mut slot = quiet_slot(&cfg, 0.3, 0.4, 0.2);
    slot.p_o = 0.5;
    let s = ScenarioSeries { slots: vec![slot] };
    assert!(s.validate(cfg.n_hubs(), cfg.n_users()).is_err());
}

#[test]
fn degenerate_storage_is_rejected() {
    let mut cfg = park();
    cfg.hubs[0].b_max = cfg.hubs[0].b_min;
    assert!(cfg.validate().is_err());
}

proptest! {
    #[test]
    fn accepted_storage_trajectories_stay_in_capacity(
        steps in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64), 1..60)
    ) {
        let h = hub();
        let mut s = state(h.b_init, h.w_init);
        for (c, d, ch, dh) in steps {
            if let Ok(next) = step_battery(&s, 0, c * h.c_e_max, d * h.d_e_max, &h) {
                s = next;
            }
            if let Ok(next) = step_tank(&s, 0, ch * h.c_h_max, dh * h.d_h_max, &h) {
                s = next;
            }
            prop_assert!(s.b[0] >= h.b_min && s.b[0] <= h.b_max);
            prop_assert!(s.w[0] >= h.w_min && s.w[0] <= h.w_max);
        }
    }

    #[test]
    fn chp_heat_to_power_ratio_is_fixed(g in 1e-6..3.0f64) {
        let h = hub();
        if let Ok((e, q)) = chp_output(g, &h) {
            prop_assert!(((q / e) - h.eta_hg / h.eta_pg).abs() <= 1e-12);
        }
    }

    #[test]
    fn residuals_are_linear_in_the_dispatch(
        a in prop::collection::vec(0.0..2.0f64, 12),
        b in prop::collection::vec(0.0..2.0f64, 12),
    ) {
        let cfg = one_hub();
        let slot = quiet_slot(&cfg, 0.5, 0.4, 0.2);
        let build = |v: &[f64]| {
            let mut d = Dispatch::zeros(&cfg);
            let h = &mut d.hubs[0];
            h.e = v[0];
            h.e_o = v[1];
            h.c_e = v[2];
            h.d_e = v[3];
            h.c_h = v[4];
            h.d_h = v[5];
            h.g_chp = v[6];
            h.g_b = v[7];
            h.dump = v[8];
            d.il[0][0] = v[9];
            d.heat_il[0] = v[10];
            d.el[0] = v[11];
            d
        };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ra, rb, rs) = (
            balance_residuals(&build(&a), &slot, &cfg),
            balance_residuals(&build(&b), &slot, &cfg),
            balance_residuals(&build(&sum), &slot, &cfg),
        );
        prop_assert!((rs.hub_e[0] - ra.hub_e[0] - rb.hub_e[0]).abs() <= 1e-12);
        prop_assert!((rs.hub_h[0] - ra.hub_h[0] - rb.hub_h[0]).abs() <= 1e-12);
        prop_assert!((rs.park_e - ra.park_e - rb.park_e).abs() <= 1e-12);
        prop_assert!((rs.park_h - ra.park_h - rb.park_h).abs() <= 1e-12);
    }
}
