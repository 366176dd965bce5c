//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use parkopt::incentive::{ShiftModel, UserShift};
use parkopt::park_model::{
    ElasticLoad, Energy, HubParams, ParkConfig, ScenarioSeries, SlotData, TradeLimits, UserParams,
};
use parkopt::sim::{ingest_scenario, load_config};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Bundled two-hub park.
pub fn park() -> ParkConfig {
    load_config(&data_dir().join("park.toml")).expect("bundled config loads")
}

/// Bundled 24-slot scenario.
pub fn sample() -> ScenarioSeries {
    ingest_scenario(&data_dir().join("sample_24.csv")).expect("bundled scenario loads")
}

/// Hub with the bundled capacities.
pub fn hub() -> HubParams {
    park().hubs[0].clone()
}

/// One hub, one user, one elastic electricity load, no incentive shifting.
pub fn one_hub() -> ParkConfig {
    ParkConfig {
        hubs: vec![hub()],
        users: vec![UserParams {
            a: -1.0,
            b: 1.0,
            hub_shares: None,
        }],
        elastic_loads: vec![ElasticLoad {
            hub: 0,
            energy: Energy::Electricity,
            a: -1.0,
            b: 7.0,
            bound: 10.0,
        }],
        trade: TradeLimits {
            e_max: 30.0,
            g_max: 40.0,
            e_o_max: 30.0,
            shares: None,
        },
        heat_shares: None,
        gas_shares: None,
        shift: ShiftModel {
            users: vec![UserShift {
                alpha: 1.0,
                gamma: 0.0,
            }],
            eta: 0.15,
            window: 4,
        },
    }
}

/// Slot with the given prices and nothing else.
pub fn quiet_slot(cfg: &ParkConfig, p_e: f64, p_g: f64, p_o: f64) -> SlotData {
    SlotData {
        p_e,
        p_g,
        p_o,
        r: vec![0.0; cfg.n_hubs()],
        x_il: vec![0.0; cfg.n_users()],
        h_load: 0.0,
        g_load: 0.0,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
