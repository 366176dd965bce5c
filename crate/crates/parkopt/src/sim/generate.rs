//! Seeded generator of i.i.d. scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::park_model::{ParkConfig, ScenarioSeries, SlotData};

/// Distribution of every slot of an i.i.d. scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidSpec {
    /// Purchase price levels, drawn uniformly.
    pub p_e_levels: Vec<f64>,
    /// Ratio `p_e / p_o`; at least one.
    pub spread_ratio: f64,
    pub p_g: f64,
    /// Peak renewable output per hub; each slot draws uniformly below it.
    pub r_max: Vec<f64>,
    /// Range of each user's inelastic load.
    pub x_range: (f64, f64),
    pub h_range: (f64, f64),
    pub g_range: (f64, f64),
    pub n_users: usize,
}

impl IidSpec {
    /// Time-of-use prices and load ranges matching the bundled park.
    pub fn for_config(cfg: &ParkConfig) -> Self {
        Self {
            p_e_levels: vec![0.36, 0.66, 1.07],
            spread_ratio: 2.0,
            p_g: 0.4,
            r_max: vec![2.0; cfg.n_hubs()],
            x_range: (1.0, 3.0),
            h_range: (1.2, 2.8),
            g_range: (0.4, 0.7),
            n_users: cfg.n_users(),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draws `t_len` independent slots from `spec` with a ChaCha8 stream seeded by `seed`.
pub fn iid_scenario(spec: &IidSpec, t_len: usize, seed: u64) -> ScenarioSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = spec.spread_ratio.max(1.0);
    let slots = (0..t_len)
        .map(|_| {
            let p_e = spec.p_e_levels[rng.gen_range(0..spec.p_e_levels.len())];
            let r = spec
                .r_max
                .iter()
                .map(|&m| draw(&mut rng, (0.0, m)))
                .collect();
            let x_il = (0..spec.n_users)
                .map(|_| draw(&mut rng, spec.x_range))
                .collect();
            SlotData {
                p_e,
                p_g: spec.p_g,
                p_o: p_e / ratio,
                r,
                x_il,
                h_load: draw(&mut rng, spec.h_range),
                g_load: draw(&mut rng, spec.g_range),
            }
        })
        .collect();
    ScenarioSeries { slots }
}
