//! Oracle cross-checks of the distributed slot solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::{brute_force_small, centralized_subproblem, slot_objective};
use crate::park_model::{ParkConfig, ScenarioSeries, StorageState};
use crate::scheduler::{
    init_lambda, lambda_bounds, resolve_rho, run_slot, Ablation, Mode, PriceBand, SlotLoads,
    SolverConfig,
};

use super::SimError;

/// Settings of [`verify_oracles`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySpec {
    pub instances: usize,
    pub seed: u64,
    /// Grid step of the brute-force check; `None` skips it.
    pub grid_step: Option<f64>,
    /// Largest accepted `|Φ_distributed − Φ*| / max(1, |Φ*|)`.
    pub tolerance: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 0,
            grid_step: Some(1.0),
            tolerance: 1e-3,
        }
    }
}

/// Outcome of the cross-checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub worst_relative_gap: f64,
    /// Instances whose distributed value misses the oracle by more than the tolerance.
    pub gap_failures: usize,
    /// Instances whose grid minimum falls below the oracle optimum.
    pub sandwich_failures: usize,
    pub grid_checked: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.gap_failures == 0 && self.sandwich_failures == 0
    }
}

/// Solver settings tight enough for the fast loop to settle on the slot optimum.
pub fn tight_solver() -> SolverConfig {
    SolverConfig {
        tol: 1e-6,
        max_iter: 5000,
        ..SolverConfig::default()
    }
}

/// Compares the distributed solution of random slots against the oracles.
///
/// Each instance takes a slot of `scenario` in turn and draws the slow
/// multipliers uniformly from their bands.
pub fn verify_oracles(
    scenario: &ScenarioSeries,
    cfg: &ParkConfig,
    spec: &VerifySpec,
) -> Result<VerifyReport, SimError> {
    cfg.validate()?;
    scenario.validate(cfg.n_hubs(), cfg.n_users())?;
    if scenario.is_empty() {
        return Err(SimError::Config("scenario has no slots".into()));
    }
    let scfg = tight_solver();
    let band = PriceBand::from_scenario(scenario, cfg);
    let rho = resolve_rho(cfg, &band, scfg.rho)?;
    let storage = StorageState::initial(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = VerifyReport {
        instances: spec.instances,
        worst_relative_gap: 0.0,
        gap_failures: 0,
        sandwich_failures: 0,
        grid_checked: 0,
    };
    for i in 0..spec.instances {
        let slot = &scenario.slots[i % scenario.len()];
        let mut ds = init_lambda(cfg, rho, &storage, slot.p_e, band, scfg.sigma);
        for k in 0..cfg.n_hubs() {
            let b = lambda_bounds(cfg, k, rho, &band);
            ds.lambda_e[k] = rng.gen_range(b.battery.0..=b.battery.1);
            ds.lambda_h[k] = rng.gen_range(b.tank.0..=b.tank.1);
        }
        let loads = SlotLoads::unshifted(&slot.x_il);
        let out = run_slot(
            &ds,
            &storage,
            slot,
            cfg,
            &scfg,
            Mode::Fast,
            Ablation::Full,
            &loads,
        )?;
        let phi = slot_objective(&out.scheduled, slot, cfg, &ds.lambda_e, &ds.lambda_h);
        let best = centralized_subproblem(&ds, slot, &loads, cfg, 1e-10)?.objective;
        let rel = (phi - best).abs() / best.abs().max(1.0);
        report.worst_relative_gap = report.worst_relative_gap.max(rel);
        report.gap_failures += (rel > spec.tolerance) as usize;
        if let Some(h) = spec.grid_step {
            let grid = brute_force_small(&ds, slot, &loads, cfg, h)?.objective;
            report.grid_checked += 1;
            report.sandwich_failures += (grid < best - 1e-7 * (1.0 + best.abs())) as usize;
        }
    }
    Ok(report)
}
