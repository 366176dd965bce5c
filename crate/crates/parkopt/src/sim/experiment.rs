//! Experiments: one scenario and config run under one or more settings.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::oracle::relaxed_lower_bound;
use crate::park_model::{ParkConfig, ScenarioSeries};
use crate::scheduler::{
    gap_bound, run_horizon, Ablation, Mode, RhoPolicy, SolverConfig, Trajectory, ViolationCounts,
};

use super::generate::{iid_scenario, IidSpec};
use super::ingest::{ingest_scenario, load_config};
use super::SimError;

/// Where the slots of an experiment come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    /// A scenario CSV with its units sidecar.
    File { path: PathBuf },
    /// Seeded i.i.d. slots drawn around the bundled park.
    Iid { slots: usize },
}

/// One parameter varied over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "param", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Ablation(Vec<Ablation>),
    Mode(Vec<Mode>),
    /// Ratio `p_e / p_o`; each value rewrites the sale price as `p_e / ratio`.
    SpreadRatio(Vec<f64>),
    Sigma(Vec<f64>),
}

fn default_mode() -> Mode {
    Mode::Fast
}

fn default_ablation() -> Ablation {
    Ablation::Full
}

fn default_rho() -> RhoPolicy {
    RhoPolicy::Auto
}

fn default_sigma() -> f64 {
    0.2
}

fn default_tol() -> f64 {
    0.01
}

fn default_max_iter() -> usize {
    200
}

/// A named run: scenario, config, solver settings and an optional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub scenario: ScenarioSource,
    pub config: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_ablation")]
    pub ablation: Ablation,
    #[serde(default = "default_rho")]
    pub rho: RhoPolicy,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Also compute the relaxed lower bound and the gap margin.
    #[serde(default)]
    pub check_bound: bool,
}

impl Experiment {
    /// Experiment with default solver settings.
    pub fn new(
        name: impl Into<String>,
        scenario: ScenarioSource,
        config: impl Into<PathBuf>,
    ) -> Self {
        Self {
            name: name.into(),
            scenario,
            config: config.into(),
            mode: default_mode(),
            ablation: default_ablation(),
            rho: default_rho(),
            sigma: default_sigma(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            seed: 0,
            sweep: None,
            check_bound: false,
        }
    }

    /// Checks that sweep values are finite and in range.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(format!("experiment {}: {m}", self.name)));
        match &self.sweep {
            Some(Sweep::SpreadRatio(v)) if v.iter().any(|r| !(r.is_finite() && *r >= 1.0)) => {
                bad("spread ratios must be finite and at least 1".into())
            }
            Some(Sweep::Sigma(v)) if v.iter().any(|s| !(s.is_finite() && *s > 0.0)) => {
                bad("sigma values must be finite and positive".into())
            }
            _ => Ok(()),
        }
    }

    fn solver(&self, sigma: f64) -> SolverConfig {
        SolverConfig {
            sigma,
            max_iter: self.max_iter,
            tol: self.tol,
            rho: self.rho,
        }
    }
}

/// Summary of a bound check against the relaxed optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub relaxed: f64,
    pub gap: f64,
    /// Standard error of the mean slot cost.
    pub std_err: f64,
    /// `relaxed + gap + 3·std_err − mean cost`; nonnegative when the bound holds.
    pub margin: f64,
}

/// One slot of a run as written to the trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub cost: f64,
    pub iterations: usize,
    pub lambda_ke: Vec<f64>,
    pub lambda_kh: Vec<f64>,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    pub e: f64,
    pub g: f64,
    pub e_o: f64,
    pub p: f64,
}

/// Result of one setting of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub mode: Mode,
    pub ablation: Ablation,
    pub spread_ratio: Option<f64>,
    pub sigma: f64,
    pub rho: f64,
    pub total_cost: f64,
    pub mean_cost: f64,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    /// Slots that hit the mini-slot cap.
    pub unconverged: usize,
    /// `(iterations, fraction of slots at or below)` pairs.
    pub cdf: Vec<(usize, f64)>,
    pub violations: ViolationCounts,
    pub bound: Option<BoundCheck>,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Result of an experiment: one run per sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub runs: Vec<RunReport>,
}

impl Report {
    /// Whether every run kept its multipliers in band and its dispatch balanced.
    pub fn invariants_hold(&self) -> bool {
        self.runs.iter().all(|r| r.violations.guaranteed() == 0)
    }
}

/// Empirical distribution of iteration counts.
pub fn iteration_cdf(iterations: &[usize]) -> Vec<(usize, f64)> {
    let mut sorted = iterations.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}

/// Median of a list of counts.
pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

#[derive(Debug, Clone)]
struct Variant {
    label: String,
    mode: Mode,
    ablation: Ablation,
    spread_ratio: Option<f64>,
    sigma: f64,
}

fn variants(e: &Experiment) -> Vec<Variant> {
    let base = Variant {
        label: "base".into(),
        mode: e.mode,
        ablation: e.ablation,
        spread_ratio: None,
        sigma: e.sigma,
    };
    let with = |label: String, f: &dyn Fn(&mut Variant)| {
        let mut v = base.clone();
        v.label = label;
        f(&mut v);
        v
    };
    match &e.sweep {
        None => vec![base.clone()],
        Some(Sweep::Ablation(list)) => list
            .iter()
            .map(|a| with(format!("{a:?}").to_lowercase(), &|v| v.ablation = *a))
            .collect(),
        Some(Sweep::Mode(list)) => list
            .iter()
            .map(|m| with(format!("{m:?}").to_lowercase(), &|v| v.mode = *m))
            .collect(),
        Some(Sweep::SpreadRatio(list)) => list
            .iter()
            .map(|r| with(format!("ratio_{r}"), &|v| v.spread_ratio = Some(*r)))
            .collect(),
        Some(Sweep::Sigma(list)) => list
            .iter()
            .map(|s| with(format!("sigma_{s}"), &|v| v.sigma = *s))
            .collect(),
    }
}

/// Scenario of `e` before any sweep rewrites it.
pub fn base_scenario(e: &Experiment, cfg: &ParkConfig) -> Result<ScenarioSeries, SimError> {
    match &e.scenario {
        ScenarioSource::File { path } => ingest_scenario(path),
        ScenarioSource::Iid { slots } => {
            Ok(iid_scenario(&IidSpec::for_config(cfg), *slots, e.seed))
        }
    }
}

/// Rewrites the sale price as `p_e / ratio`.
pub fn with_spread_ratio(s: &ScenarioSeries, ratio: f64) -> ScenarioSeries {
    let mut out = s.clone();
    for slot in out.slots.iter_mut() {
        slot.p_o = slot.p_e / ratio;
    }
    out
}

fn summarize(v: &Variant, traj: &Trajectory, bound: Option<BoundCheck>) -> RunReport {
    let iterations = traj.iterations();
    let n = iterations.len().max(1) as f64;
    RunReport {
        label: v.label.clone(),
        mode: v.mode,
        ablation: v.ablation,
        spread_ratio: v.spread_ratio,
        sigma: v.sigma,
        rho: traj.rho,
        total_cost: traj.total_cost(),
        mean_cost: traj.mean_cost(),
        mean_iterations: iterations.iter().sum::<usize>() as f64 / n,
        median_iterations: median(&iterations),
        unconverged: traj.records.iter().filter(|r| !r.converged).count(),
        cdf: iteration_cdf(&iterations),
        violations: traj.violations,
        bound,
        trajectory: traj
            .records
            .iter()
            .map(|r| TrajectoryRow {
                t: r.t,
                cost: r.cost,
                iterations: r.iterations,
                lambda_ke: r.lambda_e.clone(),
                lambda_kh: r.lambda_h.clone(),
                b: r.b.clone(),
                w: r.w.clone(),
                e: r.dispatch.e(),
                g: r.dispatch.g(),
                e_o: r.dispatch.e_o(),
                p: r.dispatch.price,
            })
            .collect(),
    }
}

/// Mean-cost margin of `traj` against the relaxed optimum plus the gap.
pub fn bound_check(
    traj: &Trajectory,
    scenario: &ScenarioSeries,
    cfg: &ParkConfig,
) -> Result<BoundCheck, SimError> {
    let relaxed = relaxed_lower_bound(scenario, cfg)?.value;
    let gap = gap_bound(traj.rho, cfg);
    let costs: Vec<f64> = traj.records.iter().map(|r| r.cost).collect();
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_err = (var / n).sqrt();
    Ok(BoundCheck {
        relaxed,
        gap,
        std_err,
        margin: relaxed + gap + 3.0 * std_err - mean,
    })
}

/// Runs every setting of `e` with an already loaded config.
///
/// Settings run concurrently; results keep the sweep order, so the report
/// does not depend on the schedule.
pub fn run_experiment_with(e: &Experiment, cfg: &ParkConfig) -> Result<Report, SimError> {
    e.validate()?;
    let base = base_scenario(e, cfg)?;
    let runs = variants(e)
        .par_iter()
        .map(|v| -> Result<RunReport, SimError> {
            let scenario = match v.spread_ratio {
                Some(r) => with_spread_ratio(&base, r),
                None => base.clone(),
            };
            let traj = run_horizon(&scenario, cfg, &e.solver(v.sigma), v.mode, v.ablation)?;
            let bound = if e.check_bound {
                Some(bound_check(&traj, &scenario, cfg)?)
            } else {
                None
            };
            Ok(summarize(v, &traj, bound))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report {
        name: e.name.clone(),
        seed: e.seed,
        runs,
    })
}

/// Loads the config of `e` and runs it.
pub fn run_experiment(e: &Experiment) -> Result<Report, SimError> {
    let cfg = load_config(&e.config)?;
    run_experiment_with(e, &cfg)
}

#[derive(Debug, Deserialize)]
struct ExperimentFile {
    #[serde(default)]
    experiment: Vec<Experiment>,
}

/// Reads the `[[experiment]]` tables of a TOML file.
///
/// Relative scenario and config paths are taken relative to the file.
pub fn load_experiments(path: &std::path::Path) -> Result<Vec<Experiment>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let file: ExperimentFile =
        toml::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(std::path::Path::new(""));
    let mut out = file.experiment;
    for e in out.iter_mut() {
        if e.config.is_relative() {
            e.config = base.join(&e.config);
        }
        if let ScenarioSource::File { path } = &mut e.scenario {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        e.validate()?;
    }
    Ok(out)
}
