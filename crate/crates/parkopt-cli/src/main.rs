//! `parkopt`: run, sweep, verify and report park scheduling experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use parkopt::scheduler::{Ablation, Mode, RhoPolicy};
use parkopt::sim::{
    emit_report, estimate_from_csv, ingest_scenario, load_config, load_experiments, run_experiment,
    verify_oracles, Experiment, Format, Report, ScenarioSource, Sweep, VerifySpec,
};

/// Exit code when a run breaks a guaranteed invariant.
const INVARIANT_EXIT: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "parkopt",
    version,
    about = "Online dual scheduling for multi-energy parks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its report.
    Run(RunArgs),
    /// Run one experiment over a list of values of one parameter.
    Sweep(SweepArgs),
    /// Cross-check the distributed slot solver against the oracles.
    Verify(VerifyArgs),
    /// Fit user shifting willingness from metered demand deltas.
    Estimate(EstimateArgs),
    /// Run every experiment of a TOML file and write one report set.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Fast,
    Plain,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AblationArg {
    Full,
    Ta,
    Oa,
    Ca,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SweepParam {
    Ablation,
    Mode,
    SpreadRatio,
    Sigma,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario CSV; an i.i.d. scenario of `--slots` slots is drawn when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Park config TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "fast")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "full")]
    ablation: AblationArg,
    /// `auto` or a fixed nonnegative stepsize.
    #[arg(long, default_value = "auto")]
    rho: String,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slots of the i.i.d. scenario.
    #[arg(long, default_value_t = 1000)]
    slots: usize,
    /// Also compute the relaxed lower bound and the gap margin.
    #[arg(long)]
    check_bound: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Experiment name used in file names.
    #[arg(long, default_value = "run")]
    name: String,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values, e.g. `full,ta,oa,ca` or `2,1.5,1`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Brute-force grid step; `0` skips the grid check.
    #[arg(long, default_value_t = 1.0)]
    grid_step: f64,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// CSV with columns `t,p,X_IL,J` and optional `X_i,J_i` pairs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Output TOML; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// TOML file with `[[experiment]]` tables.
    #[arg(long)]
    experiments: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Fast => Mode::Fast,
        ModeArg::Plain => Mode::Plain,
    }
}

fn ablation(a: AblationArg) -> Ablation {
    match a {
        AblationArg::Full => Ablation::Full,
        AblationArg::Ta => Ablation::Ta,
        AblationArg::Oa => Ablation::Oa,
        AblationArg::Ca => Ablation::Ca,
    }
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    }
}

fn rho(s: &str) -> Result<RhoPolicy> {
    if s == "auto" {
        return Ok(RhoPolicy::Auto);
    }
    let v: f64 = s
        .parse()
        .with_context(|| format!("--rho expects `auto` or a number, got `{s}`"))?;
    Ok(RhoPolicy::Fixed(v))
}

fn experiment(c: &Common) -> Result<Experiment> {
    let scenario = match &c.scenario {
        Some(path) => ScenarioSource::File { path: path.clone() },
        None => ScenarioSource::Iid { slots: c.slots },
    };
    let mut e = Experiment::new(c.name.clone(), scenario, c.config.clone());
    e.mode = mode(c.mode);
    e.ablation = ablation(c.ablation);
    e.rho = rho(&c.rho)?;
    e.sigma = c.sigma;
    e.tol = c.tol;
    e.max_iter = c.max_iter;
    e.seed = c.seed;
    e.check_bound = c.check_bound;
    Ok(e)
}

fn sweep(param: SweepParam, values: &[String]) -> Result<Sweep> {
    let floats = || -> Result<Vec<f64>> {
        values
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .with_context(|| format!("`{v}` is not a number"))
            })
            .collect()
    };
    Ok(match param {
        SweepParam::Ablation => Sweep::Ablation(
            values
                .iter()
                .map(|v| {
                    AblationArg::from_str(v.trim(), true)
                        .map(ablation)
                        .map_err(anyhow::Error::msg)
                })
                .collect::<Result<_>>()?,
        ),
        SweepParam::Mode => Sweep::Mode(
            values
                .iter()
                .map(|v| {
                    ModeArg::from_str(v.trim(), true)
                        .map(mode)
                        .map_err(anyhow::Error::msg)
                })
                .collect::<Result<_>>()?,
        ),
        SweepParam::SpreadRatio => Sweep::SpreadRatio(floats()?),
        SweepParam::Sigma => Sweep::Sigma(floats()?),
    })
}

fn summarize(reports: &[Report]) {
    for rep in reports {
        for r in &rep.runs {
            println!(
                "{} {}: total {:.6} mean {:.6} median iterations {} violations {}",
                rep.name,
                r.label,
                r.total_cost,
                r.mean_cost,
                r.median_iterations,
                r.violations.guaranteed()
            );
            if let Some(b) = r.bound {
                println!(
                    "  bound margin {:.6} (relaxed {:.6}, gap {:.6})",
                    b.margin, b.relaxed, b.gap
                );
            }
        }
    }
}

fn finish(reports: &[Report], fmt: FormatArg, out_dir: &std::path::Path) -> Result<ExitCode> {
    let manifest = emit_report(reports, format(fmt), out_dir)?;
    summarize(reports);
    println!("wrote {}", manifest.display());
    if reports.iter().all(Report::invariants_hold) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("invariant violated: multiplier band, storage bound or balance");
        Ok(ExitCode::from(INVARIANT_EXIT))
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PARKOPT_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("PARKOPT_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("PARKOPT_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match cli.command {
        Command::Run(a) => {
            let e = experiment(&a.common)?;
            let report = run_experiment(&e)?;
            finish(&[report], a.common.format, &a.common.out_dir)
        }
        Command::Sweep(a) => {
            let mut e = experiment(&a.common)?;
            e.sweep = Some(sweep(a.param, &a.values)?);
            let report = run_experiment(&e)?;
            finish(&[report], a.common.format, &a.common.out_dir)
        }
        Command::Verify(a) => {
            let cfg = load_config(&a.config)?;
            let scenario = ingest_scenario(&a.scenario)?;
            let spec = VerifySpec {
                instances: a.instances,
                seed: a.seed,
                grid_step: (a.grid_step > 0.0).then_some(a.grid_step),
                tolerance: a.tolerance,
            };
            let r = verify_oracles(&scenario, &cfg, &spec)?;
            println!(
                "instances {} worst relative gap {:.3e} gap failures {} grid checks {} sandwich failures {}",
                r.instances, r.worst_relative_gap, r.gap_failures, r.grid_checked, r.sandwich_failures
            );
            Ok(if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(INVARIANT_EXIT)
            })
        }
        Command::Estimate(a) => {
            let est = estimate_from_csv(&a.input, a.window)?;
            let text = est.to_toml();
            match &a.out {
                Some(path) => std::fs::write(path, text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(a) => {
            let experiments = load_experiments(&a.experiments)?;
            let reports = experiments
                .iter()
                .map(run_experiment)
                .collect::<Result<Vec<_>, _>>()?;
            finish(&reports, a.format, &a.out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
