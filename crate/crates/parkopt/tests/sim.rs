mod common;

use common::{data_dir, park, sample};
use parkopt::park_model::ModelError;
use parkopt::scheduler::{slot_cost, Ablation, Mode};
use parkopt::sim::experiment::iteration_cdf;
use parkopt::sim::*;

const HEADER: &str = "t,p_e,p_g,p_o,R_1,R_2,X_1,X_2,X_3,H_load,G_load\n";

fn sample_experiment(name: &str) -> Experiment {
    Experiment::new(
        name,
        ScenarioSource::File {
            path: data_dir().join("sample_24.csv"),
        },
        data_dir().join("park.toml"),
    )
}

#[test]
fn bundled_scenario_has_a_day_of_slots() {
    let s = sample();
    assert_eq!(s.len(), 24);
    s.validate(2, 3).unwrap();
}

#[test]
fn sale_above_purchase_names_the_slot() {
    let csv = format!("{HEADER}0,0.5,0.4,0.2,0,0,1,1,1,1,1\n1,0.5,0.4,0.7,0,0,1,1,1,1,1\n");
    let err = parse_scenario(csv.as_bytes(), &Units::default()).unwrap_err();
    match err {
        SimError::Model(ModelError::InvalidScenario { slot, .. }) => assert_eq!(slot, 1),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn missing_column_is_named() {
    let csv = "t,p_e,p_g,R_1,X_1,H_load,G_load\n0,0.5,0.4,0,1,1,1\n";
    let err = parse_scenario(csv.as_bytes(), &Units::default()).unwrap_err();
    assert!(
        matches!(&err, SimError::Schema(m) if m.contains("p_o")),
        "{err}"
    );
}

#[test]
fn negative_values_are_rejected_with_position() {
    let csv = format!("{HEADER}0,0.5,0.4,0.2,0,0,1,-1,1,1,1\n");
    match parse_scenario(csv.as_bytes(), &Units::default()).unwrap_err() {
        SimError::NegativeValue { slot, column, .. } => {
            assert_eq!(slot, 0);
            assert_eq!(column, "X_2");
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn units_are_converted_on_ingest() {
    let csv = format!("{HEADER}0,500,400,200,1000,0,2000,0,0,0,0\n");
    let units = Units {
        energy: "kWh".into(),
        price: "CNY/MWh".into(),
    };
    let s = parse_scenario(csv.as_bytes(), &units).unwrap();
    assert_eq!(s.slots[0].p_e, 0.5);
    assert_eq!(s.slots[0].r[0], 1.0);
    assert_eq!(s.slots[0].x_il[0], 2.0);
    let bad = Units {
        energy: "GJ".into(),
        price: "CNY/kWh".into(),
    };
    assert!(matches!(
        parse_scenario(csv.as_bytes(), &bad),
        Err(SimError::Unit(_))
    ));
}

#[test]
fn ablation_sweep_ranks_the_full_park_first() {
    let mut e = sample_experiment("ablation");
    e.sweep = Some(Sweep::Ablation(Ablation::ALL.to_vec()));
    let report = run_experiment(&e).unwrap();
    assert_eq!(report.runs.len(), 4);
    let full = report.runs[0].total_cost;
    for r in &report.runs[1..] {
        assert!(full <= r.total_cost, "{} {}", r.label, r.total_cost);
    }
    assert!(report.invariants_hold());
}

#[test]
fn mode_sweep_emits_two_cdfs() {
    let mut e = sample_experiment("modes");
    e.sweep = Some(Sweep::Mode(vec![Mode::Fast, Mode::Plain]));
    let report = run_experiment(&e).unwrap();
    assert_eq!(report.runs.len(), 2);
    for r in &report.runs {
        assert_eq!(r.cdf.last().map(|p| p.1), Some(1.0));
    }
}

#[test]
fn narrower_spread_never_costs_more() {
    // Halving the spread twice. Close to a zero spread the storage value
    // band collapses and batteries cycle at full rate, which costs more.
    let mut e = sample_experiment("spread");
    e.sweep = Some(Sweep::SpreadRatio(vec![2.0, 4.0 / 3.0, 8.0 / 7.0]));
    let report = run_experiment(&e).unwrap();
    let totals: Vec<f64> = report.runs.iter().map(|r| r.total_cost).collect();
    for w in totals.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{totals:?}");
    }
}

#[test]
fn invalid_sweep_values_are_rejected() {
    let mut e = sample_experiment("bad");
    e.sweep = Some(Sweep::SpreadRatio(vec![2.0, 0.5]));
    assert!(matches!(e.validate(), Err(SimError::Config(_))));
    e.sweep = Some(Sweep::Sigma(vec![f64::NAN]));
    assert!(matches!(run_experiment(&e), Err(SimError::Config(_))));
}

#[test]
fn empty_experiment_list_writes_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = emit_report(&[], Format::Csv, dir.path()).unwrap();
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(body["files"], serde_json::json!([]));
}

#[test]
fn ablation_report_has_a_four_row_cost_table() {
    let mut e = sample_experiment("table");
    e.sweep = Some(Sweep::Ablation(Ablation::ALL.to_vec()));
    let report = run_experiment(&e).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&[report], Format::Csv, dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("table_costs.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("label,mode,ablation"));
    let summary: Vec<RunSummary> = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("table_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary.len(), 4);
    let trajectory = std::fs::read_to_string(dir.path().join("table_full_trajectory.csv")).unwrap();
    assert!(trajectory.starts_with(
        "t,cost,iterations,lambda_ke_1,lambda_ke_2,lambda_kh_1,lambda_kh_2,B_1,B_2,W_1,W_2,E,G,E_o,p\n"
    ));
    assert_eq!(trajectory.lines().count(), 25);
}

#[test]
fn iteration_cdf_is_monotone_to_one() {
    let cdf = iteration_cdf(&[3, 1, 4, 1, 5, 9, 2, 6]);
    assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    assert_eq!(cdf.last().unwrap().1, 1.0);
    assert!(cdf.first().unwrap().1 > 0.0);
}

#[test]
fn reports_are_bit_identical_across_runs_and_thread_counts() {
    let mut e = Experiment::new(
        "det",
        ScenarioSource::Iid { slots: 48 },
        data_dir().join("park.toml"),
    );
    e.seed = 42;
    e.sweep = Some(Sweep::Ablation(Ablation::ALL.to_vec()));
    let cfg = park();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let report = pool.install(|| run_experiment_with(&e, &cfg)).unwrap();
        serde_json::to_string(&report).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(rayon::current_num_threads().max(4)));
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let report: Report = serde_json::from_str(&one).unwrap();
    for d in &dirs {
        emit_report(std::slice::from_ref(&report), Format::Csv, d.path()).unwrap();
    }
    for name in [
        "manifest.json",
        "det_costs.csv",
        "det_cdf.csv",
        "det_summary.json",
        "det_oa_trajectory.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn totals_close_over_slot_costs() {
    let report = run_experiment(&sample_experiment("closure")).unwrap();
    let run = &report.runs[0];
    let sum: f64 = run.trajectory.iter().map(|r| r.cost).sum();
    assert!((run.total_cost - sum).abs() <= 1e-6);
    let cfg = park();
    let scenario = sample();
    let traj = parkopt::scheduler::run_horizon(
        &scenario,
        &cfg,
        &Default::default(),
        Mode::Fast,
        Ablation::Full,
    )
    .unwrap();
    let direct: f64 = traj
        .records
        .iter()
        .zip(&scenario.slots)
        .map(|(r, s)| slot_cost(&r.dispatch, s, &cfg))
        .sum();
    assert!((run.total_cost - direct).abs() <= 1e-6);
}

#[test]
fn experiment_files_resolve_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data_dir().join("park.toml"), dir.path().join("park.toml")).unwrap();
    std::fs::copy(data_dir().join("sample_24.csv"), dir.path().join("day.csv")).unwrap();
    std::fs::copy(
        data_dir().join("sample_24.units.toml"),
        dir.path().join("day.units.toml"),
    )
    .unwrap();
    let file = dir.path().join("experiments.toml");
    std::fs::write(
        &file,
        r#"
[[experiment]]
name = "day"
config = "park.toml"
scenario = { kind = "file", path = "day.csv" }
sweep = { param = "ablation", values = ["full", "ca"] }

[[experiment]]
name = "iid"
config = "park.toml"
scenario = { kind = "iid", slots = 10 }
seed = 3
"#,
    )
    .unwrap();
    let list = load_experiments(&file).unwrap();
    assert_eq!(list.len(), 2);
    let report = run_experiment(&list[0]).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert_eq!(
        run_experiment(&list[1]).unwrap().runs[0].trajectory.len(),
        10
    );
}

#[test]
fn verify_passes_on_a_few_instances() {
    let cfg = park();
    let spec = VerifySpec {
        instances: 6,
        ..VerifySpec::default()
    };
    let report = verify_oracles(&sample(), &cfg, &spec).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.grid_checked, 6);
}

#[test]
fn estimation_recovers_the_generating_model() {
    let (alpha, gamma) = (1.3, 0.02);
    let n = 16;
    let prices: Vec<f64> = (0..n).map(|t| 0.4 + 0.3 * ((t * 7 % 5) as f64)).collect();
    let loads: Vec<f64> = (0..n).map(|t| 1.0 + 0.2 * ((t * 3 % 4) as f64)).collect();
    let mut moved = vec![vec![0.0; n]; n];
    for t in 0..n {
        for d in 1..=4 {
            if t + d < n {
                moved[t][t + d] = loads[t] * gamma * prices[t + d] / ((d + 1) as f64).powf(alpha);
            }
        }
    }
    let j: Vec<f64> = (0..n)
        .map(|t| (0..n).map(|s| moved[s][t] - moved[t][s]).sum())
        .collect();
    let mut csv = String::from("t,p,X_IL,J,X_1,J_1\n");
    for t in 0..n {
        csv += &format!(
            "{t},{},{},{},{},{}\n",
            prices[t], loads[t], j[t], loads[t], j[t]
        );
    }
    let input = parse_estimate_input(csv.as_bytes()).unwrap();
    let est = estimate(&input, 4).unwrap();
    let agg = est.aggregate.unwrap();
    assert!((agg.alpha - alpha).abs() / alpha <= 1e-4, "{agg:?}");
    assert!((est.users[0].alpha - alpha).abs() / alpha <= 1e-4);
    let model = est.shift_model(0.15).unwrap();
    assert_eq!(model.users.len(), 1);
    assert!(est.to_toml().contains("alpha"));
}
