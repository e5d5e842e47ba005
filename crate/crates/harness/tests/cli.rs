use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::{json, Value};
use skipcrawl::targets::parse_targets;

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skipcrawl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn canonical_value() -> Value {
    serde_json::from_str(&std::fs::read_to_string(repo_file("configs/canonical.json")).unwrap())
        .unwrap()
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = canonical_value();
    v["experiments"]["tail_lenghts_mm"] = json!([25]);
    let cfg = write_config(dir.path(), &v);
    let o = run(
        &["--config", cfg.to_str().unwrap(), "tail-characterize"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tail_lenghts_mm"), "{}", stderr(&o));
}

#[test]
fn empty_sweep_and_empty_scenario_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (section, key) in [
        ("tail_lengths_mm", "tail_lengths_mm"),
        ("scenario", "scenario"),
    ] {
        let mut v = canonical_value();
        v["experiments"][section] = json!([]);
        let cfg = write_config(dir.path(), &v);
        let o = run(&["--config", cfg.to_str().unwrap(), "scenario"], dir.path());
        assert_eq!(o.status.code(), Some(2), "{section}");
        assert!(stderr(&o).contains(key), "{}", stderr(&o));
    }
}

#[test]
fn unsupported_sweep_material_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["moisture-sweep", "--material", "grass"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        &[
            "moisture-sweep",
            "--material",
            "uniform_sand",
            "--grid",
            "0,2.5",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_targets_report_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let targets = dir.path().join("targets.csv");
    std::fs::write(
        &targets,
        "mode,material,moisture,target_mean_cmps,target_std_cmps,weight\n\
         skip,grass,0,5.38,0.71,1\n\
         skip,grass,0,fast,0.71,1\n",
    )
    .unwrap();
    let o = run(
        &[
            "calibrate",
            "--targets",
            targets.to_str().unwrap(),
            "--budget",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn bad_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["scenario", "--frobnicate"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn failed_assertion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = canonical_value();
    // grass slower than every other substrate breaks the ordering
    v["model"]["substrates"]["grass"]["skip"] =
        json!({"floor": 0.01, "peak": 0.01, "center": 0.0, "width": 1.0});
    let cfg = write_config(dir.path(), &v);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(
        run(&["--config", cfg, "substrate-bench"], dir.path())
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(
            &["--config", cfg, "--assert", "substrate-bench"],
            dir.path()
        )
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn canonical_bench_passes_its_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--assert", "substrate-bench"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("substrate_bench.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn budget_of_one_echoes_the_initial_config() {
    let dir = tempfile::tempdir().unwrap();
    let initial = repo_file("configs/initial.json");
    let o = run(
        &[
            "--config",
            initial.to_str().unwrap(),
            "calibrate",
            "--targets",
            repo_file("configs/targets.csv").to_str().unwrap(),
            "--budget",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("fitted_config.json")).unwrap(),
        std::fs::read_to_string(initial).unwrap()
    );
    assert_eq!(read_csv(&dir.path().join("loss_trace.csv")).len(), 1);
}

#[test]
fn loss_trace_best_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "calibrate",
            "--targets",
            repo_file("configs/targets.csv").to_str().unwrap(),
            "--budget",
            "25",
            "--trials",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("loss_trace.csv"));
    assert_eq!(rows.len(), 25);
    let best: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn zero_noise_drift_is_exactly_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["--assert", "--trials", "2", "gait-drift", "--zero-noise"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for row in read_csv(&dir.path().join("drift_summary.csv")) {
        assert_eq!(row[2], "0", "{row:?}");
    }
}

#[test]
fn single_trial_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "--trials",
            "1",
            "moisture-sweep",
            "--material",
            "uniform_sand",
            "--grid",
            "0.15",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("moisture_sweep.csv"));
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row[4], "0", "{row:?}");
    }
}

#[test]
fn analyze_reads_back_a_scenario_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["scenario"], dir.path()).status.code(), Some(0));
    let traj = dir.path().join("scenario_trajectory.csv");
    let force = dir.path().join("force.csv");
    let mut text = String::from("time_s,force_N\n");
    for i in 0..5000 {
        let t = i as f64 / 1000.0;
        let phase = (t - 0.995) / 0.01;
        let f = if (0.0..=1.0).contains(&phase) {
            4.0 * (std::f64::consts::PI * phase).sin()
        } else {
            0.0
        };
        text.push_str(&format!("{t},{f}\n"));
    }
    std::fs::write(&force, text).unwrap();
    let o = run(
        &[
            "analyze",
            "--trajectory",
            traj.to_str().unwrap(),
            "--force",
            force.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analysis.json")).unwrap())
            .unwrap();
    assert_eq!(a["force"]["n"], json!(1));
    assert!(a["trajectory"]["displacement_m"].as_f64().unwrap() > 0.1);
    assert!(
        a["trajectory"]["path_length_m"].as_f64().unwrap()
            >= a["trajectory"]["displacement_m"].as_f64().unwrap()
    );
    assert_eq!(run(&["analyze"], dir.path()).status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn target_rows_round_trip(
        rows in prop::collection::vec(
            (prop::sample::select(vec!["skip", "sync_crawl", "async_crawl"]),
             prop::sample::select(vec!["uniform_sand", "grass", "bentonite_clay"]),
             0.0f64..1.2, 0.0f64..10.0, 0.0f64..2.0, 0.01f64..5.0),
            1..8),
    ) {
        let mut text = String::from("mode,material,moisture,target_mean_cmps,target_std_cmps,weight\n");
        for (mode, mat, m, mean, std, w) in &rows {
            text.push_str(&format!("{mode},{mat},{m},{mean},{std},{w}\n"));
        }
        let parsed = parse_targets(&text).unwrap();
        prop_assert_eq!(parsed.len(), rows.len());
        for (t, (mode, mat, m, mean, _, w)) in parsed.iter().zip(&rows) {
            prop_assert_eq!(t.mode.as_str(), *mode);
            prop_assert_eq!(t.material.as_str(), *mat);
            prop_assert_eq!(t.moisture, *m);
            prop_assert!((t.target_mean * 100.0 - mean).abs() <= 1e-12 * mean.max(1.0));
            prop_assert_eq!(t.weight, *w);
        }
    }

    #[test]
    fn a_bad_weight_is_reported_on_its_row(n_good in 0usize..6) {
        let mut text = String::from("mode,material,moisture,target_mean_cmps,target_std_cmps,weight\n");
        for _ in 0..n_good {
            text.push_str("skip,grass,0,5,1,1\n");
        }
        text.push_str("skip,grass,0,5,1,-1\n");
        let err = parse_targets(&text).unwrap_err();
        let expected = format!("row {}", n_good + 1);
        prop_assert!(err.to_string().contains(&expected), "{}", err);
    }
}
