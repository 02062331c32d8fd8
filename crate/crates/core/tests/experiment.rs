use knnball::chenstein::Pmf;
use knnball::experiment::{
    load_replicates_csv, persist, run_experiment, run_experiment_with_workers, ExperimentConfig,
    OutputPaths, CSV_HEADER,
};
use knnball::measures::{DensitySpec, SpecKind};
use serde_json::Value;

const KEYS: [&str; 10] = [
    "config",
    "pmf",
    "mean_count",
    "se_count",
    "expected_count",
    "tv_to_poisson",
    "tv_se",
    "ks_to_gumbel",
    "diagnostics",
    "runtime_seconds",
];

fn configs() -> Vec<ExperimentConfig> {
    let a = ExperimentConfig::new(2, 500, 1, 0.0, 40, 1);
    let mut b = ExperimentConfig::new(3, 800, 2, -0.5, 30, 2);
    b.chenstein_diagnostics = true;
    b.replicates = 120;
    let mut c = ExperimentConfig::new(2, 400, 3, 0.5, 25, 3);
    c.density = DensitySpec {
        dim: 2,
        kind: SpecKind::Piecewise,
        m: Some(2),
        weights: Some(vec![0.5, 1.5, 1.0, 1.0]),
    };
    vec![a, b, c]
}

#[test]
fn summary_json_matches_schema() {
    for cfg in configs() {
        let dir = tempfile::tempdir().unwrap();
        let paths = OutputPaths::in_dir(dir.path());
        let report = run_experiment(&cfg).unwrap();
        persist(&report, &paths).unwrap();
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(&paths.summary_json).unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut want = KEYS.to_vec();
        want.sort_unstable();
        assert_eq!(keys, want);
        for k in [
            "mean_count",
            "se_count",
            "expected_count",
            "tv_to_poisson",
            "tv_se",
            "ks_to_gumbel",
            "runtime_seconds",
        ] {
            assert!(obj[k].is_f64(), "{k}");
        }
        let pmf: Pmf = serde_json::from_value(obj["pmf"].clone()).unwrap();
        assert!((pmf.probs().iter().sum::<f64>() + pmf.tail() - 1.0).abs() < 1e-12);
        assert!((pmf.mean() - report.mean_count).abs() < 1e-12);
        let back: ExperimentConfig = serde_json::from_value(obj["config"].clone()).unwrap();
        assert_eq!(back, cfg);
        match obj["diagnostics"].as_object() {
            Some(d) => {
                assert!(cfg.chenstein_diagnostics);
                for k in [
                    "b1",
                    "b2",
                    "b3",
                    "bound",
                    "occupancy_failure_rate",
                    "rn_estimate",
                    "mismatch_rate",
                    "epsilon",
                    "cells_per_axis",
                ] {
                    assert!(d.contains_key(k), "{k}");
                }
                assert_eq!(d["b3"].as_f64(), Some(0.0));
            }
            None => assert!(!cfg.chenstein_diagnostics && obj["diagnostics"].is_null()),
        }
    }
}

#[test]
fn csv_round_trip_reproduces_pmf() {
    let cfg = configs().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let paths = OutputPaths::in_dir(&dir.path().join("nested"));
    let report = run_experiment(&cfg).unwrap();
    persist(&report, &paths).unwrap();
    let text = std::fs::read_to_string(&paths.replicates_csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), cfg.replicates + 1);
    let back = load_replicates_csv(&paths.replicates_csv).unwrap();
    assert_eq!(back, report.records);
    let counts: Vec<u64> = back.iter().map(|r| r.count).collect();
    assert_eq!(Pmf::from_counts(&counts).unwrap(), report.pmf);
}

#[test]
fn io_errors_carry_the_path() {
    let cfg = configs().remove(0);
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = persist(&report, &OutputPaths::in_dir(&blocker.join("sub"))).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
    assert!(load_replicates_csv(&dir.path().join("missing.csv"))
        .unwrap_err()
        .to_string()
        .contains("missing.csv"));
}

#[test]
fn report_does_not_depend_on_workers() {
    let mut cfg = configs().remove(1);
    cfg.replicates = 100;
    let mut a = run_experiment_with_workers(&cfg, Some(1)).unwrap();
    let mut b = run_experiment_with_workers(&cfg, Some(3)).unwrap();
    a.runtime_seconds = 0.0;
    b.runtime_seconds = 0.0;
    assert_eq!(a, b);
}

/// Poisson trend for k = 2 (d = 2, t = 0, R = 5000); several minutes.
#[test]
#[ignore]
fn tv_trend_for_second_neighbors() {
    let tv = |n| {
        let r = run_experiment(&ExperimentConfig::new(2, n, 2, 0.0, 5000, 20_261_016)).unwrap();
        println!(
            "n = {n}: TV = {:.4} ± {:.4}, KS = {:.4}",
            r.tv_to_poisson, r.tv_se, r.ks_to_gumbel
        );
        r.tv_to_poisson
    };
    assert!(tv(10_000) < tv(1_000));
}
