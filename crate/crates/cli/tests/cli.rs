use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn prosrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosrs")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn optimize_writes_logs_summaries_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let o = prosrs(&[
        "optimize",
        "--problem",
        "Dropwave2",
        "--n-par",
        "3",
        "--iterations",
        "5",
        "--repeats",
        "2",
        "--seed",
        "7",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = dir.path().join("Dropwave2");
    let log = fs::read_to_string(p.join("prosrs_run000.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "iteration,event,zoom_level,best_y,true_f_best,algo_time_s,eval_time_s");
    // One initial-design batch of 3 points, then 5 iterations.
    assert_eq!(lines.count(), 6);
    let summary = fs::read_to_string(p.join("prosrs_run001_summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 8"));
    assert!(summary.contains("\"n_evaluations\": 18"));
    let curve = fs::read_to_string(p.join("prosrs_curve.csv")).unwrap();
    assert!(curve.starts_with("iteration,mean,std,n_runs\n0,"));
    assert_eq!(curve.lines().count(), 7);
}

#[test]
fn random_search_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let o = prosrs(&[
        "optimize",
        "--problem",
        "SixHumpCamel2",
        "--algo",
        "random",
        "--iterations",
        "4",
        "--n-par",
        "2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success());
    let log = fs::read_to_string(dir.path().join("SixHumpCamel2/random_run000.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.lines().skip(1).all(|l| l.contains(",normal,")));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = prosrs(&[
            "bench-suite",
            "--problem",
            "Rastrigin2,PowerSum4",
            "--n-par",
            "2",
            "--iterations",
            "6",
            "--repeats",
            "2",
            "--seed",
            "3",
            "--deterministic",
            "--out",
            &out_arg(d.path()),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for rel in [
        "suite_summary.csv",
        "Rastrigin2/prosrs_run000.csv",
        "Rastrigin2/prosrs_run001_summary.json",
        "PowerSum4/prosrs_curve.csv",
    ] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
    let suite = fs::read_to_string(a.path().join("suite_summary.csv")).unwrap();
    assert_eq!(suite.lines().count(), 5);
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "n_par = 2\nn_iterations = 3\nseed = 100\n\n[s_init]\nsigma = 0.2\n").unwrap();
    let o = prosrs(&[
        "optimize",
        "--problem",
        "Hartmann6",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("Hartmann6/prosrs_run000_summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 5"));
    assert!(summary.contains("\"n_iterations\": 3"));
    assert!(summary.contains("\"sigma\": 0.2"));
}

#[test]
fn cost_profile_rows_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = prosrs(&[
        "cost-profile",
        "--problem",
        "Rastrigin2",
        "--iterations",
        "1",
        "--n-par",
        "2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("Rastrigin2_cost.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("iteration,event,algo_time_s,eval_time_s\n1,"));
    let summary = fs::read_to_string(dir.path().join("cost_summary.json")).unwrap();
    assert!(summary.contains("\"late_to_early_median_ratio\": null"));
}

#[test]
fn model_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = prosrs(&[
        "model-error",
        "--problem",
        "Dropwave2,Rastrigin2",
        "--n-values",
        "10,20",
        "--repeats",
        "2",
        "--n-mc",
        "1000",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("model_error.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let repeats = fs::read_to_string(dir.path().join("model_error_repeats.csv")).unwrap();
    assert_eq!(repeats.lines().count(), 9);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let unknown = prosrs(&["optimize", "--problem", "Rosenbrock5", "--out", &out]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Ackley10"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "rho = 1.5\n").unwrap();
    let bad_value = prosrs(&["optimize", "--problem", "Dropwave2", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(bad_value.status.code(), Some(2));

    fs::write(&cfg, "not_a_field = 1\n").unwrap();
    let bad_key = prosrs(&["optimize", "--problem", "Dropwave2", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(bad_key.status.code(), Some(2));

    let bad_algo = prosrs(&["optimize", "--problem", "Dropwave2", "--algo", "grid", "--out", &out]);
    assert_eq!(bad_algo.status.code(), Some(2));

    let zero = prosrs(&["optimize", "--problem", "Dropwave2", "--repeats", "0", "--out", &out]);
    assert_eq!(zero.status.code(), Some(2));
    let missing = prosrs(&["optimize", "--out", &out]);
    assert_eq!(missing.status.code(), Some(2));
}
