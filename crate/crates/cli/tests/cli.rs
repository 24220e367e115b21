//! End-to-end tests of the `tiltopt` binary: artifact correctness, rerun
//! byte-determinism, and the single-line error contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;
use tiltopt_core::models::{save_policy_net, PolicyNet, DEFAULT_HIDDEN};

fn tiltopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltopt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary launches")
}

/// Runs the binary expecting success; returns stdout.
fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = tiltopt(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Runs the binary expecting failure; asserts the single-line error
/// contract and returns the stderr line.
fn run_err(dir: &Path, args: &[&str]) -> String {
    let out = tiltopt(dir, args);
    assert!(
        !out.status.success(),
        "command {args:?} unexpectedly passed"
    );
    let stderr = String::from_utf8(out.stderr).expect("utf-8 stderr");
    let trimmed = stderr.trim_end();
    assert!(
        trimmed.starts_with("error: ") && !trimmed.contains('\n'),
        "expected one `error: ...` line, got: {stderr:?}"
    );
    trimmed.to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Extracts `key = value` from a stdout report.
fn report_value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("report line `{key}` missing in: {stdout}"))
        .to_string()
}

#[test]
fn generate_writes_identical_bytes_on_rerun_and_a_provenance_sidecar() {
    let dir = tempdir().expect("tempdir");
    for sub in ["a", "b"] {
        fs::create_dir(dir.path().join(sub)).expect("subdir");
        run_ok(
            dir.path(),
            &[
                "generate",
                "--n",
                "500",
                "--seed",
                "11",
                "--out",
                &format!("{sub}/d.csv"),
            ],
        );
    }
    assert_eq!(read(dir.path(), "a/d.csv"), read(dir.path(), "b/d.csv"));
    assert_eq!(
        read(dir.path(), "a/d.csv.meta"),
        read(dir.path(), "b/d.csv.meta")
    );

    let meta = read(dir.path(), "a/d.csv.meta");
    assert!(meta.contains("config_digest = "));
    assert!(meta.contains("seed = 11"));
    assert!(meta.contains("n = 500"));

    let data = read(dir.path(), "a/d.csv");
    assert_eq!(
        data.lines().next(),
        Some("coverage_alarm,capacity_alarm,action,loss,propensity")
    );
    assert_eq!(data.lines().count(), 501);
}

#[test]
fn generate_rejects_zero_n() {
    let dir = tempdir().expect("tempdir");
    let err = run_err(dir.path(), &["generate", "--n", "0", "--out", "d.csv"]);
    assert!(err.contains("n must be >= 1"), "got: {err}");
}

#[test]
fn generate_default_config_favors_no_change() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "20000", "--seed", "2", "--out", "d.csv"],
    );
    let data = read(dir.path(), "d.csv");
    let no_change = data
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("0"))
        .count();
    let fraction = no_change as f64 / 20000.0;
    assert!(
        (0.6..=0.95).contains(&fraction),
        "no-change fraction {fraction}"
    );
}

#[test]
fn config_file_sets_seed_and_flags_override_it() {
    let dir = tempdir().expect("tempdir");
    fs::write(dir.path().join("run.cfg"), "seed = 3\n").expect("config");
    run_ok(
        dir.path(),
        &[
            "generate",
            "--config",
            "run.cfg",
            "--n",
            "200",
            "--out",
            "from_config.csv",
        ],
    );
    run_ok(
        dir.path(),
        &[
            "generate",
            "--n",
            "200",
            "--seed",
            "3",
            "--out",
            "from_flag.csv",
        ],
    );
    run_ok(
        dir.path(),
        &[
            "generate",
            "--config",
            "run.cfg",
            "--seed",
            "9",
            "--n",
            "200",
            "--out",
            "overridden.csv",
        ],
    );
    let from_config = read(dir.path(), "from_config.csv");
    assert_eq!(from_config, read(dir.path(), "from_flag.csv"));
    assert_ne!(from_config, read(dir.path(), "overridden.csv"));
}

#[test]
fn unknown_config_key_is_rejected_with_location() {
    let dir = tempdir().expect("tempdir");
    fs::write(dir.path().join("bad.cfg"), "# comment\nenv.bogus = 1\n").expect("config");
    let err = run_err(
        dir.path(),
        &[
            "generate", "--config", "bad.cfg", "--n", "5", "--out", "d.csv",
        ],
    );
    assert!(err.contains("unknown config key `env.bogus`"), "got: {err}");
    assert!(err.contains("line 2"), "got: {err}");
}

#[test]
fn fit_propensity_recovers_softmax_logging_and_reruns_identically() {
    let dir = tempdir().expect("tempdir");
    fs::write(
        dir.path().join("run.cfg"),
        "env.logging_kind = softmax_linear\n",
    )
    .expect("config");
    run_ok(
        dir.path(),
        &[
            "generate", "--config", "run.cfg", "--n", "30000", "--seed", "5", "--out", "d.csv",
        ],
    );
    let stdout = run_ok(dir.path(), &["fit-propensity", "d.csv", "--out", "m1.csv"]);
    let reported: f64 = report_value(&stdout, "mean_abs_propensity_error")
        .parse()
        .expect("numeric report");
    assert!(reported < 0.02, "mean abs propensity error {reported}");
    report_value(&stdout, "final_cross_entropy");

    run_ok(dir.path(), &["fit-propensity", "d.csv", "--out", "m2.csv"]);
    assert_eq!(read(dir.path(), "m1.csv"), read(dir.path(), "m2.csv"));
}

#[test]
fn fit_propensity_rejects_a_single_sample() {
    let dir = tempdir().expect("tempdir");
    fs::write(
        dir.path().join("one.csv"),
        "coverage_alarm,capacity_alarm,action,loss,propensity\n0.5,0.5,0,-0.1,0.9\n",
    )
    .expect("dataset");
    let err = run_err(dir.path(), &["fit-propensity", "one.csv", "--out", "m.csv"]);
    assert!(err.contains("two distinct actions"), "got: {err}");
}

#[test]
fn train_dm_improves_the_objective_and_reruns_identically() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "3000", "--seed", "4", "--out", "d.csv"],
    );
    for sub in ["a", "b"] {
        fs::create_dir(dir.path().join(sub)).expect("subdir");
        run_ok(
            dir.path(),
            &[
                "train",
                "d.csv",
                "--estimator",
                "dm",
                "--seed",
                "4",
                "--out",
                &format!("{sub}/loss_net.csv"),
            ],
        );
    }
    assert_eq!(
        read(dir.path(), "a/loss_net.csv"),
        read(dir.path(), "b/loss_net.csv")
    );
    assert_eq!(
        read(dir.path(), "a/loss_net_history.csv"),
        read(dir.path(), "b/loss_net_history.csv")
    );

    let history = read(dir.path(), "a/loss_net_history.csv");
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,objective,test_loss"));
    let parse_row = |line: &str| -> (usize, f64, f64) {
        let mut f = line.split(',');
        (
            f.next().unwrap().parse().expect("epoch"),
            f.next().unwrap().parse().expect("objective"),
            f.next().unwrap().parse().expect("test loss"),
        )
    };
    let rows: Vec<(usize, f64, f64)> = lines.map(parse_row).collect();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows[0].0, 1);
    assert_eq!(rows[99].0, 100);
    assert!(
        rows[99].1 < rows[0].1,
        "objective at epoch 100 ({}) not below epoch 1 ({})",
        rows[99].1,
        rows[0].1
    );
    assert!(rows.iter().all(|r| r.1.is_finite() && r.2.is_finite()));
}

#[test]
fn train_rejects_unknown_estimators() {
    let dir = tempdir().expect("tempdir");
    fs::write(
        dir.path().join("d.csv"),
        "coverage_alarm,capacity_alarm,action,loss,propensity\n0.5,0.5,0,-0.1,0.9\n",
    )
    .expect("dataset");
    let err = run_err(
        dir.path(),
        &["train", "d.csv", "--estimator", "foo", "--out", "m.csv"],
    );
    assert!(err.contains("unknown estimator `foo`"), "got: {err}");
}

#[test]
fn train_ips_needs_logged_propensities_but_accepts_a_model_file() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "900", "--seed", "6", "--out", "full.csv"],
    );
    // Strip the propensity column's values to simulate a log without them.
    let stripped: String = read(dir.path(), "full.csv")
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                l.to_string()
            } else {
                let cut = l.rfind(',').expect("row has fields");
                format!("{},", &l[..cut])
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    fs::write(dir.path().join("noprop.csv"), stripped).expect("dataset");

    let err = run_err(
        dir.path(),
        &[
            "train",
            "noprop.csv",
            "--estimator",
            "ips",
            "--propensity",
            "logged",
            "--epochs",
            "2",
            "--out",
            "p.csv",
        ],
    );
    assert!(err.contains("propensity"), "got: {err}");

    run_ok(
        dir.path(),
        &["fit-propensity", "full.csv", "--out", "m.csv"],
    );
    run_ok(
        dir.path(),
        &[
            "train",
            "noprop.csv",
            "--estimator",
            "ips",
            "--propensity",
            "m.csv",
            "--epochs",
            "2",
            "--out",
            "p.csv",
        ],
    );
    let header = read(dir.path(), "p.csv");
    assert!(header.starts_with("kind=policy"), "checkpoint header");
}

#[test]
fn grid_search_reports_its_selection() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "300", "--seed", "8", "--out", "d.csv"],
    );
    let stdout = run_ok(
        dir.path(),
        &[
            "train",
            "d.csv",
            "--estimator",
            "dm",
            "--epochs",
            "2",
            "--grid-search",
            "--out",
            "loss_net.csv",
        ],
    );
    assert!(stdout.contains("selected lr = "), "stdout: {stdout}");
    assert!(
        stdout.matches("grid lr = ").count() >= 10,
        "stdout: {stdout}"
    );
    assert!(read(dir.path(), "loss_net.csv").starts_with("kind=loss"));
}

#[test]
fn evaluate_protocol_emits_the_table_and_reruns_identically() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "2000", "--seed", "7", "--out", "d.csv"],
    );
    run_ok(
        dir.path(),
        &[
            "evaluate",
            "d.csv",
            "--splits",
            "2",
            "--downsample",
            "--seed",
            "7",
            "--out",
            "r1.csv",
        ],
    );
    run_ok(
        dir.path(),
        &[
            "evaluate",
            "d.csv",
            "--splits",
            "2",
            "--downsample",
            "--seed",
            "7",
            "--out",
            "r2.csv",
        ],
    );
    let table = read(dir.path(), "r1.csv");
    assert_eq!(table, read(dir.path(), "r2.csv"));

    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "policy,dataset_variant,mean_test_loss,std_test_loss"
    );
    assert_eq!(lines.len(), 7);
    for (i, prefix) in [
        "lambda,complete,",
        "ips,complete,",
        "dm,complete,",
        "lambda,downsampled,",
        "ips,downsampled,",
        "dm,downsampled,",
    ]
    .iter()
    .enumerate()
    {
        assert!(
            lines[i + 1].starts_with(prefix),
            "row {i}: {} should start with {prefix}",
            lines[i + 1]
        );
    }
}

#[test]
fn evaluate_scores_a_checkpoint_without_retraining_single_split() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &["generate", "--n", "2000", "--seed", "9", "--out", "d.csv"],
    );
    run_ok(
        dir.path(),
        &["fit-propensity", "d.csv", "--out", "lambda_hat.csv"],
    );
    let stdout = run_ok(
        dir.path(),
        &[
            "evaluate",
            "d.csv",
            "--policies",
            "lambda_hat.csv",
            "--splits",
            "1",
            "--propensity",
            "logged",
            "--seed",
            "9",
            "--out",
            "r.csv",
        ],
    );
    let table = read(dir.path(), "r.csv");
    assert!(stdout.contains(&table), "stdout repeats the table");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2, "header plus exactly one row: {table}");
    assert!(
        lines[1].starts_with("lambda_hat,complete,"),
        "row: {}",
        lines[1]
    );
    assert!(
        lines[1].ends_with(','),
        "single-split row has an empty std cell: {}",
        lines[1]
    );
}

#[test]
fn heatmap_of_a_zero_weight_policy_is_uniform_at_the_corners() {
    let dir = tempdir().expect("tempdir");
    let net = PolicyNet::zeros(&DEFAULT_HIDDEN).expect("zero net");
    save_policy_net(&net, dir.path().join("zero.csv")).expect("checkpoint");

    run_ok(
        dir.path(),
        &["heatmap", "zero.csv", "--grid", "2", "--out", "h.csv"],
    );
    let grid = read(dir.path(), "h.csv");
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(
        lines[0],
        "coverage_alarm,capacity_alarm,p_downtilt,p_nochange,p_uptilt"
    );
    assert_eq!(lines.len(), 5, "four corner rows: {grid}");
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        for coord in &fields[..2] {
            let v: f64 = coord.parse().expect("coordinate");
            assert!(v == 0.0 || v == 1.0, "corner coordinate {coord}");
        }
        assert_eq!(fields[2], fields[3], "uniform row: {row}");
        assert_eq!(fields[3], fields[4], "uniform row: {row}");
        let p: f64 = fields[2].parse().expect("probability");
        assert!((p - 1.0 / 3.0).abs() < 1e-9);
    }

    let err = run_err(
        dir.path(),
        &["heatmap", "zero.csv", "--grid", "1", "--out", "h2.csv"],
    );
    assert!(err.contains("grid must be >= 2"), "got: {err}");
}

#[test]
fn diagnose_writes_one_row_per_size_and_rejects_bad_lists() {
    let dir = tempdir().expect("tempdir");
    run_ok(
        dir.path(),
        &[
            "diagnose",
            "--estimator",
            "ips",
            "--n-list",
            "200,400",
            "--replicates",
            "30",
            "--oracle-draws",
            "20000",
            "--seed",
            "1",
            "--out",
            "diag.csv",
        ],
    );
    let table = read(dir.path(), "diag.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "estimator,N,M,bias,variance,oracle_risk,oracle_se"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ips,200,30,"));
    assert!(lines[2].starts_with("ips,400,30,"));

    let err = run_err(
        dir.path(),
        &["diagnose", "--estimator", "ips", "--n-list", "12,abc"],
    );
    assert!(err.contains("invalid n-list"), "got: {err}");
    let err = run_err(
        dir.path(),
        &[
            "diagnose",
            "--estimator",
            "ips",
            "--replicates",
            "5",
            "--n-list",
            "100",
        ],
    );
    assert!(err.contains("30"), "got: {err}");
}
