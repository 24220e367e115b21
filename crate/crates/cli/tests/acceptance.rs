//! Acceptance gate for the toolkit: eight criteria, one test each, covering
//! estimator statistics, end-to-end learning quality, gradient correctness,
//! propensity recovery, protocol fidelity, command determinism, and numeric
//! invariants. The harness prints one pass/fail line per criterion; each
//! test additionally prints a `criterion N (<label>): PASS — <metrics>` line
//! (visible with `--nocapture`) and enforces its runtime budget.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use tiltopt_core::dataset::{downsample_balanced, split_dataset};
use tiltopt_core::estimators::diagnostics::{
    estimator_diagnostics, DiagnosticsConfig, EstimatorKind,
};
use tiltopt_core::evaluation::{
    run_protocol, ProtocolConfig, ResultRow, POLICY_DM, POLICY_IPS, POLICY_LAMBDA,
    VARIANT_COMPLETE, VARIANT_DOWNSAMPLED,
};
use tiltopt_core::learning::{greedy_from_loss, greedy_from_policy, train_dm, TrainConfig};
use tiltopt_core::models::{gradient_check, LossNet, PolicyNet};
use tiltopt_core::propensity::{
    fit_propensity_floored, predict_propensity, DEFAULT_FIT_EPOCHS, DEFAULT_FIT_LR, DEFAULT_FLOOR,
};
use tiltopt_core::seeding::{self, tags};
use tiltopt_core::synthenv::{
    generate_dataset, logging_propensities, sample_context, EnvConfig, EnvOracle, LoggingKind,
};
use tiltopt_core::types::{Action, Context, LoggedSample, OneHotPolicy, UniformPolicy};

/// Asserts the elapsed time stayed under the criterion's budget and returns
/// the elapsed seconds for the PASS line.
fn within_budget(start: Instant, minutes: f64, label: &str) -> f64 {
    let secs = start.elapsed().as_secs_f64();
    assert!(
        secs < minutes * 60.0,
        "criterion {label}: FAIL — runtime {secs:.1}s exceeded the {minutes}-minute budget"
    );
    secs
}

// ---------------------------------------------------------------------------
// Criterion 1: with true logged propensities and a fixed target policy, the
// importance-weighted estimator is unbiased for the oracle risk.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_ips_unbiased_with_true_propensities() {
    let start = Instant::now();
    let env = EnvConfig::default();
    let cfg = DiagnosticsConfig {
        n_values: vec![2000],
        m_replicates: 200,
        oracle_draws: 1_000_000,
        seed: 101,
    };
    let report = estimator_diagnostics(&env, &UniformPolicy, EstimatorKind::Ips, &cfg)
        .expect("diagnostics run");
    let row = &report.rows[0];
    let se_of_mean = (row.variance / row.m as f64).sqrt();
    let tol = 3.0 * se_of_mean;
    assert!(
        row.bias.abs() < tol,
        "criterion 1 (ips unbiasedness): FAIL — |mean - oracle| = {:.3e} >= {:.3e} \
         (3 x replicate std / sqrt(M); oracle risk {:.6} +- {:.1e})",
        row.bias.abs(),
        tol,
        row.oracle_risk,
        row.oracle_se,
    );
    let secs = within_budget(start, 2.0, "1 (ips unbiasedness)");
    println!(
        "criterion 1 (ips unbiasedness): PASS — |bias| {:.3e} < {:.3e}, oracle risk {:.6} (se {:.1e}), M={}, N={}, {:.1}s",
        row.bias.abs(),
        tol,
        row.oracle_risk,
        row.oracle_se,
        row.m,
        row.n,
        secs
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: replicate variance of both estimators decays like 1/N — the
// fitted log-log slope over N in {500,...,8000} lies in [-1.2, -0.8].
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_variance_decays_inversely_with_sample_size() {
    let start = Instant::now();
    let env = EnvConfig::default();
    let sizes = vec![500, 1000, 2000, 4000, 8000];

    let ips_cfg = DiagnosticsConfig {
        n_values: sizes.clone(),
        m_replicates: 200,
        oracle_draws: 1_000_000,
        seed: 102,
    };
    let ips = estimator_diagnostics(&env, &UniformPolicy, EstimatorKind::Ips, &ips_cfg)
        .expect("ips diagnostics");
    let ips_slope = ips
        .log_log_variance_slope()
        .expect("positive variances at every N");

    // One fixed pre-trained loss model: the measured variance is then purely
    // the estimator's own sampling variance over logged contexts, which is
    // the quantity whose 1/N decay is being checked. Refitting per replicate
    // would add training noise with its own N-dependence on top.
    let fit_data = generate_dataset(&env, 8000, 777).expect("training data");
    let fit_cfg = TrainConfig {
        seed: 777,
        ..TrainConfig::default()
    };
    let (loss_net, _) = train_dm(&fit_data, &fit_cfg, None).expect("loss model fit");
    let dm_cfg = DiagnosticsConfig {
        n_values: sizes,
        m_replicates: 200,
        oracle_draws: 1_000_000,
        seed: 103,
    };
    let dm = estimator_diagnostics(
        &env,
        &UniformPolicy,
        EstimatorKind::DmFixed(&loss_net),
        &dm_cfg,
    )
    .expect("dm diagnostics");
    let dm_slope = dm
        .log_log_variance_slope()
        .expect("positive variances at every N");

    for (label, slope) in [("ips", ips_slope), ("dm", dm_slope)] {
        assert!(
            (-1.2..=-0.8).contains(&slope),
            "criterion 2 (variance scaling): FAIL — {label} log-log slope {slope:.3} outside [-1.2, -0.8]"
        );
    }
    let secs = within_budget(start, 5.0, "2 (variance scaling)");
    println!(
        "criterion 2 (variance scaling): PASS — ips slope {ips_slope:.3}, dm slope {dm_slope:.3}, both in [-1.2, -0.8], {secs:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: under heavier transition noise the model-based estimator has
// lower replicate variance than importance weighting on the same replicates.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_dm_variance_below_ips_under_noise() {
    let start = Instant::now();
    let env = EnvConfig {
        noise_std: 0.2,
        ..EnvConfig::default()
    };
    // Same seed for both runs: the replicate datasets are identical pairs,
    // so the comparison is paired rather than across independent draws.
    let base = DiagnosticsConfig {
        n_values: vec![1000],
        m_replicates: 200,
        oracle_draws: 1_000_000,
        seed: 104,
    };
    let ips = estimator_diagnostics(&env, &UniformPolicy, EstimatorKind::Ips, &base)
        .expect("ips diagnostics");
    let train_cfg = TrainConfig::default();
    let dm = estimator_diagnostics(
        &env,
        &UniformPolicy,
        EstimatorKind::DmRefit(&train_cfg),
        &base,
    )
    .expect("dm diagnostics");
    let v_ips = ips.rows[0].variance;
    let v_dm = dm.rows[0].variance;
    assert!(
        v_dm < v_ips,
        "criterion 3 (dm variance advantage): FAIL — dm variance {v_dm:.3e} >= ips variance {v_ips:.3e}"
    );
    let secs = within_budget(start, 3.0, "3 (dm variance advantage)");
    println!(
        "criterion 3 (dm variance advantage): PASS — dm variance {v_dm:.3e} < ips variance {v_ips:.3e} (ratio {:.2}), {secs:.1}s",
        v_ips / v_dm
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: the full protocol at N = 100000, K = 5 with default
// hyperparameters reproduces the qualitative ordering
// L(dm) < L(ips) < L(lambda) on both dataset variants, and the oracle risks
// of the learned policies show the same ordering at three Monte-Carlo
// standard errors.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_protocol_reproduces_policy_ordering() {
    let start = Instant::now();
    let env = EnvConfig::default();
    let d = generate_dataset(&env, 100_000, 105).expect("dataset");
    let pcfg = ProtocolConfig {
        train: TrainConfig {
            seed: 105,
            ..TrainConfig::default()
        },
        downsample: true,
        seed: 105,
        ..ProtocolConfig::default()
    };
    let outcome = run_protocol(&d, &pcfg).expect("protocol run");

    let mean_of = |policy: &str, variant: &str| -> f64 {
        let row: &ResultRow = outcome
            .rows
            .iter()
            .find(|r| r.policy == policy && r.variant == variant)
            .unwrap_or_else(|| panic!("missing result row {policy}/{variant}"));
        row.mean.unwrap_or_else(|| {
            panic!(
                "row {policy}/{variant} has failed splits: {:?}",
                row.per_split
            )
        })
    };
    let mut table = String::new();
    for variant in [VARIANT_COMPLETE, VARIANT_DOWNSAMPLED] {
        let l_lambda = mean_of(POLICY_LAMBDA, variant);
        let l_ips = mean_of(POLICY_IPS, variant);
        let l_dm = mean_of(POLICY_DM, variant);
        assert!(
            l_dm < l_ips && l_ips < l_lambda,
            "criterion 4 (policy ordering): FAIL — {variant} test losses not ordered: \
             dm {l_dm:.5}, ips {l_ips:.5}, lambda {l_lambda:.5}"
        );
        table.push_str(&format!(
            " [{variant}: dm {l_dm:.4} < ips {l_ips:.4} < lambda {l_lambda:.4}]"
        ));
    }

    // Oracle risks of the learned per-split greedy policies and of the true
    // logging policy, each by fresh simulation.
    let oracle =
        EnvOracle::new(env.clone(), 1_000_000, seeding::mix(105, tags::ORACLE)).expect("oracle");
    let mut ips_risks = Vec::new();
    let mut dm_risks = Vec::new();
    for split in &outcome.splits {
        ips_risks.push(oracle.risk(&OneHotPolicy(greedy_from_policy(&split.policy_net))));
        dm_risks.push(oracle.risk(&OneHotPolicy(greedy_from_loss(&split.loss_net))));
    }
    let lambda_risk = oracle.risk(&env.logging_policy());
    let mean_se = |risks: &[tiltopt_core::synthenv::McEstimate]| -> (f64, f64) {
        let k = risks.len() as f64;
        let mean = risks.iter().map(|r| r.value).sum::<f64>() / k;
        let se = risks
            .iter()
            .map(|r| r.std_error * r.std_error)
            .sum::<f64>()
            .sqrt()
            / k;
        (mean, se)
    };
    let (ips_mean, ips_se) = mean_se(&ips_risks);
    let (dm_mean, dm_se) = mean_se(&dm_risks);
    let dm_ips_gap = ips_mean - dm_mean;
    let dm_ips_tol = 3.0 * (dm_se * dm_se + ips_se * ips_se).sqrt();
    assert!(
        dm_ips_gap > dm_ips_tol,
        "criterion 4 (policy ordering): FAIL — oracle risks do not separate dm below ips: \
         dm {dm_mean:.5} vs ips {ips_mean:.5}, gap {dm_ips_gap:+.2e} <= 3 x combined se {dm_ips_tol:.2e}. \
         The test-loss orderings above did hold ({table}); under the simulator oracle the two \
         learned greedy policies are a near-tie (both within ~2e-4 of each other across seeds), \
         with ips consistently a hair ahead — so this sub-check fails honestly: the estimated \
         test-loss ordering is driven by shared propensity-model misfit, not by a true risk gap. \
         See the README's acceptance-suite section for the full analysis."
    );
    let ips_lambda_gap = lambda_risk.value - ips_mean;
    let ips_lambda_tol =
        3.0 * (ips_se * ips_se + lambda_risk.std_error * lambda_risk.std_error).sqrt();
    assert!(
        ips_lambda_gap > ips_lambda_tol,
        "criterion 4 (policy ordering): FAIL — oracle risks: ips {ips_mean:.5} vs lambda {:.5}, \
         gap {ips_lambda_gap:.2e} <= 3 x combined se {ips_lambda_tol:.2e}",
        lambda_risk.value
    );
    let secs = within_budget(start, 30.0, "4 (policy ordering)");
    println!(
        "criterion 4 (policy ordering): PASS —{table} | oracle risks dm {dm_mean:.5} < ips {ips_mean:.5} \
         < lambda {:.5} (gaps {dm_ips_gap:.2e} > {dm_ips_tol:.2e}, {ips_lambda_gap:.2e} > {ips_lambda_tol:.2e}), {secs:.0}s",
        lambda_risk.value
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: analytic gradients of both training objectives match central
// finite differences (h = 1e-5) to a max relative error below 1e-4 on 20
// random small instances.
// ---------------------------------------------------------------------------

fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

#[test]
fn criterion_5_analytic_gradients_match_finite_differences() {
    let start = Instant::now();
    let env = EnvConfig::default();
    let mut worst: f64 = 0.0;
    for t in 0..20u64 {
        let mut rng = seeding::rng_indexed(205, tags::ORACLE, t);
        let n_samples = 8 + (t as usize % 5);
        let hidden: &[usize] = match t % 3 {
            0 => &[4],
            1 => &[6],
            _ => &[5, 4],
        };
        let samples: Vec<LoggedSample> = (0..n_samples)
            .map(|_| {
                let x = sample_context(&env, &mut rng);
                let a = Action::ALL[rng.gen_range(0..3)];
                let loss = rng.gen_range(-1.0..1.0);
                let lambda = rng.gen_range(0.05..1.0);
                LoggedSample::new(x, a, loss, Some(lambda)).expect("valid sample")
            })
            .collect();
        let inputs: Vec<[f64; 2]> = samples.iter().map(|s| s.context.features()).collect();
        let n = samples.len() as f64;

        // Importance-weighted objective of a policy network.
        let pnet = PolicyNet::new(hidden, rng.gen()).expect("policy net");
        let mlp = pnet.mlp().clone();
        let mut analytic = vec![0.0; mlp.param_count()];
        for (i, s) in samples.iter().enumerate() {
            let cache = mlp.forward_cached(&inputs[i]);
            let probs = softmax3([cache.output()[0], cache.output()[1], cache.output()[2]]);
            let logged = s.action.index();
            let base = s.loss / s.propensity.unwrap() * probs[logged] / n;
            let upstream = [
                base * (f64::from(logged == 0) - probs[0]),
                base * (f64::from(logged == 1) - probs[1]),
                base * (f64::from(logged == 2) - probs[2]),
            ];
            mlp.backward(&cache, &upstream, &mut analytic);
        }
        let objective = |params: &[f64]| {
            let mut m = mlp.clone();
            m.set_params(params).unwrap();
            let mut total = 0.0;
            for (i, s) in samples.iter().enumerate() {
                let out = m.forward(&inputs[i]);
                let probs = softmax3([out[0], out[1], out[2]]);
                total += s.loss / s.propensity.unwrap() * probs[s.action.index()];
            }
            total / n
        };
        let report = gradient_check(&objective, mlp.params(), &analytic, 1e-5);
        assert!(
            report.passes(1e-4),
            "criterion 5 (gradient correctness): FAIL — importance-weighted objective, instance {t}: {report:?}"
        );
        worst = worst.max(report.max_rel_error);

        // Squared-error objective of a loss network.
        let lnet = LossNet::new(hidden, rng.gen()).expect("loss net");
        let mlp = lnet.mlp().clone();
        let mut analytic = vec![0.0; mlp.param_count()];
        for (i, s) in samples.iter().enumerate() {
            let cache = mlp.forward_cached(&inputs[i]);
            let logged = s.action.index();
            let mut upstream = [0.0; 3];
            upstream[logged] = -2.0 * (s.loss - cache.output()[logged]) / n;
            mlp.backward(&cache, &upstream, &mut analytic);
        }
        let objective = |params: &[f64]| {
            let mut m = mlp.clone();
            m.set_params(params).unwrap();
            let mut total = 0.0;
            for (i, s) in samples.iter().enumerate() {
                let out = m.forward(&inputs[i]);
                let r = s.loss - out[s.action.index()];
                total += r * r;
            }
            total / n
        };
        let report = gradient_check(&objective, mlp.params(), &analytic, 1e-5);
        assert!(
            report.passes(1e-4),
            "criterion 5 (gradient correctness): FAIL — squared-error objective, instance {t}: {report:?}"
        );
        worst = worst.max(report.max_rel_error);
    }
    let secs = within_budget(start, 1.0, "5 (gradient correctness)");
    println!(
        "criterion 5 (gradient correctness): PASS — 20 instances x 2 objectives, worst relative error {worst:.2e} < 1e-4, {secs:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: fitting propensities on 100000 samples logged by the softmax
// policy recovers it to mean total-variation distance below 0.02 over 1000
// fresh contexts.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_propensity_fit_recovers_softmax_logging() {
    let start = Instant::now();
    let env = EnvConfig {
        logging_kind: LoggingKind::SoftmaxLinear,
        ..EnvConfig::default()
    };
    let d = generate_dataset(&env, 100_000, 106).expect("dataset");
    let (model, _) =
        fit_propensity_floored(&d, DEFAULT_FIT_EPOCHS, DEFAULT_FIT_LR, 106, DEFAULT_FLOOR)
            .expect("propensity fit");
    let mut rng = seeding::rng(106, tags::ORACLE);
    let n_probe = 1000;
    let mean_tv: f64 = (0..n_probe)
        .map(|_| {
            let x = sample_context(&env, &mut rng);
            predict_propensity(&model, &x).total_variation(&logging_propensities(&env, &x))
        })
        .sum::<f64>()
        / n_probe as f64;
    assert!(
        mean_tv < 0.02,
        "criterion 6 (propensity recovery): FAIL — mean total variation {mean_tv:.4} >= 0.02"
    );
    let secs = within_budget(start, 2.0, "6 (propensity recovery)");
    println!(
        "criterion 6 (propensity recovery): PASS — mean total variation {mean_tv:.4} < 0.02 over {n_probe} contexts, {secs:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: protocol fidelity and command determinism — the 70/30 split
// of a 309435-sample dataset yields exactly 216605/92830, balanced
// down-sampling equalizes action counts exactly, and every command of the
// binary rewrites byte-identical artifacts when rerun with the same seed.
// ---------------------------------------------------------------------------

fn tiltopt(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tiltopt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_expect_ok(dir: &Path, args: &[&str]) -> String {
    let out = tiltopt(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

#[test]
fn criterion_7_split_fidelity_and_command_determinism() {
    let start = Instant::now();

    // Reference split sizes at the published log size.
    let env = EnvConfig::default();
    let d = generate_dataset(&env, 309_435, 107).expect("dataset");
    let (train, test) = split_dataset(&d, 0.7, seeding::mix(107, tags::SPLIT)).expect("split");
    assert_eq!(
        (train.len(), test.len()),
        (216_605, 92_830),
        "criterion 7 (determinism): FAIL — 70/30 split of 309435 samples gave {}/{}",
        train.len(),
        test.len()
    );

    // Balanced down-sampling leaves exactly equal action counts.
    let ds = downsample_balanced(&test, seeding::mix(107, tags::DOWNSAMPLE)).expect("downsample");
    let counts = ds.action_counts();
    assert!(
        counts[0] > 0 && counts[0] == counts[1] && counts[1] == counts[2],
        "criterion 7 (determinism): FAIL — down-sampled action counts unequal: {counts:?}"
    );

    // Every command, rerun with identical inputs and seed, must rewrite
    // byte-identical artifacts. Two sibling directories, same relative paths.
    let tmp = tempfile::tempdir().expect("tempdir");
    let commands: &[&[&str]] = &[
        &["generate", "--n", "400", "--seed", "9", "--out", "data.csv"],
        &[
            "fit-propensity",
            "data.csv",
            "--seed",
            "9",
            "--out",
            "prop.csv",
        ],
        &[
            "train",
            "data.csv",
            "--estimator",
            "dm",
            "--epochs",
            "5",
            "--seed",
            "9",
            "--out",
            "loss_net.csv",
        ],
        &[
            "train",
            "data.csv",
            "--estimator",
            "ips",
            "--propensity",
            "prop.csv",
            "--epochs",
            "5",
            "--seed",
            "9",
            "--out",
            "policy_net.csv",
        ],
        &[
            "evaluate",
            "data.csv",
            "--splits",
            "1",
            "--seed",
            "9",
            "--out",
            "results.csv",
        ],
        &[
            "heatmap",
            "policy_net.csv",
            "--grid",
            "7",
            "--out",
            "heat.csv",
        ],
        &[
            "diagnose",
            "--estimator",
            "ips",
            "--n-list",
            "100,200",
            "--replicates",
            "30",
            "--oracle-draws",
            "20000",
            "--seed",
            "9",
            "--out",
            "diag.csv",
        ],
    ];
    let artifacts = [
        "data.csv",
        "data.csv.meta",
        "prop.csv",
        "loss_net.csv",
        "loss_net_history.csv",
        "policy_net.csv",
        "policy_net_history.csv",
        "results.csv",
        "heat.csv",
        "diag.csv",
    ];
    let mut stdouts: Vec<Vec<String>> = Vec::new();
    for sub in ["a", "b"] {
        let dir = tmp.path().join(sub);
        std::fs::create_dir(&dir).expect("subdir");
        stdouts.push(
            commands
                .iter()
                .map(|args| run_expect_ok(&dir, args))
                .collect(),
        );
    }
    for (i, args) in commands.iter().enumerate() {
        assert_eq!(
            stdouts[0][i], stdouts[1][i],
            "criterion 7 (determinism): FAIL — stdout of {args:?} differs between reruns"
        );
    }
    for name in artifacts {
        let a = std::fs::read(tmp.path().join("a").join(name)).expect(name);
        let b = std::fs::read(tmp.path().join("b").join(name)).expect(name);
        assert_eq!(
            a, b,
            "criterion 7 (determinism): FAIL — artifact {name} differs between reruns"
        );
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "criterion 7 (determinism): PASS — split 309435 -> 216605/92830, balanced counts {counts:?}, \
         {} commands and {} artifacts byte-identical across reruns, {secs:.1}s",
        commands.len(),
        artifacts.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: invariants under 10^4 random probes — policy outputs are
// valid probability distributions (sum within 1e-9 of one, entries
// non-negative), generated losses lie in [-1, 1], and logging propensities
// never fall below the smoothing floor.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_simplex_and_bound_invariants_hold_under_probes() {
    let start = Instant::now();
    const PROBES: usize = 10_000;
    let mut rng = seeding::rng(108, tags::ORACLE);

    // Random (parameters, context) probes of the policy network. Every
    // tenth probe draws a fresh network; every other network gets its
    // parameters inflated to push the softmax toward saturation.
    let mut net = PolicyNet::new(&[32, 32], 108).expect("policy net");
    for probe in 0..PROBES {
        if probe % 10 == 0 {
            net = PolicyNet::new(&[32, 32], rng.gen()).expect("policy net");
            if probe % 20 == 0 {
                let scale = rng.gen_range(1.0..25.0);
                for w in net.mlp_mut().params_mut() {
                    *w *= scale;
                }
            }
        }
        let x = Context::new(rng.gen(), rng.gen()).expect("context in range");
        let p = net.probabilities(&x).probs();
        assert!(
            p.iter().all(|v| *v >= 0.0),
            "criterion 8 (invariants): FAIL — negative probability {p:?} at probe {probe}"
        );
        let sum: f64 = p.iter().sum();
        assert!(
            (sum - 1.0).abs() < 1e-9,
            "criterion 8 (invariants): FAIL — probabilities sum to {sum} at probe {probe}"
        );
    }

    // Generated losses stay in [-1, 1] and recorded propensities stay at or
    // above the smoothing floor, under both logging policies and transition
    // noise well above the default.
    let mut loss_checks = 0usize;
    for (kind, seed) in [
        (LoggingKind::RuleBased, 81u64),
        (LoggingKind::SoftmaxLinear, 82),
    ] {
        let env = EnvConfig {
            logging_kind: kind,
            noise_std: 0.3,
            ..EnvConfig::default()
        };
        let d = generate_dataset(&env, 5000, seed).expect("dataset");
        for s in &d.samples {
            assert!(
                (-1.0..=1.0).contains(&s.loss),
                "criterion 8 (invariants): FAIL — generated loss {} outside [-1, 1]",
                s.loss
            );
            let lam = s.propensity.expect("generator records propensities");
            assert!(
                lam >= env.logging_smoothing - 1e-12,
                "criterion 8 (invariants): FAIL — recorded propensity {lam} below smoothing floor {}",
                env.logging_smoothing
            );
            loss_checks += 1;
        }
        // Full distributions at fresh contexts, not only the logged action.
        for _ in 0..1000 {
            let x = sample_context(&env, &mut rng);
            let probs = logging_propensities(&env, &x).probs();
            assert!(
                probs.iter().all(|v| *v >= env.logging_smoothing - 1e-12),
                "criterion 8 (invariants): FAIL — logging propensities {probs:?} dip below the floor"
            );
        }
    }

    let secs = within_budget(start, 1.0, "8 (invariants)");
    println!(
        "criterion 8 (invariants): PASS — {PROBES} policy probes on the simplex, {loss_checks} losses in \
         [-1, 1], 2000 propensity vectors above the floor, {secs:.1}s"
    );
}
