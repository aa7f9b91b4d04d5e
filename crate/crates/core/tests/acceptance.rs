//! Acceptance suite. Each test prints one PASS/FAIL line with the measured
//! numbers, then asserts. Run with `cargo test --test acceptance -- --nocapture
//! --test-threads=1` to see the lines in order.

mod common;

use std::process::Command;
use std::time::Instant;

use common::{q_func, random_alphabet, rel, rng};
use iolama::mimo::{monte_carlo_ser, verify_decoupling, DetectorConfig};
use iolama::state_evolution::{fixed_points, run_se, SeConfig};
use iolama::thresholds::{Regime, ThresholdAnalyzer, ThresholdConfig};
use iolama::{Builtin, Constellation, MseModel};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("{} criterion {id} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn analyzer(b: Builtin) -> ThresholdAnalyzer {
    ThresholdAnalyzer::new(MseModel::new(Constellation::builtin(b))).unwrap()
}

fn qpsk() -> Constellation {
    Constellation::builtin(Builtin::Qpsk)
}

// Published reference values: (β_min, N0_min(β_min), β_max, N0_max(β_max)).
const REFERENCE: [(Builtin, f64, f64, f64, f64); 6] = [
    (Builtin::Bpsk, 2.9505, 2.999e-1, 4.1709, 2.432e-1),
    (Builtin::Qpsk, 1.4752, 1.499e-1, 2.0855, 1.216e-1),
    (Builtin::Qam16, 0.9830, 3.000e-2, 1.3629, 2.454e-2),
    (Builtin::Qam64, 0.8424, 7.144e-3, 1.1573, 5.868e-3),
    (Builtin::Psk8, 1.4576, 4.440e-2, 1.8038, 3.826e-2),
    (Builtin::Psk16, 1.4728, 1.143e-2, 1.8005, 9.953e-3),
];

#[test]
fn criterion_1_threshold_table() {
    let start = Instant::now();
    let mut worst_beta: f64 = 0.0;
    let mut worst_n0: f64 = 0.0;
    let mut lines = Vec::new();
    for (b, beta_min, n0_min, beta_max, n0_max) in REFERENCE {
        let r = analyzer(b).report(None).unwrap();
        let errs = [
            rel(r.beta_min, beta_min),
            rel(r.n0_at_beta_min, n0_min),
            rel(r.beta_max, beta_max),
            rel(r.n0_max_at_beta_max, n0_max),
        ];
        worst_beta = worst_beta.max(errs[0]).max(errs[2]);
        worst_n0 = worst_n0.max(errs[1]).max(errs[3]);
        lines.push(format!(
            "{b}: beta_min {:.4} n0_min {:.4e} beta_max {:.4} n0_max {:.4e}",
            r.beta_min, r.n0_at_beta_min, r.beta_max, r.n0_max_at_beta_max
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    for l in &lines {
        println!("    {l}");
    }
    let ok = worst_beta <= 5e-3 && worst_n0 <= 1e-2 && secs < 300.0;
    verdict(
        1,
        "threshold table",
        ok,
        &format!("worst beta rel err {worst_beta:.2e} (tol 5e-3), worst N0 rel err {worst_n0:.2e} (tol 1e-2), {secs:.1}s"),
    );
}

#[test]
fn criterion_2_mse_bounds() {
    let grid = iolama::search::log_grid(1e-6, 1e6, 200).unwrap();
    let mut failures = Vec::new();
    for b in Builtin::ALL {
        let model = MseModel::new(Constellation::builtin(b));
        let var = model.constellation().variance();
        for &s in &grid {
            let psi = model.psi(s).unwrap();
            let bound = var * s / (var + s);
            if !(psi >= 0.0 && psi < s && psi <= bound + 1e-9) {
                failures.push(format!("{b} at {s:e}: psi {psi:e}, bound {bound:e}"));
            }
        }
        let tail = model.psi(1e6).unwrap();
        if rel(tail, var) > 0.01 {
            failures.push(format!("{b}: psi(1e6) = {tail} vs Var {var}"));
        }
    }
    verdict(
        2,
        "mse bounds",
        failures.is_empty(),
        &format!("6 alphabets x 200 points, {} violations {:?}", failures.len(), failures.first()),
    );
}

#[test]
fn criterion_3_mrt_below_ert() {
    let mut violations = Vec::new();
    for b in Builtin::ALL {
        let a = analyzer(b);
        if a.beta_min() > a.beta_max() {
            violations.push(format!("{b}: {} > {}", a.beta_min(), a.beta_max()));
        }
    }
    let mut r = rng(3);
    let config = ThresholdConfig { grid_points: 600, ..Default::default() };
    for k in 0..20 {
        let c = random_alphabet(&mut r, 6);
        let a = ThresholdAnalyzer::with_config(MseModel::with_order(c, 48).unwrap(), config).unwrap();
        if a.beta_min() > a.beta_max() * (1.0 + 1e-9) {
            violations.push(format!("random #{k}: {} > {}", a.beta_min(), a.beta_max()));
        }
    }
    verdict(
        3,
        "beta_min <= beta_max",
        violations.is_empty(),
        &format!("6 builtins + 20 random alphabets, violations {violations:?}"),
    );
}

fn zero_error_batch(mt: usize, beta: f64, seed: u64) -> (usize, usize) {
    let mr = (mt as f64 / beta).round() as usize;
    let est = monte_carlo_ser(&qpsk(), mt, mr, 1e-6, 100, &DetectorConfig::default(), seed).unwrap();
    (mr, est.errors)
}

#[test]
fn criterion_4_noiseless_recovery() {
    // Large-system statement checked at finite size; β = 1.9 may retry at
    // MT = 512 once.
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [1.0, 1.5, 1.9] {
        let (mr, errors) = zero_error_batch(128, beta, 4);
        parts.push(format!("beta {beta} (MT 128, MR {mr}): {errors} errors"));
        if errors > 0 {
            if beta == 1.9 {
                let (mr, retry) = zero_error_batch(512, beta, 4);
                parts.push(format!("retry MT 512, MR {mr}: {retry} errors"));
                ok &= retry == 0;
            } else {
                ok = false;
            }
        }
    }
    verdict(4, "noiseless recovery below ERT", ok, &parts.join("; "));
}

#[test]
fn criterion_5_decoupling() {
    let start = Instant::now();
    let model = MseModel::new(qpsk());
    let rep = verify_decoupling(&model, 256, 512, 0.05, 100, 10, 5).unwrap();
    let gaps: Vec<f64> = rep.per_iter_empirical.iter().zip(&rep.per_iter_se).map(|(e, s)| e / s - 1.0).collect();
    let worst = gaps.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let kurt_ok = (2.7..=3.3).contains(&rep.kurtosis_re) && (2.7..=3.3).contains(&rep.kurtosis_im);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "decoupling",
        worst <= 0.10 && kurt_ok && secs < 120.0,
        &format!(
            "worst per-iteration gap {worst:.3} (tol 0.10), kurtosis re {:.3} im {:.3} (range [2.7, 3.3]), {secs:.1}s",
            rep.kurtosis_re, rep.kurtosis_im
        ),
    );
}

#[test]
fn criterion_6_ser_matches_awgn() {
    let q = qpsk();
    let model = MseModel::new(q.clone());
    let trials = 100_000usize.div_ceil(256);
    let half_gap = std::f64::consts::FRAC_1_SQRT_2;
    let mut ok = true;
    let mut parts = Vec::new();
    for n0 in [0.05, 0.1, 0.2] {
        let s2 = run_se(&model, 1.0, n0, SeConfig { max_iter: 10_000, rel_tol: 1e-13 }).unwrap().final_sigma_sq;
        // per-axis noise variance s2/2, decision boundary at distance 1/√2
        let p = q_func(half_gap / (s2 / 2.0).sqrt());
        let oracle = 1.0 - (1.0 - p) * (1.0 - p);
        let est = monte_carlo_ser(&q, 256, 256, n0, trials, &DetectorConfig::default(), 6).unwrap();
        // with very few errors the empirical spread underestimates; use the
        // binomial error under the oracle as a floor
        let se = est.std_err.max((oracle * (1.0 - oracle) / est.symbols as f64).sqrt());
        let z = (est.ser - oracle) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("N0 {n0}: SER {:.5} oracle {oracle:.5} ({:.2} SE)", est.ser, z));
    }
    verdict(6, "SER vs decoupled AWGN", ok, &format!("{} symbols/point; {}", trials * 256, parts.join("; ")));
}

#[test]
fn criterion_7_regimes() {
    let a = analyzer(Builtin::Qpsk);
    let model = a.model().clone();
    let mid_beta = 0.5 * (a.beta_min() + a.beta_max());
    let crit = a.critical_noise(mid_beta).unwrap();
    let (lo, hi) = (crit.n0_min.unwrap(), crit.n0_max.unwrap());
    let n0s = [0.5 * lo, 0.5 * (lo + hi), 2.0 * hi];
    let count = |beta: f64, n0: f64| fixed_points(&model, beta, n0).unwrap().count();

    let mut problems = Vec::new();
    let counts: Vec<usize> = n0s.iter().map(|&n| count(mid_beta, n)).collect();
    if !(counts[0] == 1 && counts[1] >= 2 && counts[2] == 1) {
        problems.push(format!("fixed-point counts at mid beta {counts:?}"));
    }

    use Regime::*;
    let betas = [1.0, mid_beta, 2.2];
    let expected = [
        [AlwaysOptimal, AlwaysOptimal, AlwaysOptimal],
        [OptimalLowNoise, PossiblySuboptimal, OptimalHighNoise],
        [Suboptimal, Suboptimal, OptimalHighNoise],
    ];
    for (i, &beta) in betas.iter().enumerate() {
        for (j, &n0) in n0s.iter().enumerate() {
            let got = a.classify(beta, n0).unwrap();
            if got != expected[i][j] {
                problems.push(format!("({beta:.4}, {n0:.4}): {got} != {}", expected[i][j]));
            }
            // optimal labels go with a unique fixed point, the others with several
            let unique = count(beta, n0) == 1;
            if unique != got.is_optimal() {
                problems.push(format!("({beta:.4}, {n0:.4}): {got} but unique = {unique}"));
            }
        }
    }
    verdict(
        7,
        "regimes and fixed points",
        problems.is_empty(),
        &format!("beta* {mid_beta:.4}, N0 grid {n0s:.4?}, counts {counts:?}, problems {problems:?}"),
    );
}

#[test]
fn criterion_8_scaling() {
    let mut worst_beta: f64 = 0.0;
    let mut worst_n0: f64 = 0.0;
    for b in Builtin::ALL {
        let c = Constellation::builtin(b);
        let base = ThresholdAnalyzer::new(MseModel::new(c.clone())).unwrap().report(None).unwrap();
        let big = ThresholdAnalyzer::new(MseModel::new(c.scale(2.0).unwrap())).unwrap().report(None).unwrap();
        worst_beta = worst_beta.max(rel(big.beta_min, base.beta_min)).max(rel(big.beta_max, base.beta_max));
        worst_n0 = worst_n0
            .max(rel(big.n0_at_beta_min, 4.0 * base.n0_at_beta_min))
            .max(rel(big.n0_max_at_beta_max, 4.0 * base.n0_max_at_beta_max));
    }
    verdict(
        8,
        "scaling invariance",
        worst_beta <= 1e-6 && worst_n0 <= 1e-4,
        &format!("worst beta rel diff {worst_beta:.2e} (tol 1e-6), worst N0 ratio err {worst_n0:.2e} (tol 1e-4)"),
    );
}

#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["thresholds", "qpsk", "8psk", "--format", "json"],
        vec!["gcurve", "--constellation", "qpsk", "--beta", "1.78", "--n0", "0,0.11", "--grid-points", "200"],
        vec!["se-trace", "--constellation", "16qam", "--beta", "0.9", "--n0", "0.02"],
        vec!["fixed-points", "--constellation", "qpsk", "--beta", "1.78", "--n0", "0.05,0.11,0.3"],
        vec!["simulate", "--constellation", "qpsk", "--mt", "64", "--mr", "64", "--n0", "0.1,0.2", "--trials", "20", "--seed", "9"],
        vec!["simulate", "--constellation", "16qam", "--mt", "32", "--mr", "48", "--snr-db", "10,15", "--trials", "10", "--seed", "9", "--format", "json"],
        vec!["regime", "--constellation", "qpsk", "--beta", "1.78", "--n0", "0.11", "--format", "text"],
        vec!["decouple", "--constellation", "qpsk", "--mt", "64", "--mr", "128", "--n0", "0.05", "--trials", "10", "--iter-probe", "5", "--seed", "9"],
    ];
    let mut mismatched = Vec::new();
    for args in &runs {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let file = dir.path().join(format!("out{k}"));
            let out = Command::new(env!("CARGO_BIN_EXE_iolama")).args(args).output().unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            let to_file = Command::new(env!("CARGO_BIN_EXE_iolama"))
                .args(args)
                .arg("--out")
                .arg(&file)
                .output()
                .unwrap();
            assert!(to_file.status.success());
            let mut body = std::fs::read(&file).unwrap();
            // the echoed config names the output path; drop that difference
            let name = file.display().to_string();
            body = String::from_utf8(body).unwrap().replace(&name, "OUT").into_bytes();
            outputs.push((out.stdout, body));
        }
        if outputs[0] != outputs[1] {
            mismatched.push(args[0]);
        }
    }
    verdict(
        9,
        "CLI determinism",
        mismatched.is_empty(),
        &format!("{} invocations x 2 (stdout and --out), mismatches {mismatched:?}", runs.len()),
    );
}
