//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rootopt::calibration::{
    build_sample_set, calibrate_shape, loss_gradient, newton_loss, CalibrationConfig, SampleOrigin, SpectralSample,
};
use rootopt::matrix::{polar_factor, svd};
use rootopt::optimizers::{Hyperparams, OptimizerConfig, OptimizerKind, Schedule};
use rootopt::orthogonalize::{ns_orthogonalize, orthogonalization_mse, relative_error, spectral_mse, ShapeKey};
use rootopt::robustify::{decompose, soft_threshold, ThresholdPolicy};
use rootopt::{CoefficientTable, DenseMatrix, NsCoefficients};
use rootopt_bench::{
    compare_optimizers, run_with_options, NamedConfig, NoiseInjector, RunOptions, SyntheticTask, TaskKind, TaskSpec,
};
use rootopt_cli::commands::bench_orth::sample_matrix;
use rootopt_oracles as oracle;
use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Outcome of one criterion: whether it held, and what was measured.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// 1

fn prox_oracle_equivalence() -> Verdict {
    let step = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = rng.random_range(-4.0..4.0);
        let eps = rng.random_range(0.0..2.0);
        let grid = oracle::grid_prox_minimizer(x, eps, -5.0, 5.0, step);
        worst = worst.max((grid - soft_threshold(x, eps)).abs());
    }
    verdict(
        worst <= 2.0 * step,
        format!("max |grid - soft_threshold| = {worst:.2e} over 1000 pairs (limit {:.0e})", 2.0 * step),
    )
}

// 2

fn clamp_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    for i in 0..100 {
        let (r, c) = (rng.random_range(1..=256), rng.random_range(1..=256));
        let m = DenseMatrix::random_gaussian(r, c, &mut rng).scale(rng.random_range(0.01..100.0));
        let policy = if i % 2 == 0 {
            ThresholdPolicy::Quantile(rng.random_range(0.5..1.0))
        } else {
            ThresholdPolicy::FixedEpsilon(rng.random_range(0.0..3.0))
        };
        let d = decompose(&m, &policy);
        let eps = d.epsilon_used;
        let exact = m
            .as_slice()
            .iter()
            .zip(d.base.as_slice())
            .all(|(x, b)| x.max(-eps).min(eps).to_bits() == b.to_bits());
        if !exact {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{failures}/100 matrices deviate from the bitwise clamp"))
}

// 3

fn spectral_action() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut triples = vec![NsCoefficients::MUON, NsCoefficients::CLASSIC];
    for _ in 0..5 {
        triples.push(
            NsCoefficients::new(rng.random_range(1.0..3.5), rng.random_range(-4.0..-0.5), rng.random_range(0.2..2.0), 5)
                .unwrap(),
        );
    }
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (r, c) = if i < 4 {
            [(128, 512), (512, 128), (128, 128), (1, 512)][i]
        } else {
            (rng.random_range(1..=128), rng.random_range(1..=512))
        };
        let (r, c) = if rng.random_bool(0.5) { (r, c) } else { (c, r) };
        let m = DenseMatrix::random_gaussian(r, c, &mut rng);
        let dec = svd(&m).unwrap();
        let norm = oracle::naive_frobenius(&oracle::to_rows(&m));
        for t in &triples {
            let want = oracle::apply_to_spectrum(&dec.u, &dec.singular_values, &dec.vt, |s| {
                oracle::scalar_compose(t.a, t.b, t.c, t.iterations, s / norm)
            });
            let got = ns_orthogonalize(&m, t).unwrap();
            worst = worst.max(relative_error(&got, &want).unwrap());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max relative Frobenius error {worst:.2e} over 50 matrices x 7 coefficient sets (limit 1e-6)"),
    )
}

// 4

fn table_ordering() -> Verdict {
    const SHAPES: [(usize, usize); 4] = [(256, 256), (256, 512), (256, 1024), (256, 2048)];
    const HELD_OUT: usize = 3;
    let cfg = CalibrationConfig {
        seed: 4,
        ..CalibrationConfig::default()
    };
    let mut fixed = Vec::new();
    let mut tuned = Vec::new();
    let mut lines = Vec::new();
    for &(r, c) in &SHAPES {
        let samples = build_sample_set(&[], ShapeKey::new(r, c), &cfg).unwrap();
        let coeffs = calibrate_shape(&samples, &cfg).unwrap().coefficients;
        let (mut f, mut t, mut fs, mut ts) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..HELD_OUT {
            // held-out draws, independent of the calibration samples
            let m = sample_matrix(r, c, i, 4);
            let exact = polar_factor(&m).unwrap();
            let a = ns_orthogonalize(&m, &NsCoefficients::MUON).unwrap();
            let b = ns_orthogonalize(&m, &coeffs).unwrap();
            f += orthogonalization_mse(&a, &exact).unwrap();
            t += orthogonalization_mse(&b, &exact).unwrap();
            fs += spectral_mse(&a, &exact).unwrap();
            ts += spectral_mse(&b, &exact).unwrap();
        }
        let n = HELD_OUT as f64;
        fixed.push(f / n);
        tuned.push(t / n);
        lines.push(format!(
            "{r}x{c}: fixed {:.3e} tuned {:.3e} ({:.1}x; per-sigma {:.4} -> {:.4})",
            f / n,
            t / n,
            f / t,
            fs / n,
            ts / n
        ));
    }
    let a = fixed[1..].iter().all(|&v| fixed[0] > v);
    let b = fixed.iter().zip(&tuned).all(|(f, t)| t < f);
    // aspect ratio >= 4: 256x1024 and 256x2048
    let c = (2..4).all(|i| fixed[i] / tuned[i] >= 5.0);
    verdict(
        a && b && c,
        format!("(a) {} (b) {} (c) {}; {}", ok(a), ok(b), ok(c), lines.join("; ")),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

// 5

fn calibration_contracts() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = CalibrationConfig::default();
    let mut monotone_fail = 0;
    let mut subset_fail = 0;
    for _ in 0..20 {
        let r = rng.random_range(2..40);
        let c = rng.random_range(2..40);
        let full: Vec<SpectralSample> = (0..rng.random_range(2..8))
            .map(|_| {
                let m = DenseMatrix::random_gaussian(r, c, &mut rng);
                SpectralSample::from_matrix(&m, SampleOrigin::Synthetic).unwrap()
            })
            .collect();
        let mut sub: Vec<SpectralSample> = full.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        if sub.is_empty() {
            sub.push(full[0].clone());
        }
        let on_full = calibrate_shape(&full, &cfg).unwrap();
        if !(on_full.final_loss <= newton_loss(&cfg.init, &full).unwrap()
            && on_full.final_loss == newton_loss(&on_full.coefficients, &full).unwrap())
        {
            monotone_fail += 1;
        }
        let sub_cfg = CalibrationConfig {
            init: on_full.coefficients,
            ..cfg.clone()
        };
        let on_sub = calibrate_shape(&sub, &sub_cfg).unwrap();
        if newton_loss(&on_sub.coefficients, &sub).unwrap() > newton_loss(&on_full.coefficients, &sub).unwrap() {
            subset_fail += 1;
        }
    }
    verdict(
        monotone_fail == 0 && subset_fail == 0,
        format!("20 pairs: {monotone_fail} monotone-improvement violations, {subset_fail} subset-dominance violations"),
    )
}

// 6

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut probes = 0;
    let mut worst: f64 = 0.0;
    while probes < 100 {
        let k = rng.random_range(1..8);
        let samples: Vec<SpectralSample> = (0..rng.random_range(1..4))
            .map(|_| {
                let m = DenseMatrix::random_gaussian(k + rng.random_range(0..4), k, &mut rng);
                SpectralSample::from_matrix(&m, SampleOrigin::Synthetic).unwrap()
            })
            .collect();
        let t = rng.random_range(1..6);
        let coeffs = NsCoefficients::new(
            rng.random_range(1.0..3.5),
            rng.random_range(-4.5..-0.5),
            rng.random_range(0.2..2.2),
            t,
        )
        .unwrap();
        let Ok(analytic) = loss_gradient(&coeffs, &samples) else { continue };
        let f = |x: &[f64]| newton_loss(&NsCoefficients { a: x[0], b: x[1], c: x[2], iterations: t }, &samples).unwrap_or(f64::NAN);
        let numeric = oracle::central_difference(f, &coeffs.as_array(), 1e-6);
        if numeric.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let scale = numeric.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / scale);
        }
        probes += 1;
    }
    let mut task_worst: f64 = 0.0;
    let mut task_fail = Vec::new();
    for kind in TaskKind::ALL {
        for seed in 0..3 {
            match SyntheticTask::new(TaskSpec::default_for(kind, seed)) {
                Ok(task) => task_worst = task_worst.max(task.gradient_check().max_rel_error),
                Err(e) => task_fail.push(format!("{} seed {seed}: {e}", kind.name())),
            }
        }
    }
    verdict(
        worst <= 1e-4 && task_fail.is_empty(),
        format!(
            "calibration loss: max relative error {worst:.2e} on 100 probes; tasks: {} of 12 constructions failed, max relative error {task_worst:.2e} (limit 1e-4){}",
            task_fail.len(),
            if task_fail.is_empty() { String::new() } else { format!(" [{}]", task_fail.join("; ")) }
        ),
    )
}

// 7

fn reduction_to_muon() -> Verdict {
    let task = SyntheticTask::new(TaskSpec::default_for(TaskKind::MatrixRegression, 7)).unwrap();
    let hyper = Hyperparams {
        threshold: ThresholdPolicy::Quantile(1.0),
        schedule: Schedule::cosine(50, 500),
        ..Hyperparams::default()
    };
    let muon = OptimizerConfig::new(OptimizerKind::Muon, hyper.clone());
    let root = OptimizerConfig::new(OptimizerKind::Root, hyper)
        .with_table(Arc::new(CoefficientTable::new(NsCoefficients::MUON)));
    let mut mismatches = Vec::new();
    for (label, noise) in [("clean", NoiseInjector::disabled()), ("spiked", NoiseInjector::spikes(0.01, 100.0, 7))] {
        let a = run_with_options(&task, &muon, &noise, &RunOptions::steps(500)).unwrap();
        let b = run_with_options(&task, &root, &noise, &RunOptions::steps(500)).unwrap();
        let same_params = a.params.len() == b.params.len()
            && a.params.iter().zip(&b.params).all(|(x, y)| {
                x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits())
            });
        let same_losses = a.log.records().len() == 500
            && a.log.records().iter().zip(b.log.records()).all(|(x, y)| {
                x.loss.to_bits() == y.loss.to_bits() && x.grad_norm.to_bits() == y.grad_norm.to_bits()
            });
        if !(same_params && same_losses) {
            mismatches.push(label);
        }
    }
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "500-step trajectories identical bit for bit, with and without spikes".to_string()
        } else {
            format!("trajectories differ: {}", mismatches.join(", "))
        },
    )
}

// 8 and 9

const STEPS: u64 = 2000;
const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn optimizer(kind: OptimizerKind, p: f64) -> OptimizerConfig {
    OptimizerConfig::new(
        kind,
        Hyperparams {
            lr: 0.02,
            threshold: ThresholdPolicy::Quantile(p),
            schedule: Schedule::cosine(100, STEPS),
            ..Hyperparams::default()
        },
    )
}

fn robustness_ordering() -> Verdict {
    let configs = [
        NamedConfig::new("muon", optimizer(OptimizerKind::Muon, 0.9)),
        NamedConfig::new("root", optimizer(OptimizerKind::Root, 0.9)),
    ];
    let spikes = NoiseInjector::spikes(0.01, 100.0, 0);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [TaskKind::MatrixRegression, TaskKind::NonConvexFactorization] {
        let spec = TaskSpec::default_for(kind, 0);
        let noisy = compare_optimizers(&spec, &configs, &spikes, &SEEDS, STEPS).unwrap();
        let wins = SEEDS
            .iter()
            .filter(|&&s| noisy.final_loss("root", s).unwrap() < noisy.final_loss("muon", s).unwrap())
            .count();
        let clean = compare_optimizers(&spec, &configs, &NoiseInjector::disabled(), &SEEDS, STEPS).unwrap();
        let gap = SEEDS
            .iter()
            .map(|&s| {
                let (m, r) = (clean.final_loss("muon", s).unwrap(), clean.final_loss("root", s).unwrap());
                (r - m).abs() / m
            })
            .fold(0.0, f64::max);
        pass &= wins >= 8 && gap <= 0.05;
        parts.push(format!(
            "{}: ROOT wins {wins}/10 under spikes (mean {:.5} vs {:.5}), clean max gap {:.3}%",
            kind.name(),
            noisy.summary("root").unwrap().mean_final_loss,
            noisy.summary("muon").unwrap().mean_final_loss,
            100.0 * gap
        ));
    }
    verdict(pass, parts.join("; "))
}

fn quantile_ablation() -> Verdict {
    let ps = [0.85, 0.90, 0.95, 0.99];
    let configs: Vec<NamedConfig> = ps
        .iter()
        .map(|&p| NamedConfig::new(format!("p{p}"), optimizer(OptimizerKind::Root, p)))
        .collect();
    let spec = TaskSpec::default_for(TaskKind::MatrixRegression, 0);
    let cmp = compare_optimizers(&spec, &configs, &NoiseInjector::spikes(0.01, 100.0, 0), &SEEDS, STEPS).unwrap();
    let mean = |p: f64| cmp.summary(&format!("p{p}")).unwrap().mean_final_loss;
    let best_low = mean(0.85).min(mean(0.90));
    let means: Vec<String> = ps.iter().map(|&p| format!("p={p}: {:.5}", mean(p))).collect();
    verdict(
        mean(0.99) > best_low,
        format!("mean final loss {}; p=0.99 vs best of 0.85/0.90: {:.5} vs {best_low:.5}", means.join(", "), mean(0.99)),
    )
}

// 10

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if root.is_dir() {
        walk(root, root, &mut out);
    }
    out
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let configs = [
        ("calibrate", "shapes = [[32, 32], [32, 128]]\nsteps = 500\n"),
        ("bench-orth", "shapes = [[32, 32], [16, 128]]\nsamples = 3\ncalibration_steps = 300\n"),
        ("grad-stats", "steps = 60\nevery = 10\n"),
        (
            "train",
            "steps = 120\nplot = true\n[task]\nkind = \"tiny-attention-lm\"\n[capture]\nstride = 40\n",
        ),
        (
            "compare",
            "steps = 100\nruns = 2\n[task]\nkind = \"tiny-mlp-classification\"\n[[configs]]\nkind = \"muon\"\n[[configs]]\nkind = \"root\"\n[[configs]]\nkind = \"adamw\"\nlr = 0.003\n[[configs]]\nkind = \"sgd-momentum\"\nlr = 0.05\n",
        ),
    ];
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_rootopt")).args(args).current_dir(p).output().unwrap();
        (out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let mut problems = Vec::new();
    let mut checked = 0;
    for (cmd, text) in configs {
        let cfg = format!("{cmd}.toml");
        fs::write(p.join(&cfg), text).unwrap();
        for rep in ["a", "b"] {
            let out = format!("{cmd}-{rep}");
            let (code, err) = run(&[cmd, "--config", &cfg, "--seed", "10", "--out", &out]);
            if code != Some(0) {
                problems.push(format!("{cmd} exited {code:?}: {}", err.trim()));
            }
        }
        // the echoed report config names its input, so both reports read run a
        for rep in ["a", "b"] {
            let out = format!("report-{cmd}-{rep}");
            let input = format!("{cmd}-a");
            let (code, err) = run(&["report", "--input", &input, "--plot", "--out", &out]);
            if code != Some(0) {
                problems.push(format!("report on {cmd} exited {code:?}: {}", err.trim()));
            }
        }
        for prefix in [cmd.to_string(), format!("report-{cmd}")] {
            let a = files_under(&p.join(format!("{prefix}-a")));
            let b = files_under(&p.join(format!("{prefix}-b")));
            if a.is_empty() || a != b {
                problems.push(format!("{prefix} artifacts differ between reruns"));
            }
            checked += a.len();
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("6 subcommands rerun with seed 10: {checked} artifact files byte-identical")
        } else {
            problems.join("; ")
        },
    )
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("prox-oracle equivalence", prox_oracle_equivalence, Duration::from_secs(10)),
        ("clamp identity", clamp_identity, Duration::from_secs(5)),
        ("spectral-action equivalence", spectral_action, Duration::from_secs(60)),
        ("orthogonalization error ordering", table_ordering, Duration::from_secs(600)),
        ("calibration contracts", calibration_contracts, Duration::from_secs(300)),
        ("gradient correctness", gradient_correctness, Duration::from_secs(120)),
        ("ROOT reduces to Muon", reduction_to_muon, Duration::from_secs(60)),
        ("robustness ordering", robustness_ordering, Duration::from_secs(900)),
        ("quantile ablation", quantile_ablation, Duration::from_secs(1800)),
        ("CLI determinism", cli_determinism, Duration::from_secs(300)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(v) => (v.pass, v.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_budget = elapsed <= *budget;
        let pass = pass && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s of {}s budget{}]",
            if pass { "PASS" } else { "FAIL" },
            id,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_budget { "" } else { ", over budget" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
