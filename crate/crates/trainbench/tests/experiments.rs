use rootopt::optimizers::{Hyperparams, OptimizerConfig, OptimizerKind};
use rootopt::robustify::ThresholdPolicy;
use rootopt_bench::{
    compare_optimizers, run_experiment, run_with_options, Comparison, NamedConfig, NoiseInjector, Precision,
    RunOptions, SyntheticTask, TaskKind, TaskShape, TaskSpec,
};
use rootopt_oracles::{symmetric_eigen, to_rows};

fn regression(samples: usize, inputs: usize, outputs: usize, seed: u64) -> SyntheticTask {
    SyntheticTask::new(TaskSpec::new(
        TaskShape::MatrixRegression {
            samples,
            inputs,
            outputs,
            noise_std: 0.1,
        },
        seed,
    ))
    .unwrap()
}

fn config(kind: OptimizerKind, lr: f64) -> OptimizerConfig {
    OptimizerConfig::new(
        kind,
        Hyperparams {
            lr,
            ..Hyperparams::default()
        },
    )
}

#[test]
fn sgd_below_inverse_lipschitz_decreases_strictly() {
    let task = regression(64, 12, 5, 3);
    let (a, _) = task.regression_data().unwrap();
    let hessian = a.gram().scale(1.0 / a.rows() as f64);
    let (eigs, _) = symmetric_eigen(&to_rows(&hessian));
    let l = eigs.iter().cloned().fold(0.0, f64::max);
    let cfg = OptimizerConfig::new(
        OptimizerKind::SgdMomentum,
        Hyperparams {
            lr: 0.9 / l,
            momentum: 0.0,
            ..Hyperparams::default()
        },
    );
    let log = run_experiment(&task, &cfg, &NoiseInjector::disabled(), 25).unwrap();
    let losses: Vec<f64> = log.records().iter().map(|r| r.loss).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{} -> {}", w[0], w[1]);
    }
    assert!(log.final_loss().unwrap() < *losses.last().unwrap());
}

#[test]
fn zero_probability_injector_matches_disabled_injection() {
    let task = regression(48, 10, 6, 1);
    let silent = NoiseInjector::spikes(0.0, 100.0, 77);
    for kind in [OptimizerKind::Muon, OptimizerKind::Root, OptimizerKind::AdamW] {
        let cfg = config(kind, 0.01);
        let a = run_experiment(&task, &cfg, &silent, 60).unwrap();
        let b = run_experiment(&task, &cfg, &NoiseInjector::disabled(), 60).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a, b);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    for kind in TaskKind::ALL {
        let task = SyntheticTask::new(TaskSpec::default_for(kind, 2)).unwrap();
        let noise = NoiseInjector::spikes(0.01, 100.0, 4);
        let cfg = config(OptimizerKind::Root, 0.02);
        let a = run_with_options(&task, &cfg, &noise, &RunOptions::steps(25)).unwrap();
        let b = run_with_options(&task, &cfg, &noise, &RunOptions::steps(25)).unwrap();
        assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
        assert_eq!(a.params, b.params);
    }
}

#[test]
fn injection_only_touches_gradients() {
    // few entries, so some steps carry no spike at all
    let task = regression(16, 3, 2, 8);
    let noise = NoiseInjector::spikes(0.08, 100.0, 2);
    let cfg = config(OptimizerKind::Root, 0.02);
    let steps = 40;
    let full = run_experiment(&task, &cfg, &noise, steps).unwrap();
    let mut clean_steps = 0;
    for rec in full.records() {
        // parameters before step k are the output of the first k - 1 steps
        let params = if rec.step == 1 {
            task.initial_params()
        } else {
            run_with_options(&task, &cfg, &noise, &RunOptions::steps(rec.step - 1)).unwrap().params
        };
        let (loss, grads) = task.loss_and_grad(&params);
        assert_eq!(loss.to_bits(), rec.loss.to_bits());
        if rec.spiked == 0 {
            clean_steps += 1;
            let norm = grads.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();
            assert_eq!(norm.to_bits(), rec.grad_norm.to_bits(), "step {}", rec.step);
        }
    }
    assert!(clean_steps > 0 && clean_steps < steps as usize, "{clean_steps}");
    let summary = full.summary().unwrap();
    assert_eq!(summary.spike_steps.len(), steps as usize - clean_steps);
}

#[test]
fn divergence_is_recorded_not_raised() {
    let task = regression(32, 8, 4, 0);
    let cfg = OptimizerConfig::new(
        OptimizerKind::SgdMomentum,
        Hyperparams {
            lr: 50.0,
            ..Hyperparams::default()
        },
    );
    let log = run_experiment(&task, &cfg, &NoiseInjector::disabled(), 500).unwrap();
    let s = log.summary().unwrap();
    assert!(s.diverged);
    assert!(s.diverged_at.unwrap() < 500);
    assert!(s.steps_run < 500);
}

#[test]
fn f32_mode_keeps_parameters_representable() {
    let task = regression(32, 8, 4, 0);
    let options = RunOptions {
        steps: 20,
        precision: Precision::F32,
    };
    let run = run_with_options(&task, &config(OptimizerKind::Muon, 0.02), &NoiseInjector::disabled(), &options).unwrap();
    for p in &run.params {
        assert!(p.as_slice().iter().all(|v| (*v as f32) as f64 == *v));
    }
    let wide = run_with_options(&task, &config(OptimizerKind::Muon, 0.02), &NoiseInjector::disabled(), &RunOptions::steps(20)).unwrap();
    assert_ne!(run.params, wide.params);
}

#[test]
fn zero_steps_is_an_error() {
    let task = regression(8, 2, 2, 0);
    assert!(run_experiment(&task, &config(OptimizerKind::Muon, 0.02), &NoiseInjector::disabled(), 0).is_err());
}

#[test]
fn single_config_wins_every_seed() {
    let spec = TaskSpec::default_for(TaskKind::NonConvexFactorization, 0);
    let configs = [NamedConfig::new("muon", config(OptimizerKind::Muon, 0.02))];
    let cmp = compare_optimizers(&spec, &configs, &NoiseInjector::disabled(), &[1, 2, 3], 20).unwrap();
    assert_eq!(cmp.rows.len(), 3);
    assert_eq!(cmp.wins("muon"), Some(3));
}

#[test]
fn two_configs_one_seed_gives_two_rows_that_round_trip() {
    let spec = TaskSpec::default_for(TaskKind::MatrixRegression, 0);
    let configs = [
        NamedConfig::new("muon", config(OptimizerKind::Muon, 0.02)),
        NamedConfig::new("root", config(OptimizerKind::Root, 0.02)),
    ];
    let cmp = compare_optimizers(&spec, &configs, &NoiseInjector::spikes(0.01, 100.0, 0), &[5], 30).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    let text = cmp.to_csv_string();
    assert!(text.starts_with("task,optimizer,seed,final_loss,diverged\n"));
    let rows = Comparison::read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows, cmp.rows);
    assert_eq!(Comparison::from_rows(rows), cmp);
    let total: usize = cmp.summaries.iter().map(|s| s.wins).sum();
    assert_eq!(total, 1);
}

#[test]
fn diverging_config_does_not_abort_the_sweep() {
    let spec = TaskSpec::default_for(TaskKind::MatrixRegression, 0);
    let blowup = OptimizerConfig::new(
        OptimizerKind::SgdMomentum,
        Hyperparams {
            lr: 50.0,
            ..Hyperparams::default()
        },
    );
    let configs = [
        NamedConfig::new("sgd-blowup", blowup),
        NamedConfig::new("muon", config(OptimizerKind::Muon, 0.02)),
    ];
    let cmp = compare_optimizers(&spec, &configs, &NoiseInjector::disabled(), &[0, 1], 100).unwrap();
    let s = cmp.summary("sgd-blowup").unwrap();
    assert_eq!(s.diverged_runs, 2);
    assert_eq!(s.wins, 0);
    assert_eq!(cmp.wins("muon"), Some(2));
}

#[test]
fn sweep_rejects_empty_inputs() {
    let spec = TaskSpec::default_for(TaskKind::MatrixRegression, 0);
    let configs = [NamedConfig::new("muon", config(OptimizerKind::Muon, 0.02))];
    assert!(compare_optimizers(&spec, &[], &NoiseInjector::disabled(), &[0], 5).is_err());
    assert!(compare_optimizers(&spec, &configs, &NoiseInjector::disabled(), &[], 5).is_err());
}

#[test]
fn root_reports_threshold_diagnostics() {
    let task = regression(32, 8, 4, 0);
    let mut cfg = config(OptimizerKind::Root, 0.02);
    cfg.hyper.threshold = ThresholdPolicy::Quantile(0.75);
    let log = run_experiment(&task, &cfg, &NoiseInjector::disabled(), 10).unwrap();
    for r in log.records() {
        assert!(r.epsilon.unwrap() > 0.0);
        let f = r.outlier_frac.unwrap();
        assert!(f > 0.0 && f <= 0.25 + 1.0 / 32.0);
    }
    let muon = run_experiment(&task, &config(OptimizerKind::Muon, 0.02), &NoiseInjector::disabled(), 10).unwrap();
    assert!(muon.records().iter().all(|r| r.epsilon.is_none()));
}
