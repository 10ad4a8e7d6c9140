use racer_core::audit::{audit_grid, audit_model, Axis, StateGrid};
use racer_core::datagen::{generate, ScenarioKind, ScenarioSpec};
use racer_core::domain::{build_samples, split_dataset, Provenance, SplitRatios};
use racer_core::io::{load_trajectory, save_trajectory};
use racer_core::losses::RdcWeights;
use racer_core::neural::{load_checkpoint, save_checkpoint, NetConfig, RacerNet};
use racer_core::phys::{calibrate_ovrv, OvrvParams};
use racer_core::sim::{rollout, ConstantAccel, RolloutOptions};
use racer_core::train::{train_model, ModelKind, Normalizer, TrainConfig};
use racer_core::Error;

fn small_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        kind,
        weights: if kind == ModelKind::Racer { RdcWeights::default() } else { RdcWeights::ZERO },
        learning_rate: 5e-3,
        max_epochs: 4,
        batch_size: 32,
        net: NetConfig { seq_len: 4, lstm_layers: 1, lstm_hidden: 6, seq_head: 6, phy_hidden: vec![8], seed: 3, ..NetConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn trajectory_file_round_trip_is_exact() {
    let traj = generate(&ScenarioSpec { duration: 60.0, noise_std: 0.1, seed: 4, ..ScenarioSpec::new(ScenarioKind::Oscillatory) })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    save_trajectory(&traj, &path).unwrap();
    let back = load_trajectory(&path, Provenance::Generated).unwrap();
    assert_eq!(back.spacing(), traj.spacing());
    assert_eq!(back.follow_speed(), traj.follow_speed());
    assert_eq!(back.lead_speed(), traj.lead_speed());
}

#[test]
fn every_regime_calibrates_close_to_its_generator() {
    for kind in ScenarioKind::ALL {
        for params in [OvrvParams::MIN_GAP, OvrvParams::MAX_GAP] {
            let traj = generate(&ScenarioSpec { params, ..ScenarioSpec::new(kind) }).unwrap();
            let samples = build_samples(&traj, 1, traj.dt()).unwrap();
            let split = split_dataset(&samples, SplitRatios::default(), 0).unwrap();
            let cal = calibrate_ovrv(&split, OvrvParams::DEFAULT_INIT, 20_000).unwrap();
            assert!(cal.objective < 1e-4, "{kind} {params:?}: objective {}", cal.objective);
        }
    }
}

#[test]
fn trained_checkpoint_reloads_with_identical_predictions_and_audit() {
    let traj = generate(&ScenarioSpec { duration: 120.0, noise_std: 0.05, seed: 2, ..ScenarioSpec::new(ScenarioKind::Oscillatory) })
        .unwrap();
    let samples = build_samples(&traj, 4, traj.dt()).unwrap();
    let split = split_dataset(&samples, SplitRatios::default(), 2).unwrap();
    let out = train_model(&split, &small_config(ModelKind::Racer), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&out.net, dir.path()).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    for s in &split.test {
        assert_eq!(back.predict_sample(s).unwrap(), out.net.predict_sample(s).unwrap());
    }
    let a = audit_model(&out.net, &split.test, 0.0).unwrap();
    let b = audit_model(&back, &split.test, 0.0).unwrap();
    assert_eq!(a, b);

    let mut net = back.clone();
    let r = rollout(&mut net, &traj, RolloutOptions::default()).unwrap();
    assert_eq!(r.warmup, 3);
    assert_eq!(r.len(), traj.len());
}

#[test]
fn ovrv_form_network_is_compliant_on_a_dense_grid() {
    let traj = generate(&ScenarioSpec { duration: 60.0, ..ScenarioSpec::new(ScenarioKind::Dips) }).unwrap();
    let samples = build_samples(&traj, 2, traj.dt()).unwrap();
    let net = RacerNet::ovrv_form(
        NetConfig { seq_len: 2, ..NetConfig::default() },
        &OvrvParams::MIN_GAP,
        Normalizer::fit(&samples).unwrap(),
    )
    .unwrap();
    let grid = StateGrid {
        spacing: Axis { min: 2.0, max: 120.0, points: 7 },
        relative_speed: Axis { min: -8.0, max: 8.0, points: 5 },
        speed: Axis { min: 0.0, max: 35.0, points: 6 },
    };
    let report = audit_grid(&net, &grid, 2, 0.0).unwrap();
    assert_eq!(report.len(), 210);
    assert_eq!(report.total_violations(), 0);
}

#[test]
fn constant_braking_behind_a_standing_lead_crashes_and_voids_metrics() {
    let spec = ScenarioSpec {
        duration: 30.0,
        speed_low: 0.0,
        speed_high: 0.0,
        params: OvrvParams::new(0.1, 0.6, 1.0, 2.0),
        initial_spacing: Some(30.0),
        initial_speed: Some(10.0),
        ..ScenarioSpec::new(ScenarioKind::Oscillatory)
    };
    let traj = generate(&spec).unwrap();
    let r = rollout(&mut ConstantAccel(-1.0), &traj, RolloutOptions::default()).unwrap();
    let crash = r.crash.expect("crash");
    assert!(r.rmse.is_none());
    // The series stops at the last positive-spacing state.
    assert_eq!(r.len(), crash.step);
    assert!(r.spacing.iter().all(|&s| s > 0.0));
    let last = r.len() - 1;
    assert!(r.spacing[last] + (traj.lead_speed()[last] - r.speed[last]) * traj.dt() <= 0.0);
}

#[test]
fn configuration_errors_are_validation_errors() {
    let traj = generate(&ScenarioSpec { duration: 60.0, ..ScenarioSpec::new(ScenarioKind::Oscillatory) }).unwrap();
    let samples = build_samples(&traj, 4, traj.dt()).unwrap();
    let split = split_dataset(&samples, SplitRatios::default(), 0).unwrap();
    let bad = TrainConfig { batch_size: 0, ..small_config(ModelKind::Nn) };
    assert!(train_model(&split, &bad, None).unwrap_err().is_validation());
    let pinn = small_config(ModelKind::Pinn);
    assert!(train_model(&split, &pinn, None).unwrap_err().is_validation());
    let err = generate(&ScenarioSpec { duration: 0.05, ..ScenarioSpec::new(ScenarioKind::Oscillatory) }).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}
