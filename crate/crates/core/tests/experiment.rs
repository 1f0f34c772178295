use vaicam::control::ControllerKind;
use vaicam::experiment::{
    experiment_1, prediction_rmse, read_csv, reproduce_to_dir, stage_collect, stage_eval_control,
    stage_eval_ma, stage_train, tracking_rmse, ExperimentConfig, Lab, Layout,
};

/// Full protocol shape at a fraction of the cost.
fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.network.epochs = 2;
    cfg.network.neurons_per_layer = 16;
    cfg.network.n_estimators = 2;
    cfg.data.static_train = 3;
    cfg.data.dynamic_train = 4;
    cfg.data.dynamic_validation = 2;
    cfg.data.rollout_duration = 3.0;
    cfg.experiment.trajectories_per_velocity = 2;
    cfg.experiment.max_duration = 1.5;
    cfg
}

#[test]
fn stages_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let lab = Lab::new(tiny()).unwrap();

    let data = stage_collect(&lab, 4, &layout).unwrap();
    assert_eq!(data.len(), 4);
    assert!(data.iter().all(|p| p.exists()));
    let models = stage_train(&lab, 4, &layout).unwrap();
    assert!(models.iter().all(|p| p.exists()));

    let ma = stage_eval_ma(&lab, 4, &layout).unwrap();
    assert_eq!(ma.rows.len(), 11);
    assert_eq!(read_csv(&layout.metrics(1, "csv")).unwrap(), ma);

    let control = stage_eval_control(&lab, 4, &layout).unwrap();
    assert_eq!(control.rows.len(), 11);
    assert_eq!(control.methods, ["DFC", "ORACLE", "VAICAM"]);
    for c in lab.test_cases(4) {
        for k in ControllerKind::ALL {
            assert!(layout.rollout(k, &c).exists());
        }
    }

    // A rerun reads the stored rollouts back and reports the same table.
    assert_eq!(stage_eval_control(&lab, 4, &layout).unwrap(), control);
    // Rollouts of a different seed are not silently reused.
    assert!(stage_eval_control(&lab, 5, &layout).is_err());
}

#[test]
fn evaluation_without_models_fails() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::new(tiny()).unwrap();
    assert!(stage_eval_ma(&lab, 1, &Layout::new(dir.path())).is_err());
}

#[test]
fn reproduce_writes_manifest_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let lab = Lab::new(tiny()).unwrap();
    let manifest = reproduce_to_dir(&lab, 2, &layout, 1).unwrap();
    assert_eq!(manifest.seed, 2);
    assert_eq!(manifest.threads, 1);
    for out in &manifest.outputs {
        assert!(dir.path().join(out).exists(), "{out}");
    }
    let stored = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(stored, lab.cfg);
    let text = std::fs::read_to_string(layout.manifest()).unwrap();
    assert!(text.contains(&manifest.config_hash));
}

#[test]
fn longer_horizons_accumulate_error() {
    let lab = Lab::new(tiny()).unwrap();
    let corpora = lab.corpora(3).unwrap();
    let models = lab.train_models(&corpora, 3).unwrap();
    let cases = lab.test_cases(3);
    let dfc = lab
        .run_tests(&cases[cases.len() - 2..], ControllerKind::Dfc, None)
        .unwrap();
    let r = &dfc[0].rollout;
    assert!(prediction_rmse(&models.dma, r, 0).is_err());
    let one = prediction_rmse(&models.dma, r, 1).unwrap();
    let ten = prediction_rmse(&models.dma, r, 10).unwrap();
    assert!(one.is_finite() && ten.is_finite());
    assert!(ten > one, "one-step {one}, ten-step {ten}");
    assert!(tracking_rmse(r).unwrap() > 0.0);

    let velocities = &lab.cfg.experiment.velocities;
    let all = lab.run_tests(&cases, ControllerKind::Dfc, None).unwrap();
    let t1 = experiment_1(velocities, &all, &models, 1).unwrap();
    let t5 = experiment_1(velocities, &all, &models, 5).unwrap();
    assert_ne!(t1, t5);
}
