use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaicam::data::{Dataset, Split, Transition};
use vaicam::model::{
    forward, read_model, train, write_model, EnsembleModel, ModelError, NetworkConfig, NormStats,
    StateMode, StateSample, TransitionModel,
};

fn small_net() -> NetworkConfig {
    NetworkConfig {
        hidden_layers: 2,
        neurons_per_layer: 16,
        epochs: 5,
        batch_size: 32,
        ..Default::default()
    }
}

/// Tuples from `delta = f(features)` over uniformly drawn states.
fn dataset(
    mode: StateMode,
    n: usize,
    split: Split,
    rng: &mut ChaCha8Rng,
    f: impl Fn(&[f64; 5]) -> [f64; 4],
) -> Dataset {
    let tuples = (0..n)
        .map(|i| {
            let mut x = [0.0; 5];
            x.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
            if mode == StateMode::Static {
                x[2] = 0.0;
            }
            let mut delta = f(&x);
            if mode == StateMode::Static {
                delta[2] = 0.0;
            }
            Transition {
                rollout: (i / 50) as u32,
                step: (i % 50) as u32,
                state: StateSample {
                    z: x[0],
                    z_dot: x[1],
                    v: x[2],
                    f_z: x[3],
                    x_f_z: x[4],
                },
                delta,
            }
        })
        .collect();
    Dataset {
        mode,
        split,
        norm_source: "train".into(),
        tuples,
    }
}

fn nonlinear(x: &[f64; 5]) -> [f64; 4] {
    [
        0.1 * x[4] - 0.05 * x[0],
        x[1] * x[3],
        (x[2] * 3.0).sin(),
        x[4].max(0.0) * 2.0 - x[3],
    ]
}

fn trained(mode: StateMode, seed: u64) -> EnsembleModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tr = dataset(mode, 600, Split::Train, &mut rng, nonlinear);
    let va = dataset(mode, 100, Split::Validation, &mut rng, nonlinear);
    train(&tr, &va, &small_net(), seed).unwrap().0
}

#[test]
fn training_is_bit_reproducible() {
    let a = trained(StateMode::Dynamic, 3);
    let b = trained(StateMode::Dynamic, 3);
    assert_eq!(a.members, b.members);
    assert_eq!(a.norm, b.norm);
    let c = trained(StateMode::Dynamic, 4);
    assert_ne!(a.members, c.members);
}

#[test]
fn fused_prediction_is_the_member_average() {
    for mode in [StateMode::Static, StateMode::Dynamic] {
        let m = trained(mode, 5);
        let norm = m.norm.as_ref().unwrap();
        let s = StateSample {
            z: 0.2,
            z_dot: -0.4,
            v: if mode == StateMode::Dynamic { 0.3 } else { 0.0 },
            f_z: 0.7,
            x_f_z: 0.0,
        };
        let x_c = -0.25;
        let members: Vec<Array1<f64>> = m
            .members
            .iter()
            .map(|w| forward(mode, &s, x_c, w, norm).unwrap())
            .collect();
        let mut mean = members[0].clone();
        for d in &members[1..] {
            mean += d;
        }
        mean /= members.len() as f64;
        let fused = m.predict_delta(&s, x_c).unwrap();
        assert_eq!(fused, mean.to_vec());

        let next = m.predict_next(&s, x_c).unwrap();
        let expected = mode.apply_delta(&s, &fused);
        assert_eq!(
            (next.z, next.z_dot, next.v, next.f_z),
            (expected.z, expected.z_dot, expected.v, expected.f_z)
        );
        if mode == StateMode::Static {
            assert_eq!(next.v, s.v);
        }
    }
}

#[test]
fn saved_model_predicts_identically() {
    let m = trained(StateMode::Dynamic, 6);
    let mut buf = Vec::new();
    write_model(&m, &mut buf).unwrap();
    let back = read_model(buf.as_slice()).unwrap();
    let s = StateSample {
        z: 0.1,
        z_dot: 0.0,
        v: 0.25,
        f_z: 0.3,
        x_f_z: 0.0,
    };
    let grid = [-0.5, 0.0, 0.5];
    assert_eq!(
        m.predict_candidates(&s, &grid).unwrap(),
        back.predict_candidates(&s, &grid).unwrap()
    );
}

#[test]
fn untrained_and_degenerate_inputs_are_rejected() {
    let net = small_net();
    let fresh = EnsembleModel::init(StateMode::Dynamic, &net, 0);
    assert!(!fresh.is_ready());
    let s = StateSample {
        z: 0.0,
        z_dot: 0.0,
        v: 0.0,
        f_z: 0.0,
        x_f_z: 0.0,
    };
    assert!(matches!(
        fresh.predict_next(&s, 0.0),
        Err(ModelError::NotReady)
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let va = dataset(
        StateMode::Dynamic,
        50,
        Split::Validation,
        &mut rng,
        nonlinear,
    );
    let empty = Dataset::empty(StateMode::Dynamic, Split::Train);
    assert!(matches!(
        train(&empty, &va, &net, 0),
        Err(ModelError::DegenerateData(_))
    ));

    // A feature that never varies cannot be normalised.
    let mut flat = dataset(StateMode::Dynamic, 200, Split::Train, &mut rng, nonlinear);
    flat.tuples.iter_mut().for_each(|t| t.state.z_dot = 0.25);
    assert!(matches!(
        train(&flat, &va, &net, 0),
        Err(ModelError::DegenerateData(_))
    ));

    let sma = dataset(
        StateMode::Static,
        50,
        Split::Validation,
        &mut rng,
        nonlinear,
    );
    let tr = dataset(StateMode::Dynamic, 200, Split::Train, &mut rng, nonlinear);
    assert!(matches!(
        train(&tr, &sma, &net, 0),
        Err(ModelError::Shape(_))
    ));
}

#[test]
fn constant_targets_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let constant = |_: &[f64; 5]| [0.1, -0.2, 0.05, 0.5];
    let tr = dataset(StateMode::Dynamic, 1000, Split::Train, &mut rng, constant);
    let va = dataset(
        StateMode::Dynamic,
        200,
        Split::Validation,
        &mut rng,
        constant,
    );
    let net = NetworkConfig {
        epochs: 400,
        ..small_net()
    };
    let (m, log) = train(&tr, &va, &net, 0).unwrap();
    assert!(
        log.validation_mse < 1e-4,
        "validation MSE {}",
        log.validation_mse
    );
    let d = m
        .predict_delta(&tr.tuples[0].state, tr.tuples[0].state.x_f_z)
        .unwrap();
    for (got, want) in d.iter().zip([0.1, -0.2, 0.05, 0.5]) {
        assert!((got - want).abs() < 1e-2, "{got} vs {want}");
    }
}

#[test]
fn losses_are_recorded_every_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tr = dataset(StateMode::Dynamic, 400, Split::Train, &mut rng, nonlinear);
    let va = dataset(
        StateMode::Dynamic,
        100,
        Split::Validation,
        &mut rng,
        nonlinear,
    );
    let net = NetworkConfig {
        epochs: 12,
        ..small_net()
    };
    let (_, log) = train(&tr, &va, &net, 1).unwrap();
    assert_eq!(log.members.len(), net.n_estimators);
    for h in &log.members {
        assert_eq!(h.train_loss.len(), 12);
        assert_eq!(h.validation_loss.len(), 12);
        assert!(h.train_loss.last().unwrap() < h.train_loss.first().unwrap());
    }
}

proptest! {
    #[test]
    fn normalisation_round_trips(
        mean in prop::collection::vec(-1e3..1e3f64, 4),
        std in prop::collection::vec(1e-3..1e3f64, 4),
        x in prop::collection::vec(-1e4..1e4f64, 4),
    ) {
        let stats = NormStats::new(Array1::from(mean), Array1::from(std)).unwrap();
        let x = Array1::from(x);
        let back = stats.denormalize(stats.normalize(x.view()).unwrap().view()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn trained_members_are_total(
        z in -1e3..1e3f64,
        z_dot in -1e3..1e3f64,
        v in 0.0..1e3f64,
        f_z in -1e3..1e3f64,
        x_c in -1e3..1e3f64,
    ) {
        thread_local! {
            static MODEL: EnsembleModel = trained(StateMode::Dynamic, 9);
        }
        let s = StateSample { z, z_dot, v, f_z, x_f_z: x_c };
        let next = MODEL.with(|m| m.predict_next(&s, x_c)).unwrap();
        prop_assert!(next.is_finite());
    }
}

#[test]
fn batch_and_single_queries_agree() {
    let m = trained(StateMode::Dynamic, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let states: Vec<StateSample> = (0..20)
        .map(|_| StateSample {
            z: rng.random_range(-1.0..1.0),
            z_dot: rng.random_range(-1.0..1.0),
            v: rng.random_range(0.0..1.0),
            f_z: rng.random_range(-1.0..1.0),
            x_f_z: 0.0,
        })
        .collect();
    let setpoints: Vec<f64> = (0..20).map(|i| i as f64 / 20.0 - 0.5).collect();
    let batch = m.predict_batch(&states, &setpoints).unwrap();
    for ((s, &x), b) in states.iter().zip(&setpoints).zip(&batch) {
        let single = m.predict_next(s, x).unwrap();
        for (p, q) in [
            (single.z, b.z),
            (single.z_dot, b.z_dot),
            (single.v, b.v),
            (single.f_z, b.f_z),
        ] {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{p} vs {q}");
        }
        assert_eq!(single.x_f_z, b.x_f_z);
    }
}
