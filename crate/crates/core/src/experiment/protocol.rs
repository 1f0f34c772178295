//! Corpus generation, training and the two evaluation protocols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::metrics::{rmse, MetricsTable};
use super::ExperimentError;
use crate::control::ControllerKind;
use crate::data::{
    add_force_noise, assemble_split, collect_rollout, Dataset, ForceProfile, LoopConfig,
    PathProfile, ReferenceProfile, Rollout, RunTag, SplitDatasets, SplitSpec,
};
use crate::model::{train, EnsembleModel, StateMode, TrainingLog};
use crate::plant::Plant;

/// Method columns of the model comparison.
pub const MODEL_COLUMNS: [&str; 2] = ["SMA", "DMA"];
/// Method columns of the controller comparison.
pub const CONTROLLER_COLUMNS: [&str; 3] = ["DFC", "ORACLE", "VAICAM"];

const STREAM_STATIC: u64 = 1;
const STREAM_DYNAMIC: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_TEST: u64 = 5;

/// Independent sub-seed for `(stream, index)` under a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noisy training / validation data for both approximators, plus the clean
/// rollouts they came from.
#[derive(Debug, Clone)]
pub struct Corpora {
    pub static_rollouts: Vec<Rollout>,
    pub dynamic_rollouts: Vec<Rollout>,
    pub static_data: SplitDatasets,
    pub dynamic_data: SplitDatasets,
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub sma: EnsembleModel,
    pub dma: EnsembleModel,
    pub sma_log: TrainingLog,
    pub dma_log: TrainingLog,
}

/// One line of the test grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestCase {
    pub velocity_index: usize,
    pub velocity: f64,
    /// Trajectory number within its velocity level.
    pub index: usize,
    pub seed: u64,
    pub profile: ReferenceProfile,
}

/// A test case executed under one controller.
#[derive(Debug, Clone)]
pub struct TestRun {
    pub case: TestCase,
    pub rollout: Rollout,
}

/// Everything produced by a full run.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub corpora: Corpora,
    pub models: TrainedModels,
    pub dfc: Vec<TestRun>,
    pub oracle: Vec<TestRun>,
    pub vaicam: Vec<TestRun>,
    pub model_table: MetricsTable,
    pub control_table: MetricsTable,
}

/// A validated configuration bound to its plant.
#[derive(Debug, Clone)]
pub struct Lab {
    pub cfg: ExperimentConfig,
    pub plant: Plant,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let plant = cfg.plant()?;
        Ok(Self { cfg, plant })
    }

    /// Commanded height: slightly below the surface so contact is made.
    fn z_ref(&self) -> f64 {
        self.cfg.environment.z_surface - self.cfg.control.approach_depth
    }

    fn run(
        &self,
        profile: &ReferenceProfile,
        controller: ControllerKind,
        model: Option<&EnsembleModel>,
        tag: RunTag,
    ) -> Result<Rollout, ExperimentError> {
        self.run_with(&self.cfg.control, profile, controller, model, tag)
    }

    fn run_with(
        &self,
        loop_cfg: &LoopConfig,
        profile: &ReferenceProfile,
        controller: ControllerKind,
        model: Option<&EnsembleModel>,
        tag: RunTag,
    ) -> Result<Rollout, ExperimentError> {
        Ok(collect_rollout(
            profile,
            controller,
            &self.plant,
            loop_cfg,
            &self.cfg.vaicam,
            model,
            tag,
        )?)
    }

    /// Static-waypoint references with randomised sinusoidal forces.
    pub fn static_profiles(&self, seed: u64) -> Vec<(ReferenceProfile, RunTag)> {
        let d = &self.cfg.data;
        (0..d.static_train + d.static_validation)
            .map(|i| {
                let s = derive_seed(seed, STREAM_STATIC, i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let profile = ReferenceProfile {
                    path: PathProfile::StaticPoint,
                    force: d.force.sample(&mut rng),
                    duration: d.rollout_duration,
                    z_ref: self.z_ref(),
                };
                (
                    profile,
                    RunTag {
                        seed: s,
                        velocity: 0.0,
                        mode: StateMode::Static,
                    },
                )
            })
            .collect()
    }

    /// Sine-position references with randomised sinusoidal forces. Training
    /// peak speeds are stratified over `(0, max_peak_speed]`; validation
    /// peaks are drawn from the test velocity grid.
    pub fn dynamic_profiles(&self, seed: u64) -> Vec<(ReferenceProfile, RunTag)> {
        let d = &self.cfg.data;
        let grid = &self.cfg.experiment.velocities;
        (0..d.dynamic_train + d.dynamic_validation)
            .map(|i| {
                let s = derive_seed(seed, STREAM_DYNAMIC, i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let force = d.force.sample(&mut rng);
                let peak = if i < d.dynamic_train {
                    d.max_peak_speed * (i as f64 + rng.random_range(0.0..1.0))
                        / d.dynamic_train as f64
                } else {
                    grid[rng.random_range(0..grid.len())]
                };
                let frequency = d.position_frequency.sample(&mut rng);
                let profile = ReferenceProfile {
                    path: PathProfile::SinePosition {
                        amplitude: peak / (std::f64::consts::TAU * frequency),
                        frequency,
                    },
                    force,
                    duration: d.rollout_duration,
                    z_ref: self.z_ref(),
                };
                (
                    profile,
                    RunTag {
                        seed: s,
                        velocity: peak,
                        mode: StateMode::Dynamic,
                    },
                )
            })
            .collect()
    }

    /// Training rollouts: the force controller with setpoint dither.
    fn collect_training(
        &self,
        profiles: &[(ReferenceProfile, RunTag)],
    ) -> Result<Vec<Rollout>, ExperimentError> {
        let loop_cfg = LoopConfig {
            exploration: self.cfg.data.exploration,
            ..self.cfg.control.clone()
        };
        profiles
            .par_iter()
            .map(|(p, tag)| self.run_with(&loop_cfg, p, ControllerKind::Dfc, None, *tag))
            .collect()
    }

    fn noisy(&self, d: &Dataset, seed: u64, index: u64) -> Result<Dataset, ExperimentError> {
        Ok(add_force_noise(
            d,
            self.cfg.data.noise_sigma,
            derive_seed(seed, STREAM_NOISE, index),
        )?)
    }

    /// Collects both training corpora under the force controller and applies
    /// measurement noise.
    pub fn corpora(&self, seed: u64) -> Result<Corpora, ExperimentError> {
        let d = &self.cfg.data;
        let static_rollouts = self.collect_training(&self.static_profiles(seed))?;
        let dynamic_rollouts = self.collect_training(&self.dynamic_profiles(seed))?;
        let s = assemble_split(
            &static_rollouts,
            SplitSpec {
                train: d.static_train,
                validation: d.static_validation,
            },
        )?;
        let y = assemble_split(
            &dynamic_rollouts,
            SplitSpec {
                train: d.dynamic_train,
                validation: d.dynamic_validation,
            },
        )?;
        Ok(Corpora {
            static_data: SplitDatasets {
                train: self.noisy(&s.train, seed, 0)?,
                validation: self.noisy(&s.validation, seed, 1)?,
            },
            dynamic_data: SplitDatasets {
                train: self.noisy(&y.train, seed, 2)?,
                validation: self.noisy(&y.validation, seed, 3)?,
            },
            static_rollouts,
            dynamic_rollouts,
        })
    }

    pub fn train_models(
        &self,
        corpora: &Corpora,
        seed: u64,
    ) -> Result<TrainedModels, ExperimentError> {
        self.train_from(&corpora.static_data, &corpora.dynamic_data, seed)
    }

    pub fn train_from(
        &self,
        static_data: &SplitDatasets,
        dynamic_data: &SplitDatasets,
        seed: u64,
    ) -> Result<TrainedModels, ExperimentError> {
        let net = &self.cfg.network;
        let (sma, sma_log) = train(
            &static_data.train,
            &static_data.validation,
            net,
            derive_seed(seed, STREAM_TRAIN, 0),
        )?;
        let (dma, dma_log) = train(
            &dynamic_data.train,
            &dynamic_data.validation,
            net,
            derive_seed(seed, STREAM_TRAIN, 1),
        )?;
        Ok(TrainedModels {
            sma,
            dma,
            sma_log,
            dma_log,
        })
    }

    /// Line references over the velocity grid, velocity-major.
    pub fn test_cases(&self, seed: u64) -> Vec<TestCase> {
        let e = &self.cfg.experiment;
        let mut cases = Vec::with_capacity(e.velocities.len() * e.trajectories_per_velocity);
        for (vi, &v) in e.velocities.iter().enumerate() {
            for j in 0..e.trajectories_per_velocity {
                let s = derive_seed(
                    seed,
                    STREAM_TEST,
                    (vi * e.trajectories_per_velocity + j) as u64,
                );
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let force = ForceProfile {
                    mean: e.force_mean,
                    amplitude: e.force_amplitude,
                    frequency: e.force_frequency,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                };
                let mut profile = ReferenceProfile::line(v, e.line_length, force, self.z_ref());
                profile.duration = profile.duration.min(e.max_duration);
                cases.push(TestCase {
                    velocity_index: vi,
                    velocity: v,
                    index: j,
                    seed: s,
                    profile,
                });
            }
        }
        cases
    }

    /// Executes every test case under `controller`.
    pub fn run_tests(
        &self,
        cases: &[TestCase],
        controller: ControllerKind,
        model: Option<&EnsembleModel>,
    ) -> Result<Vec<TestRun>, ExperimentError> {
        cases
            .par_iter()
            .map(|c| {
                let mode = model.map_or(StateMode::Dynamic, |m| m.mode);
                let tag = RunTag {
                    seed: c.seed,
                    velocity: c.velocity,
                    mode,
                };
                Ok(TestRun {
                    case: *c,
                    rollout: self.run(&c.profile, controller, model, tag)?,
                })
            })
            .collect()
    }

    /// Corpora, training, the test grid under all three controllers, and
    /// both comparison tables.
    pub fn reproduce(&self, seed: u64) -> Result<Reproduction, ExperimentError> {
        log::info!("collecting training corpora (seed {seed})");
        let corpora = self.corpora(seed)?;
        log::info!(
            "training approximators on {} static / {} dynamic tuples",
            corpora.static_data.train.len(),
            corpora.dynamic_data.train.len()
        );
        let models = self.train_models(&corpora, seed)?;
        self.evaluate(corpora, models, seed)
    }

    /// Runs both comparisons with already trained models.
    pub fn evaluate(
        &self,
        corpora: Corpora,
        models: TrainedModels,
        seed: u64,
    ) -> Result<Reproduction, ExperimentError> {
        let cases = self.test_cases(seed);
        let velocities = &self.cfg.experiment.velocities;
        log::info!("running {} test lines under each controller", cases.len());
        let dfc = self.run_tests(&cases, ControllerKind::Dfc, None)?;
        let model_table = experiment_1(
            velocities,
            &dfc,
            &models,
            self.cfg.experiment.prediction_horizon,
        )?;
        let oracle = self.run_tests(&cases, ControllerKind::Oracle, Some(&models.sma))?;
        let vaicam = self.run_tests(&cases, ControllerKind::Vaicam, Some(&models.dma))?;
        let control_table = experiment_2(velocities, &dfc, &oracle, &vaicam)?;
        Ok(Reproduction {
            corpora,
            models,
            dfc,
            oracle,
            vaicam,
            model_table,
            control_table,
        })
    }
}

/// Force-prediction RMSE of `model` replaying `rollout` from controller
/// activation: each prediction starts from a recorded state and is rolled
/// `horizon` steps forward with the recorded setpoints.
pub fn prediction_rmse(
    model: &EnsembleModel,
    rollout: &Rollout,
    horizon: usize,
) -> Result<f64, ExperimentError> {
    if horizon == 0 {
        return Err(ExperimentError::Input(
            "prediction horizon must be >= 1".into(),
        ));
    }
    let samples = &rollout.samples;
    let start = rollout
        .meta
        .activation
        .ok_or_else(|| ExperimentError::Input("rollout never established contact".into()))?;
    if start + horizon >= samples.len() {
        return Err(ExperimentError::Input(
            "rollout too short for the prediction horizon".into(),
        ));
    }
    let origins = start..samples.len() - horizon;
    let mut states: Vec<_> = origins.clone().map(|k| samples[k].state).collect();
    for j in 0..horizon {
        let actions: Vec<f64> = origins.clone().map(|k| samples[k + j].x_c_z).collect();
        states = model.predict_batch(&states, &actions)?;
    }
    let predicted: Vec<f64> = states.iter().map(|s| s.f_z).collect();
    let actual: Vec<f64> = origins.map(|k| samples[k + horizon].state.f_z).collect();
    rmse(&actual, &predicted)
}

/// Force-tracking RMSE from controller activation onward.
pub fn tracking_rmse(rollout: &Rollout) -> Result<f64, ExperimentError> {
    let active = rollout.active();
    if active.is_empty() {
        return Err(ExperimentError::Input(
            "rollout never established contact".into(),
        ));
    }
    let reference: Vec<f64> = active.iter().map(|s| -s.h_r_z).collect();
    let actual: Vec<f64> = active.iter().map(|s| s.state.f_z).collect();
    rmse(&reference, &actual)
}

/// Groups per-run values by velocity level (runs are velocity-major).
fn by_velocity(
    velocities: &[f64],
    runs: &[TestRun],
    values: &[f64],
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let mut out = vec![Vec::new(); velocities.len()];
    for (r, &v) in runs.iter().zip(values) {
        out.get_mut(r.case.velocity_index)
            .ok_or_else(|| ExperimentError::Input("test run outside the velocity grid".into()))?
            .push(v);
    }
    Ok(out)
}

fn transpose(columns: Vec<Vec<Vec<f64>>>) -> Vec<Vec<Vec<f64>>> {
    let n_rows = columns[0].len();
    (0..n_rows)
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect()
}

/// Model comparison: per-velocity force-prediction RMSE of both
/// approximators on the force-controller test runs.
pub fn experiment_1(
    velocities: &[f64],
    runs: &[TestRun],
    models: &TrainedModels,
    horizon: usize,
) -> Result<MetricsTable, ExperimentError> {
    let eval = |m: &EnsembleModel| -> Result<Vec<Vec<f64>>, ExperimentError> {
        let values = runs
            .par_iter()
            .map(|r| prediction_rmse(m, &r.rollout, horizon))
            .collect::<Result<Vec<_>, _>>()?;
        by_velocity(velocities, runs, &values)
    };
    let columns = vec![eval(&models.sma)?, eval(&models.dma)?];
    MetricsTable::from_samples(&MODEL_COLUMNS, &[(0, 1)], velocities, &transpose(columns))
}

/// Controller comparison: per-velocity force-tracking RMSE.
pub fn experiment_2(
    velocities: &[f64],
    dfc: &[TestRun],
    oracle: &[TestRun],
    vaicam: &[TestRun],
) -> Result<MetricsTable, ExperimentError> {
    let eval = |runs: &[TestRun]| -> Result<Vec<Vec<f64>>, ExperimentError> {
        let values = runs
            .iter()
            .map(|r| tracking_rmse(&r.rollout))
            .collect::<Result<Vec<_>, _>>()?;
        by_velocity(velocities, runs, &values)
    };
    let columns = vec![eval(dfc)?, eval(oracle)?, eval(vaicam)?];
    MetricsTable::from_samples(
        &CONTROLLER_COLUMNS,
        &[(0, 2), (1, 2)],
        velocities,
        &transpose(columns),
    )
}
