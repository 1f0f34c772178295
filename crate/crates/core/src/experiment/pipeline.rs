//! File-backed stages: each reads the previous stage's artifacts from an
//! output directory and writes its own, so stages can be rerun separately.
//!
//! ```text
//! <out>/data/{static,dynamic}_{train,validation}.csv
//! <out>/models/{sma,dma}.model
//! <out>/rollouts/<controller>/v<ii>_t<jj>.csv
//! <out>/metrics/experiment_1.{csv,txt}, experiment_2.{csv,txt}
//! <out>/manifest.toml
//! ```

use std::path::{Path, PathBuf};

use super::protocol::{experiment_1, experiment_2, Lab, TestCase, TestRun, TrainedModels};
use super::report::{render_text, write_csv, write_manifest, RunManifest};
use super::{ExperimentError, MetricsTable};
use crate::control::ControllerKind;
use crate::data::{load_dataset, load_rollout, save_dataset, save_rollout, SplitDatasets};
use crate::model::{load_model, save_model, StateMode};

/// Artifact paths under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self, mode: StateMode, split: &str) -> PathBuf {
        self.root
            .join("data")
            .join(format!("{}_{split}.csv", mode.as_str()))
    }

    pub fn model(&self, mode: StateMode) -> PathBuf {
        let name = match mode {
            StateMode::Static => "sma",
            StateMode::Dynamic => "dma",
        };
        self.root.join("models").join(format!("{name}.model"))
    }

    pub fn rollout(&self, controller: ControllerKind, case: &TestCase) -> PathBuf {
        self.root
            .join("rollouts")
            .join(controller.as_str())
            .join(format!(
                "v{:02}_t{:02}.csv",
                case.velocity_index, case.index
            ))
    }

    pub fn metrics(&self, experiment: u8, ext: &str) -> PathBuf {
        self.root
            .join("metrics")
            .join(format!("experiment_{experiment}.{ext}"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }
}

fn ensure_parent(path: &Path) -> Result<(), ExperimentError> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

/// Writes `table` as CSV and as a text table; returns the CSV path.
pub fn write_table(
    table: &MetricsTable,
    layout: &Layout,
    experiment: u8,
) -> Result<PathBuf, ExperimentError> {
    let csv = layout.metrics(experiment, "csv");
    ensure_parent(&csv)?;
    let mut buf = Vec::new();
    write_csv(table, &mut buf)?;
    std::fs::write(&csv, buf)?;
    std::fs::write(layout.metrics(experiment, "txt"), render_text(table)?)?;
    Ok(csv)
}

/// Generates and stores both training corpora (noise applied).
pub fn stage_collect(
    lab: &Lab,
    seed: u64,
    layout: &Layout,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let corpora = lab.corpora(seed)?;
    let mut written = Vec::new();
    for (mode, data) in [
        (StateMode::Static, &corpora.static_data),
        (StateMode::Dynamic, &corpora.dynamic_data),
    ] {
        for (split, d) in [("train", &data.train), ("validation", &data.validation)] {
            let path = layout.dataset(mode, split);
            save_dataset(d, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn load_split(layout: &Layout, mode: StateMode) -> Result<SplitDatasets, ExperimentError> {
    Ok(SplitDatasets {
        train: load_dataset(&layout.dataset(mode, "train"), mode)?,
        validation: load_dataset(&layout.dataset(mode, "validation"), mode)?,
    })
}

/// Trains both approximators from the stored corpora.
pub fn stage_train(lab: &Lab, seed: u64, layout: &Layout) -> Result<Vec<PathBuf>, ExperimentError> {
    let s = load_split(layout, StateMode::Static)?;
    let d = load_split(layout, StateMode::Dynamic)?;
    let models = lab.train_from(&s, &d, seed)?;
    let mut written = Vec::new();
    for m in [&models.sma, &models.dma] {
        let path = layout.model(m.mode);
        ensure_parent(&path)?;
        save_model(m, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn load_models(layout: &Layout) -> Result<TrainedModels, ExperimentError> {
    let sma = load_model(&layout.model(StateMode::Static))?;
    let dma = load_model(&layout.model(StateMode::Dynamic))?;
    if sma.mode != StateMode::Static || dma.mode != StateMode::Dynamic {
        return Err(ExperimentError::Input(
            "model files hold the wrong state modes".into(),
        ));
    }
    Ok(TrainedModels {
        sma,
        dma,
        sma_log: Default::default(),
        dma_log: Default::default(),
    })
}

/// Runs the test grid under `controller`, reusing stored rollouts when every
/// one of them is present.
fn test_runs(
    lab: &Lab,
    seed: u64,
    layout: &Layout,
    controller: ControllerKind,
    models: Option<&TrainedModels>,
) -> Result<Vec<TestRun>, ExperimentError> {
    let cases = lab.test_cases(seed);
    let paths: Vec<PathBuf> = cases
        .iter()
        .map(|c| layout.rollout(controller, c))
        .collect();
    if paths.iter().all(|p| p.exists()) {
        return cases
            .iter()
            .zip(&paths)
            .map(|(c, p)| {
                let rollout = load_rollout(p)?;
                if rollout.meta.seed != c.seed || rollout.meta.controller != controller {
                    return Err(ExperimentError::Input(format!(
                        "{} was produced by a different seed or controller",
                        p.display()
                    )));
                }
                Ok(TestRun { case: *c, rollout })
            })
            .collect();
    }
    let model = match controller {
        ControllerKind::Dfc => None,
        ControllerKind::Oracle => Some(&models.expect("models loaded for model-based control").sma),
        ControllerKind::Vaicam => Some(&models.expect("models loaded for model-based control").dma),
    };
    let runs = lab.run_tests(&cases, controller, model)?;
    for (run, path) in runs.iter().zip(&paths) {
        save_rollout(&run.rollout, path)?;
    }
    Ok(runs)
}

/// Model comparison on the force-controller test runs.
pub fn stage_eval_ma(
    lab: &Lab,
    seed: u64,
    layout: &Layout,
) -> Result<MetricsTable, ExperimentError> {
    let models = load_models(layout)?;
    let dfc = test_runs(lab, seed, layout, ControllerKind::Dfc, None)?;
    let table = experiment_1(
        &lab.cfg.experiment.velocities,
        &dfc,
        &models,
        lab.cfg.experiment.prediction_horizon,
    )?;
    write_table(&table, layout, 1)?;
    Ok(table)
}

/// Controller comparison over the same test grid.
pub fn stage_eval_control(
    lab: &Lab,
    seed: u64,
    layout: &Layout,
) -> Result<MetricsTable, ExperimentError> {
    let models = load_models(layout)?;
    let dfc = test_runs(lab, seed, layout, ControllerKind::Dfc, None)?;
    let oracle = test_runs(lab, seed, layout, ControllerKind::Oracle, Some(&models))?;
    let vaicam = test_runs(lab, seed, layout, ControllerKind::Vaicam, Some(&models))?;
    let table = experiment_2(&lab.cfg.experiment.velocities, &dfc, &oracle, &vaicam)?;
    write_table(&table, layout, 2)?;
    Ok(table)
}

/// Every stage in order on a fresh output directory, inside a pool of
/// `threads` workers (0 = rayon's default), followed by the run manifest.
pub fn reproduce_to_dir(
    lab: &Lab,
    seed: u64,
    layout: &Layout,
    threads: usize,
) -> Result<RunManifest, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Input(format!("thread pool: {e}")))?;
    pool.install(|| {
        std::fs::create_dir_all(&layout.root)?;
        for dir in ["rollouts", "metrics"] {
            let p = layout.root.join(dir);
            if p.exists() {
                std::fs::remove_dir_all(&p)?;
            }
        }
        let mut manifest = RunManifest::new(&lab.cfg, seed, pool.current_num_threads());
        let rel = |p: &Path| {
            p.strip_prefix(&layout.root)
                .unwrap_or(p)
                .display()
                .to_string()
        };
        log::info!("collecting training corpora");
        manifest
            .outputs
            .extend(stage_collect(lab, seed, layout)?.iter().map(|p| rel(p)));
        log::info!("training approximators");
        manifest
            .outputs
            .extend(stage_train(lab, seed, layout)?.iter().map(|p| rel(p)));
        log::info!("model comparison");
        stage_eval_ma(lab, seed, layout)?;
        log::info!("controller comparison");
        stage_eval_control(lab, seed, layout)?;
        for e in [1, 2] {
            for ext in ["csv", "txt"] {
                manifest.outputs.push(rel(&layout.metrics(e, ext)));
            }
        }
        std::fs::write(layout.root.join("config.toml"), lab.cfg.to_toml())?;
        manifest.outputs.push("config.toml".into());
        write_manifest(&manifest, &layout.manifest())?;
        Ok(manifest)
    })
}
