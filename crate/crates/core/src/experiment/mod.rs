//! Orchestration of the model-approximator and controller comparisons:
//! configuration, corpus generation, evaluation protocols and reports.

mod config;
mod metrics;
mod pipeline;
mod protocol;
mod report;

pub use config::{DataConfig, ExperimentConfig, PlantConfig, ProtocolConfig};
pub use metrics::{eta, rmse, summarize, MetricsRow, MetricsTable, Summary};
pub use pipeline::{
    reproduce_to_dir, stage_collect, stage_eval_control, stage_eval_ma, stage_train, write_table,
    Layout,
};
pub use protocol::{
    derive_seed, experiment_1, experiment_2, prediction_rmse, tracking_rmse, Corpora, Lab,
    Reproduction, TestCase, TestRun, TrainedModels, CONTROLLER_COLUMNS, MODEL_COLUMNS,
};
pub use report::{
    config_hash, parse_csv, read_csv, render_text, write_csv, write_manifest, RunManifest,
};

use thiserror::Error;

use crate::control::ControlError;
use crate::data::DataError;
use crate::model::ModelError;
use crate::plant::PlantError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
