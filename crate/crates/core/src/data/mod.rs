//! Reference generation, closed-loop data collection, dataset assembly and
//! on-disk formats.

mod dataset;
mod io;
mod reference;
mod rollout;

pub use dataset::{
    add_force_noise, assemble_dataset, assemble_split, force_noise, Dataset, Split, SplitDatasets,
    SplitSpec, Transition,
};
pub use io::{
    load_dataset, load_rollout, read_dataset, read_rollout, save_dataset, save_rollout,
    write_dataset, write_rollout, DATA_SCHEMA_VERSION,
};
pub use reference::{
    gen_reference, step_count, ForceProfile, ForceRanges, PathProfile, Range, ReferenceKind,
    ReferencePoint, ReferenceProfile,
};
pub use rollout::{collect_rollout, LoopConfig, Rollout, RolloutMeta, RolloutSample, RunTag};

use thiserror::Error;

use crate::control::ControlError;
use crate::model::ModelError;
use crate::plant::PlantError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid reference profile: {0}")]
    Profile(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("file format: {0}")]
    Format(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("rollout step {step} (t = {t:.3} s): {source}")]
    Step {
        step: usize,
        t: f64,
        source: Box<DataError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
