use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::ensemble::{member_seed, EnsembleModel, ModelNorm};
use super::mlp::Mlp;
use super::norm::NormStats;
use super::{ModelError, StateMode};
use crate::data::Dataset;

/// Ensemble topology and optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_estimators: usize,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub activation: String,
    pub fusion: String,
    pub loss: String,
    pub batch_size: usize,
    /// Epochs without validation improvement before the rate is scaled.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_estimators: 3,
            hidden_layers: 3,
            neurons_per_layer: 200,
            learning_rate: 1e-3,
            epochs: 50,
            activation: "relu".into(),
            fusion: "average".into(),
            loss: "mse".into(),
            batch_size: 256,
            plateau_patience: 5,
            plateau_factor: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.n_estimators == 0 || self.neurons_per_layer == 0 || self.batch_size == 0 {
            return fail("n_estimators, neurons_per_layer and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return fail(format!(
                "plateau factor must lie in (0, 1], got {}",
                self.plateau_factor
            ));
        }
        if self.activation != "relu" {
            return fail(format!("unsupported activation `{}`", self.activation));
        }
        if self.fusion != "average" {
            return fail(format!("unsupported fusion `{}`", self.fusion));
        }
        if self.loss != "mse" {
            return fail(format!("unsupported loss `{}`", self.loss));
        }
        Ok(())
    }

    /// Layer widths, inputs first.
    pub fn widths(&self, mode: StateMode) -> Vec<usize> {
        let mut w = vec![mode.input_dim()];
        w.extend(std::iter::repeat_n(
            self.neurons_per_layer,
            self.hidden_layers,
        ));
        w.push(mode.state_dim());
        w
    }
}

/// Per-epoch losses of one member, in normalised units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub members: Vec<MemberHistory>,
    /// Normalised MSE of the fused ensemble on the validation split.
    pub validation_mse: f64,
}

/// Trains `cfg.n_estimators` members independently on `train_set`, tracking
/// the validation split for learning-rate plateau scaling. Normalisation
/// statistics come from the training split only.
pub fn train(
    train_set: &Dataset,
    validation_set: &Dataset,
    cfg: &NetworkConfig,
    seed: u64,
) -> Result<(EnsembleModel, TrainingLog), ModelError> {
    cfg.validate()?;
    let mode = train_set.mode;
    if validation_set.mode != mode {
        return Err(ModelError::Shape(format!(
            "training split is {} but validation split is {}",
            mode.as_str(),
            validation_set.mode.as_str()
        )));
    }
    if train_set.is_empty() {
        return Err(ModelError::DegenerateData("training split is empty".into()));
    }
    if validation_set.is_empty() {
        return Err(ModelError::DegenerateData(
            "validation split is empty".into(),
        ));
    }

    let (x_train, y_train) = train_set.matrices();
    let (x_val, y_val) = validation_set.matrices();
    let norm = ModelNorm {
        input: NormStats::fit(x_train.view(), false)?,
        target: NormStats::fit(y_train.view(), true)?,
    };
    let xn = norm.input.normalize_rows(x_train.view())?;
    let yn = norm.target.normalize_rows(y_train.view())?;
    let xvn = norm.input.normalize_rows(x_val.view())?;
    let yvn = norm.target.normalize_rows(y_val.view())?;

    let mut model = EnsembleModel::init(mode, cfg, seed);
    let results: Vec<Result<(Mlp, MemberHistory), ModelError>> = model
        .members
        .par_iter()
        .enumerate()
        .map(|(m, init)| {
            let mut rng = ChaCha8Rng::seed_from_u64(member_seed(seed, m).wrapping_add(1));
            train_member(init.clone(), &xn, &yn, &xvn, &yvn, cfg, &mut rng).map_err(|e| match e {
                ModelError::Divergence(msg) => ModelError::Divergence(format!("member {m}: {msg}")),
                other => other,
            })
        })
        .collect();

    let mut log = TrainingLog::default();
    for (slot, r) in model.members.iter_mut().zip(results) {
        let (net, hist) = r?;
        *slot = net;
        log.members.push(hist);
    }
    model.norm = Some(norm);
    log.validation_mse = mse(&model.fused_normalized(&xvn), &yvn);
    Ok((model, log))
}

fn train_member(
    mut net: Mlp,
    x: &Array2<f64>,
    y: &Array2<f64>,
    x_val: &Array2<f64>,
    y_val: &Array2<f64>,
    cfg: &NetworkConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Mlp, MemberHistory), ModelError> {
    let mut adam = AdamState::new(&net);
    let mut lr = cfg.learning_rate;
    let mut history = MemberHistory::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..x.nrows()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let (loss, grads) = net.backprop(xb.view(), yb.view());
            if !loss.is_finite() {
                return Err(ModelError::Divergence(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            weighted += loss * batch.len() as f64;
            adam_step(&mut net, &grads, &mut adam, lr)?;
        }
        let train_loss = weighted / x.nrows() as f64;
        let val_loss = mse(&net.forward(x_val.view()), y_val);
        if !val_loss.is_finite() {
            return Err(ModelError::Divergence(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.train_loss.push(train_loss);
        history.validation_loss.push(val_loss);
        history.learning_rate.push(lr);

        if val_loss < best {
            best = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                stale = 0;
            }
        }
    }
    Ok((net, history))
}

pub(crate) fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n
}

impl EnsembleModel {
    /// Fused-prediction MSE on `data` in the model's normalised target space.
    pub fn normalized_mse(&self, data: &Dataset) -> Result<f64, ModelError> {
        let norm = self.norm.as_ref().ok_or(ModelError::NotReady)?;
        if data.mode != self.mode {
            return Err(ModelError::Shape(
                "dataset and model state modes differ".into(),
            ));
        }
        let (x, y) = data.matrices();
        let xn = norm.input.normalize_rows(x.view())?;
        let yn = norm.target.normalize_rows(y.view())?;
        Ok(mse(&self.fused_normalized(&xn), &yn))
    }
}
