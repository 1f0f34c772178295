use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Mlp;
use super::norm::NormStats;
use super::train::NetworkConfig;
use super::{ModelError, StateMode, StateSample, TransitionModel};

/// Normalisation of network inputs (state features + setpoint) and of the
/// delta targets. Both are fitted on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelNorm {
    pub input: NormStats,
    pub target: NormStats,
}

/// `N` independently trained members sharing one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub mode: StateMode,
    pub members: Vec<Mlp>,
    pub norm: Option<ModelNorm>,
}

/// Network input row for a state and setpoint, in raw units.
pub(crate) fn input_row(mode: StateMode, s: &StateSample, x_f_z: f64) -> Vec<f64> {
    let mut row = mode.features(s);
    row.push(x_f_z);
    row
}

/// Denormalised delta predicted by one member.
pub fn forward(
    mode: StateMode,
    s: &StateSample,
    x_f_z: f64,
    member: &Mlp,
    norm: &ModelNorm,
) -> Result<Array1<f64>, ModelError> {
    if member.input_dim() != mode.input_dim() || member.output_dim() != mode.state_dim() {
        return Err(ModelError::Shape(format!(
            "{} mode needs a {}-input/{}-output network, member is {:?}",
            mode.as_str(),
            mode.input_dim(),
            mode.state_dim(),
            member.widths()
        )));
    }
    let x = Array1::from(input_row(mode, s, x_f_z));
    let xn = norm.input.normalize(x.view())?.insert_axis(Axis(0));
    let yn = member.forward(xn.view());
    norm.target.denormalize(yn.row(0))
}

impl EnsembleModel {
    /// Freshly initialised members; the model is not ready until trained.
    pub fn init(mode: StateMode, cfg: &NetworkConfig, seed: u64) -> Self {
        let widths = cfg.widths(mode);
        let members = (0..cfg.n_estimators)
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(member_seed(seed, m));
                Mlp::he_uniform(&widths, &mut rng)
            })
            .collect();
        Self {
            mode,
            members,
            norm: None,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.members.first().map(Mlp::widths).unwrap_or_default()
    }

    fn ready_norm(&self) -> Result<&ModelNorm, ModelError> {
        match &self.norm {
            Some(n) if !self.members.is_empty() => Ok(n),
            _ => Err(ModelError::NotReady),
        }
    }

    /// Per-member denormalised deltas for a batch of raw input rows.
    pub fn member_deltas(&self, inputs: &Array2<f64>) -> Result<Vec<Array2<f64>>, ModelError> {
        let norm = self.ready_norm()?;
        if inputs.ncols() != self.mode.input_dim() {
            return Err(ModelError::Shape(format!(
                "expected {} input columns, got {}",
                self.mode.input_dim(),
                inputs.ncols()
            )));
        }
        let xn = norm.input.normalize_rows(inputs.view())?;
        self.members
            .iter()
            .map(|m| norm.target.denormalize_rows(m.forward(xn.view()).view()))
            .collect()
    }

    /// Fused (averaged) deltas for a batch of raw input rows.
    pub fn fused_deltas(&self, inputs: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let deltas = self.member_deltas(inputs)?;
        let mut sum = deltas[0].clone();
        for d in &deltas[1..] {
            sum += d;
        }
        Ok(sum / deltas.len() as f64)
    }

    /// Fused normalised outputs for normalised inputs (training-space view).
    pub(crate) fn fused_normalized(&self, xn: &Array2<f64>) -> Array2<f64> {
        let mut sum = self.members[0].forward(xn.view());
        for m in &self.members[1..] {
            sum += &m.forward(xn.view());
        }
        sum / self.members.len() as f64
    }

    /// Predicted next states for paired `(state, setpoint)` queries.
    pub fn predict_batch(
        &self,
        states: &[StateSample],
        setpoints: &[f64],
    ) -> Result<Vec<StateSample>, ModelError> {
        if states.len() != setpoints.len() {
            return Err(ModelError::Shape(format!(
                "{} states but {} setpoints",
                states.len(),
                setpoints.len()
            )));
        }
        let dim = self.mode.input_dim();
        let mut flat = Vec::with_capacity(states.len() * dim);
        for (s, &x) in states.iter().zip(setpoints) {
            flat.extend(input_row(self.mode, s, x));
        }
        let inputs = Array2::from_shape_vec((states.len(), dim), flat).expect("row shape");
        let deltas = self.fused_deltas(&inputs)?;
        Ok(deltas
            .axis_iter(Axis(0))
            .zip(states.iter().zip(setpoints))
            .map(|(d, (s, &x))| {
                let mut next = self
                    .mode
                    .apply_delta(s, d.as_slice().expect("contiguous row"));
                next.x_f_z = x;
                next
            })
            .collect())
    }

    /// Fused delta for a single state and setpoint, feature-ordered.
    pub fn predict_delta(&self, s: &StateSample, x_c: f64) -> Result<Vec<f64>, ModelError> {
        let row = input_row(self.mode, s, x_c);
        let inputs = Array2::from_shape_vec((1, row.len()), row).expect("row shape");
        Ok(self.fused_deltas(&inputs)?.row(0).to_vec())
    }
}

pub(crate) fn member_seed(seed: u64, member: usize) -> u64 {
    // SplitMix64 finaliser over (seed, member).
    let mut z = seed ^ (member as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TransitionModel for EnsembleModel {
    fn state_mode(&self) -> StateMode {
        self.mode
    }

    fn is_ready(&self) -> bool {
        self.norm.is_some() && !self.members.is_empty()
    }

    fn predict_candidates(
        &self,
        s: &StateSample,
        candidates: &[f64],
    ) -> Result<Vec<StateSample>, ModelError> {
        let dim = self.mode.input_dim();
        let mut inputs = Array2::zeros((candidates.len(), dim));
        let base = input_row(self.mode, s, 0.0);
        for (mut row, &x_c) in inputs.axis_iter_mut(Axis(0)).zip(candidates) {
            for (dst, src) in row.iter_mut().zip(&base) {
                *dst = *src;
            }
            row[dim - 1] = x_c;
        }
        let deltas = self.fused_deltas(&inputs)?;
        Ok(deltas
            .axis_iter(Axis(0))
            .zip(candidates)
            .map(|(d, &x_c)| {
                let mut next = self
                    .mode
                    .apply_delta(s, d.as_slice().expect("contiguous row"));
                next.x_f_z = x_c;
                next
            })
            .collect())
    }
}
