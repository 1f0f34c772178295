use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::rollout::Rollout;
use super::DataError;
use crate::model::{StateMode, StateSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One `(s_k, x_f,k, s_{k+1} - s_k)` tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Index of the source rollout within the assembled corpus.
    pub rollout: u32,
    /// Step index within the source rollout.
    pub step: u32,
    /// `s_k`, with `x_f_z` the setpoint applied during the step.
    pub state: StateSample,
    /// `(dz, dz_dot, dv, df_z)`; `dv` is 0 in static mode.
    pub delta: [f64; 4],
}

impl Transition {
    pub fn next_state(&self) -> StateSample {
        StateSample {
            z: self.state.z + self.delta[0],
            z_dot: self.state.z_dot + self.delta[1],
            v: self.state.v + self.delta[2],
            f_z: self.state.f_z + self.delta[3],
            x_f_z: self.state.x_f_z,
        }
    }

    /// Delta in the feature order of `mode`.
    pub fn delta_features(&self, mode: StateMode) -> Vec<f64> {
        match mode {
            StateMode::Static => vec![self.delta[0], self.delta[1], self.delta[3]],
            StateMode::Dynamic => self.delta.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: StateMode,
    pub split: Split,
    /// Where normalisation statistics for this data should come from.
    pub norm_source: String,
    pub tuples: Vec<Transition>,
}

impl Dataset {
    pub fn empty(mode: StateMode, split: Split) -> Self {
        Self {
            mode,
            split,
            norm_source: Split::Train.as_str().into(),
            tuples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Raw network inputs (state features, setpoint) and delta targets.
    pub fn matrices(&self) -> (Array2<f64>, Array2<f64>) {
        let (n_in, n_out) = (self.mode.input_dim(), self.mode.state_dim());
        let mut x = Vec::with_capacity(self.len() * n_in);
        let mut y = Vec::with_capacity(self.len() * n_out);
        for t in &self.tuples {
            x.extend(self.mode.features(&t.state));
            x.push(t.state.x_f_z);
            y.extend(t.delta_features(self.mode));
        }
        (
            Array2::from_shape_vec((self.len(), n_in), x).expect("input shape"),
            Array2::from_shape_vec((self.len(), n_out), y).expect("target shape"),
        )
    }

    /// Distinct source rollouts, in order of first appearance.
    pub fn rollout_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = Vec::new();
        for t in &self.tuples {
            if ids.last() != Some(&t.rollout) && !ids.contains(&t.rollout) {
                ids.push(t.rollout);
            }
        }
        ids
    }
}

fn check_compatible(rollouts: &[&Rollout]) -> Result<(StateMode, f64), DataError> {
    let first = rollouts
        .first()
        .ok_or_else(|| DataError::Shape("no rollouts to assemble".into()))?;
    let (mode, dt) = (first.meta.mode, first.meta.dt);
    for r in rollouts {
        if r.meta.mode != mode {
            return Err(DataError::Shape(format!(
                "mixed state modes: {} and {}",
                mode.as_str(),
                r.meta.mode.as_str()
            )));
        }
        if (r.meta.dt - dt).abs() > 1e-12 * dt {
            return Err(DataError::Shape(format!(
                "mixed control periods: {dt} and {}",
                r.meta.dt
            )));
        }
    }
    Ok((mode, dt))
}

fn tuples_of(r: &Rollout, id: u32, mode: StateMode) -> impl Iterator<Item = Transition> + '_ {
    r.samples.windows(2).enumerate().map(move |(k, w)| {
        let (mut a, mut b) = (w[0].state, w[1].state);
        // The transition was driven by the setpoint actually applied, which
        // equals the force-controller output unless an optimizer corrected it.
        a.x_f_z = w[0].x_c_z;
        if mode == StateMode::Static {
            a.v = 0.0;
            b.v = 0.0;
        }
        Transition {
            rollout: id,
            step: k as u32,
            state: a,
            delta: [b.z - a.z, b.z_dot - a.z_dot, b.v - a.v, b.f_z - a.f_z],
        }
    })
}

/// Per-step delta tuples from `rollouts`, all placed in `split`. Rollout ids
/// are the positions in `rollouts`.
pub fn assemble_dataset(rollouts: &[Rollout], split: Split) -> Result<Dataset, DataError> {
    let refs: Vec<&Rollout> = rollouts.iter().collect();
    let (mode, _) = check_compatible(&refs)?;
    let tuples = rollouts
        .iter()
        .enumerate()
        .flat_map(|(i, r)| tuples_of(r, i as u32, mode))
        .collect();
    Ok(Dataset {
        mode,
        split,
        norm_source: Split::Train.as_str().into(),
        tuples,
    })
}

/// Whole-rollout split: the first `n_train` rollouts train, the rest validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDatasets {
    pub train: Dataset,
    pub validation: Dataset,
}

pub fn assemble_split(rollouts: &[Rollout], spec: SplitSpec) -> Result<SplitDatasets, DataError> {
    if rollouts.len() != spec.train + spec.validation {
        return Err(DataError::Shape(format!(
            "split {}/{} needs {} rollouts, got {}",
            spec.train,
            spec.validation,
            spec.train + spec.validation,
            rollouts.len()
        )));
    }
    let refs: Vec<&Rollout> = rollouts.iter().collect();
    let (mode, _) = check_compatible(&refs)?;
    let build = |range: std::ops::Range<usize>, split| Dataset {
        mode,
        split,
        norm_source: Split::Train.as_str().into(),
        tuples: range
            .flat_map(|i| tuples_of(&rollouts[i], i as u32, mode))
            .collect(),
    };
    Ok(SplitDatasets {
        train: build(0..spec.train, Split::Train),
        validation: build(spec.train..rollouts.len(), Split::Validation),
    })
}

/// `n` seeded draws from `N(0, sigma)`.
pub fn force_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Perturbs every force measurement with seeded Gaussian noise. Consecutive
/// tuples of one rollout share the measurement between them, so the noise on
/// `f_{k+1}` enters both the delta of tuple `k` and the state of tuple `k+1`.
pub fn add_force_noise(dataset: &Dataset, sigma: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::Shape(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    let mut out = dataset.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carried: Option<(u32, u32, f64)> = None;
    for t in &mut out.tuples {
        let here = match carried {
            Some((r, s, n)) if r == t.rollout && s + 1 == t.step => n,
            _ => normal.sample(&mut rng),
        };
        let next = normal.sample(&mut rng);
        t.state.f_z += here;
        t.delta[3] += next - here;
        carried = Some((t.rollout, t.step, next));
    }
    Ok(out)
}
