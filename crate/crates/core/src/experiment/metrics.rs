use super::ExperimentError;

/// Root-mean-square difference between two equally long series.
pub fn rmse(reference: &[f64], actual: &[f64]) -> Result<f64, ExperimentError> {
    if reference.len() != actual.len() {
        return Err(ExperimentError::Input(format!(
            "series lengths differ: {} vs {}",
            reference.len(),
            actual.len()
        )));
    }
    if reference.is_empty() {
        return Err(ExperimentError::Input("rmse of empty series".into()));
    }
    let sq: f64 = reference
        .iter()
        .zip(actual)
        .map(|(r, a)| (r - a) * (r - a))
        .sum();
    Ok((sq / reference.len() as f64).sqrt())
}

/// Improvement factor of a candidate over a baseline: `baseline / candidate`.
pub fn eta(baseline: f64, candidate: f64) -> f64 {
    baseline / candidate
}

/// Mean and sample standard deviation across trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Input(
            "cannot summarise an empty sample".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Summary { mean, std })
}

/// One velocity level of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// m/s
    pub velocity: f64,
    /// RMSE per method, N, in [`MetricsTable::methods`] order.
    pub rmse: Vec<Summary>,
    /// Improvement factors in [`MetricsTable::comparisons`] order.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub methods: Vec<String>,
    /// `(baseline, candidate)` method indices; each yields one eta column.
    pub comparisons: Vec<(usize, usize)>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    /// Builds a table from per-trajectory RMSE samples:
    /// `samples[row][method]` holds the values at `velocities[row]`.
    pub fn from_samples(
        methods: &[&str],
        comparisons: &[(usize, usize)],
        velocities: &[f64],
        samples: &[Vec<Vec<f64>>],
    ) -> Result<Self, ExperimentError> {
        if velocities.len() != samples.len() {
            return Err(ExperimentError::Input(
                "one sample set per velocity is required".into(),
            ));
        }
        let rows = velocities
            .iter()
            .zip(samples)
            .map(|(&velocity, per_method)| {
                if per_method.len() != methods.len() {
                    return Err(ExperimentError::Input(
                        "one sample per method is required".into(),
                    ));
                }
                let rmse = per_method
                    .iter()
                    .map(|s| summarize(s))
                    .collect::<Result<Vec<_>, _>>()?;
                let eta = comparisons
                    .iter()
                    .map(|&(b, c)| eta(rmse[b].mean, rmse[c].mean))
                    .collect();
                Ok(MetricsRow {
                    velocity,
                    rmse,
                    eta,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            methods: methods.iter().map(|m| m.to_string()).collect(),
            comparisons: comparisons.to_vec(),
            rows,
        })
    }

    pub fn eta_label(&self, i: usize) -> String {
        let (b, c) = self.comparisons[i];
        format!("eta_{}_vs_{}", self.methods[c], self.methods[b])
    }

    /// Column names in output order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["velocity".to_string()];
        for m in &self.methods {
            cols.push(format!("rmse_{m}_mean"));
            cols.push(format!("rmse_{m}_std"));
        }
        cols.extend((0..self.comparisons.len()).map(|i| self.eta_label(i)));
        cols
    }

    /// Row values in [`Self::columns`] order.
    pub fn values(&self, row: &MetricsRow) -> Vec<f64> {
        let mut v = vec![row.velocity];
        for s in &row.rmse {
            v.push(s.mean);
            v.push(s.std);
        }
        v.extend(&row.eta);
        v
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }
}
