use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ModelError;

/// Per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl NormStats {
    pub fn new(mean: Array1<f64>, std: Array1<f64>) -> Result<Self, ModelError> {
        if mean.len() != std.len() {
            return Err(ModelError::Shape(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(i) = std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(ModelError::DegenerateData(format!(
                "feature {i} has non-positive standard deviation {}",
                std[i]
            )));
        }
        Ok(Self { mean, std })
    }

    /// Population statistics of the rows of `data`. Zero-variance columns are
    /// rejected unless `allow_constant`, in which case their scale is 1.
    pub fn fit(data: ArrayView2<f64>, allow_constant: bool) -> Result<Self, ModelError> {
        if data.nrows() == 0 {
            return Err(ModelError::DegenerateData("no samples".into()));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let mut std = data.std_axis(Axis(0), 0.0);
        for (i, s) in std.iter_mut().enumerate() {
            if !s.is_finite() {
                return Err(ModelError::DegenerateData(format!(
                    "feature {i} is not finite"
                )));
            }
            // Relative threshold: constant columns can leave rounding residue.
            if *s <= 1e-12 * mean[i].abs().max(f64::MIN_POSITIVE) {
                if allow_constant {
                    *s = 1.0;
                } else {
                    return Err(ModelError::DegenerateData(format!(
                        "feature {i} has zero variance"
                    )));
                }
            }
        }
        Self::new(mean, std)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, n: usize) -> Result<(), ModelError> {
        if n != self.dim() {
            return Err(ModelError::Shape(format!(
                "expected {} features, got {n}",
                self.dim()
            )));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(ModelError::DegenerateData("zero standard deviation".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check(x.len())?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn denormalize(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        self.check(x.len())?;
        Ok(&x * &self.std + &self.mean)
    }

    /// Row-wise normalisation of a batch.
    pub fn normalize_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check(x.ncols())?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn denormalize_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check(x.ncols())?;
        Ok(&x * &self.std + &self.mean)
    }
}
