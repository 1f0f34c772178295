use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Fully connected layer, `y = x W + b` with `W` stored `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Zero-initialised network with the given layer widths, inputs first.
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        Self {
            layers: widths
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// He-style uniform initialisation, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weights.mapv_inplace(|_| dist.sample(rng));
        }
        net
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }

    /// Mean squared error over all batch elements and its exact gradient with
    /// respect to every weight and bias. The gradient has the shape of `self`.
    pub fn backprop(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Mlp) {
        let last = self.layers.len() - 1;
        // activations[i] is the input to layer i; the final entry is the output.
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            activations.push(z);
        }

        let output = &activations[self.layers.len()];
        let n = output.len() as f64;
        let diff = output - &target;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;

        let mut delta = diff * (2.0 / n);
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            let g_w = input.t().dot(&delta);
            let g_b = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].weights.t());
                // ReLU derivative from the stored post-activation.
                Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
            grads.push(Dense {
                weights: g_w,
                bias: g_b,
            });
        }
        grads.reverse();
        (loss, Mlp { layers: grads })
    }

    /// Mutable flat views of every parameter tensor, in a fixed order.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_two_by_two() {
        let net = Mlp {
            layers: vec![Dense {
                weights: array![[1.0, 2.0], [3.0, 4.0]],
                bias: array![0.5, -0.5],
            }],
        };
        let y = net.forward(array![[1.0, -1.0]].view());
        // [1, -1] W = [1 - 3, 2 - 4] = [-2, -2]
        assert_eq!(y, array![[-1.5, -2.5]]);
    }

    #[test]
    fn hidden_relu_clips_negative() {
        let net = Mlp {
            layers: vec![
                Dense {
                    weights: array![[1.0, -1.0]],
                    bias: array![0.0, 0.0],
                },
                Dense {
                    weights: array![[1.0], [1.0]],
                    bias: array![0.0],
                },
            ],
        };
        assert_eq!(net.forward(array![[2.0]].view()), array![[2.0]]);
        assert_eq!(net.forward(array![[-3.0]].view()), array![[3.0]]);
    }

    #[test]
    fn single_neuron_gradient() {
        let net = Mlp {
            layers: vec![Dense {
                weights: array![[0.5], [-1.0]],
                bias: array![0.25],
            }],
        };
        let x = array![[2.0, 3.0]];
        let y = array![[1.0]];
        let (loss, g) = net.backprop(x.view(), y.view());
        let pred = 0.5 * 2.0 - 3.0 + 0.25;
        assert_abs_diff_eq!(loss, (pred - 1.0f64).powi(2), epsilon = 1e-15);
        let r = 2.0 * (pred - 1.0);
        assert_abs_diff_eq!(g.layers[0].weights[[0, 0]], r * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.layers[0].weights[[1, 0]], r * 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.layers[0].bias[0], r, epsilon = 1e-15);
    }

    #[test]
    fn stationary_at_least_squares_solution() {
        // y = 2 x + 1 fitted exactly: residuals vanish, so do gradients.
        let net = Mlp {
            layers: vec![Dense {
                weights: array![[2.0]],
                bias: array![1.0],
            }],
        };
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = x.mapv(|v| 2.0 * v + 1.0);
        let (loss, g) = net.backprop(x.view(), y.view());
        assert_eq!(loss, 0.0);
        assert!(g
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn overdetermined_fit_is_stationary() {
        // Least-squares line through noisy points has zero gradient.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 6.8, 9.1];
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let net = Mlp {
            layers: vec![Dense {
                weights: array![[slope]],
                bias: array![intercept],
            }],
        };
        let x = Array2::from_shape_vec((5, 1), xs.to_vec()).unwrap();
        let y = Array2::from_shape_vec((5, 1), ys.to_vec()).unwrap();
        let (loss, g) = net.backprop(x.view(), y.view());
        assert!(loss > 0.0);
        assert!(g
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn he_init_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::he_uniform(&[4, 16, 3], &mut rng);
        let bound0 = (6.0f64 / 4.0).sqrt();
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= bound0));
        assert!(net.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(net.widths(), vec![4, 16, 3]);
        assert_eq!(net.parameter_count(), 4 * 16 + 16 + 16 * 3 + 3);
    }
}
