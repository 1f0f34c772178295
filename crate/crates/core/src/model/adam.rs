use super::mlp::Mlp;
use super::ModelError;

/// Moment accumulators for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Mlp,
    pub v: Mlp,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed accumulators shaped like `weights`, with the usual constants.
    pub fn new(weights: &Mlp) -> Self {
        let widths = weights.widths();
        Self {
            m: Mlp::zeros(&widths),
            v: Mlp::zeros(&widths),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update of `weights` in place.
pub fn adam_step(
    weights: &mut Mlp,
    grads: &Mlp,
    st: &mut AdamState,
    lr: f64,
) -> Result<(), ModelError> {
    let shape = weights.widths();
    if grads.widths() != shape || st.m.widths() != shape || st.v.widths() != shape {
        return Err(ModelError::Shape(format!(
            "adam: weights {shape:?}, grads {:?}, moments {:?}",
            grads.widths(),
            st.m.widths()
        )));
    }
    st.t += 1;
    let (b1, b2, eps) = (st.beta1, st.beta2, st.epsilon);
    let c1 = 1.0 - b1.powi(st.t as i32);
    let c2 = 1.0 - b2.powi(st.t as i32);

    let g_tensors = grads.tensors();
    let m_tensors = st.m.tensors_mut();
    let v_tensors = st.v.tensors_mut();
    for (((w, g), m), v) in weights
        .tensors_mut()
        .into_iter()
        .zip(g_tensors)
        .zip(m_tensors)
        .zip(v_tensors)
    {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
