use super::{GradientSet, MlpParams, NetError};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(p: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: GradientSet::zeros_like(p),
            v: GradientSet::zeros_like(p),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `p` with gradient `g`.
pub fn adam_step(p: &mut MlpParams, g: &GradientSet, st: &mut AdamState) -> Result<(), NetError> {
    if !g.matches(p) || !st.m.matches(p) || !st.v.matches(p) {
        return Err(NetError::ShapeMismatch);
    }
    st.t += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = st.config;
    let c1 = 1.0 - beta1.powi(st.t as i32);
    let c2 = 1.0 - beta2.powi(st.t as i32);
    for (((layer, g), m), v) in p
        .layers_mut()
        .iter_mut()
        .zip(&g.layers)
        .zip(&mut st.m.layers)
        .zip(&mut st.v.layers)
    {
        let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
        let grads = g.weights.iter().chain(&g.bias);
        let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
        let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
        for (((theta, &g), m), v) in params.zip(grads).zip(ms).zip(vs) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
