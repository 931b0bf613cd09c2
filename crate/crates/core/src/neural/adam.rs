use serde::{Deserialize, Serialize};

use super::network::NetworkParams;
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: NetworkParams,
    pub second_moment: NetworkParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
) -> Result<(), NeuralError> {
    let shapes_match = |a: &NetworkParams, b: &NetworkParams| {
        a.tensors()
            .iter()
            .zip(b.tensors())
            .all(|((_, x), (_, y))| x.shape() == y.shape())
    };
    if !shapes_match(params, grads) || !shapes_match(params, &state.first_moment) {
        return Err(NeuralError::Shape("adam: gradient/parameter shapes differ".into()));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let moments = state
        .first_moment
        .tensors_mut()
        .into_iter()
        .zip(state.second_moment.tensors_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(moments)
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetConfig {
        NetConfig { macro_hidden: 4, macro_embed: 4, lstm_hidden: 4, head_hidden: 4 }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = NetworkParams::new(&tiny(), 5, 11, &mut rng);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut p, &before.zeros_like(), &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = NetworkParams::zeros(&tiny(), 5, 11);
        let mut g = p.zeros_like();
        g.vol_out.bias.data_mut()[0] = 1.0;
        let mut st = AdamState::new(&p, AdamConfig { learning_rate: 0.1, ..AdamConfig::default() });
        adam_step(&mut p, &g, &mut st).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let moved = p.vol_out.bias.data()[0];
        assert!((moved + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p.vol_out.bias.data()[0] + 0.2).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = NetworkParams::zeros(&tiny(), 5, 11);
        let g = NetworkParams::zeros(&tiny(), 3, 11);
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }
}
