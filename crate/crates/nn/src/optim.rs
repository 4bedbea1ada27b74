use serde::{Deserialize, Serialize};

use crate::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
///
/// Biases and layer-norm parameters are excluded from decay.
pub struct AdamW {
    config: AdamWConfig,
    first: ModelParams,
    second: ModelParams,
    steps: u64,
}

fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"))
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.steps += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.steps as i32);
        let bias2 = 1.0 - beta2.powi(self.steps as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().into_iter().zip(self.second.tensors_mut()));
        for (((name, p), (_, g)), ((_, m), (_, v))) in tensors {
            let decay = if decays(&name) { lr * weight_decay } else { 0.0 };
            for i in 0..p.len() {
                p[i] -= decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let total = grads.l2_norm();
    if total > max_norm {
        let scale = max_norm / (total + 1e-6);
        for (_, g) in grads.tensors_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EncoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clipping_bounds_the_norm() {
        let config = EncoderConfig::tiny(8, 2);
        let mut grads = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(0));
        let before = clip_grad_norm(&mut grads, 1.0);
        assert!(before > 1.0);
        assert!((grads.l2_norm() - 1.0).abs() < 1e-5);
        let norm = grads.l2_norm();
        clip_grad_norm(&mut grads, 10.0);
        assert_eq!(grads.l2_norm(), norm);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        // With bias correction the first Adam update is lr * sign(g).
        let config = EncoderConfig::tiny(8, 2);
        let mut params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(1));
        let mut grads = params.zeros_like();
        grads.classifier.bias[0] = 0.5;
        grads.classifier.bias[1] = -2.0;
        let before = params.clone();
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
            &params,
        );
        opt.step(&mut params, &grads, 1e-3);
        assert!((params.classifier.bias[0] - (before.classifier.bias[0] - 1e-3)).abs() < 1e-9);
        assert!((params.classifier.bias[1] - (before.classifier.bias[1] + 1e-3)).abs() < 1e-9);
        assert_eq!(params.layers[0].query.weight, before.layers[0].query.weight);
    }

    #[test]
    fn weight_decay_is_decoupled_and_skips_biases() {
        let config = EncoderConfig::tiny(8, 2);
        let mut params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(2));
        params.classifier.bias.fill(1.0);
        let grads = params.zeros_like();
        let before = params.clone();
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.1,
                ..Default::default()
            },
            &params,
        );
        opt.step(&mut params, &grads, 0.5);
        let expected = &before.classifier.weight * 0.95;
        for (a, b) in params.classifier.weight.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(params.classifier.bias, before.classifier.bias);
        assert_eq!(params.embed_norm.gamma, before.embed_norm.gamma);
    }
}
