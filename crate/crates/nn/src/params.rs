use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::EncoderConfig;

/// Affine map `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(input: usize, output: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: normal_matrix(input, output, std, rng),
            bias: Array1::zeros(output),
        }
    }

    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

/// Every trainable tensor of the encoder plus the classification head.
///
/// The same type doubles as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub word_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub token_type_embedding: Array1<f64>,
    pub embed_norm: LayerNorm,
    pub layers: Vec<LayerParams>,
    pub classifier: Linear,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl ModelParams {
    /// BERT-style initialisation: N(0, initializer_range) weights, zero biases,
    /// identity layer norms.
    pub fn init(config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = config.hidden_size;
        let std = config.initializer_range;
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                query: Linear::init(h, h, std, rng),
                key: Linear::init(h, h, std, rng),
                value: Linear::init(h, h, std, rng),
                attn_out: Linear::init(h, h, std, rng),
                attn_norm: LayerNorm::identity(h),
                ffn_in: Linear::init(h, config.intermediate_size, std, rng),
                ffn_out: Linear::init(config.intermediate_size, h, std, rng),
                ffn_norm: LayerNorm::identity(h),
            })
            .collect();
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        Self {
            word_embeddings: normal_matrix(config.vocab_size, h, std, rng),
            position_embeddings: normal_matrix(config.max_positions, h, std, rng),
            token_type_embedding: Array1::from_shape_simple_fn(h, || normal.sample(rng)),
            embed_norm: LayerNorm::identity(h),
            layers,
            classifier: Linear::init(h, config.num_labels, std, rng),
        }
    }

    /// Fresh classification head, leaving the encoder untouched.
    pub fn reset_classifier(&mut self, num_labels: usize, std: f64, rng: &mut impl Rng) {
        let h = self.word_embeddings.ncols();
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        self.classifier = Linear {
            weight: Array2::from_shape_simple_fn((h, num_labels), || normal.sample(rng)),
            bias: Array1::zeros(num_labels),
        };
    }

    pub fn zeros_like(&self) -> Self {
        let h = self.word_embeddings.ncols();
        let inter = self.layers.first().map_or(0, |l| l.ffn_in.weight.ncols());
        Self::zeros_with(
            self.word_embeddings.nrows(),
            self.position_embeddings.nrows(),
            h,
            inter,
            self.layers.len(),
            self.classifier.weight.ncols(),
        )
    }

    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self::zeros_with(
            config.vocab_size,
            config.max_positions,
            config.hidden_size,
            config.intermediate_size,
            config.num_layers,
            config.num_labels,
        )
    }

    fn zeros_with(vocab: usize, positions: usize, h: usize, inter: usize, num_layers: usize, labels: usize) -> Self {
        Self {
            word_embeddings: Array2::zeros((vocab, h)),
            position_embeddings: Array2::zeros((positions, h)),
            token_type_embedding: Array1::zeros(h),
            embed_norm: LayerNorm::zeros(h),
            layers: (0..num_layers)
                .map(|_| LayerParams {
                    query: Linear::zeros(h, h),
                    key: Linear::zeros(h, h),
                    value: Linear::zeros(h, h),
                    attn_out: Linear::zeros(h, h),
                    attn_norm: LayerNorm::zeros(h),
                    ffn_in: Linear::zeros(h, inter),
                    ffn_out: Linear::zeros(inter, h),
                    ffn_norm: LayerNorm::zeros(h),
                })
                .collect(),
            classifier: Linear::zeros(h, labels),
        }
    }

    /// Named flat views over every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("embeddings.word".into(), slice(&self.word_embeddings)),
            ("embeddings.position".into(), slice(&self.position_embeddings)),
            ("embeddings.token_type".into(), slice1(&self.token_type_embedding)),
            ("embeddings.norm.gamma".into(), slice1(&self.embed_norm.gamma)),
            ("embeddings.norm.beta".into(), slice1(&self.embed_norm.beta)),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, lin) in [
                ("query", &layer.query),
                ("key", &layer.key),
                ("value", &layer.value),
                ("attn_out", &layer.attn_out),
                ("ffn_in", &layer.ffn_in),
                ("ffn_out", &layer.ffn_out),
            ] {
                out.push((format!("layer{i}.{name}.weight"), slice(&lin.weight)));
                out.push((format!("layer{i}.{name}.bias"), slice1(&lin.bias)));
            }
            for (name, norm) in [("attn_norm", &layer.attn_norm), ("ffn_norm", &layer.ffn_norm)] {
                out.push((format!("layer{i}.{name}.gamma"), slice1(&norm.gamma)));
                out.push((format!("layer{i}.{name}.beta"), slice1(&norm.beta)));
            }
        }
        out.push(("classifier.weight".into(), slice(&self.classifier.weight)));
        out.push(("classifier.bias".into(), slice1(&self.classifier.bias)));
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("embeddings.word".into(), slice_mut(&mut self.word_embeddings)),
            ("embeddings.position".into(), slice_mut(&mut self.position_embeddings)),
            (
                "embeddings.token_type".into(),
                slice1_mut(&mut self.token_type_embedding),
            ),
            ("embeddings.norm.gamma".into(), slice1_mut(&mut self.embed_norm.gamma)),
            ("embeddings.norm.beta".into(), slice1_mut(&mut self.embed_norm.beta)),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let LayerParams {
                query,
                key,
                value,
                attn_out,
                attn_norm,
                ffn_in,
                ffn_out,
                ffn_norm,
            } = layer;
            for (name, lin) in [
                ("query", query),
                ("key", key),
                ("value", value),
                ("attn_out", attn_out),
                ("ffn_in", ffn_in),
                ("ffn_out", ffn_out),
            ] {
                out.push((format!("layer{i}.{name}.weight"), slice_mut(&mut lin.weight)));
                out.push((format!("layer{i}.{name}.bias"), slice1_mut(&mut lin.bias)));
            }
            for (name, norm) in [("attn_norm", attn_norm), ("ffn_norm", ffn_norm)] {
                out.push((format!("layer{i}.{name}.gamma"), slice1_mut(&mut norm.gamma)));
                out.push((format!("layer{i}.{name}.beta"), slice1_mut(&mut norm.beta)));
            }
        }
        out.push(("classifier.weight".into(), slice_mut(&mut self.classifier.weight)));
        out.push(("classifier.bias".into(), slice1_mut(&mut self.classifier.bias)));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Hex SHA-256 over the bit patterns of every parameter, in tensor order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.tensors() {
            hasher.update(name.as_bytes());
            for v in t {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn tensor_views_agree_in_order_and_size() {
        let config = EncoderConfig::tiny(20, 3);
        let mut params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(1));
        let names: Vec<_> = params.tensors().into_iter().map(|(n, t)| (n, t.len())).collect();
        let names_mut: Vec<_> = params.tensors_mut().into_iter().map(|(n, t)| (n, t.len())).collect();
        assert_eq!(names, names_mut);
        let zeros = params.zeros_like();
        assert_eq!(zeros.num_parameters(), params.num_parameters());
        assert_eq!(zeros.l2_norm(), 0.0);
    }

    #[test]
    fn hash_tracks_single_coordinate_changes() {
        let config = EncoderConfig::tiny(10, 2);
        let mut params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(7));
        let before = params.content_hash();
        assert_eq!(before, params.clone().content_hash());
        params.classifier.bias[1] += 1e-12;
        assert_ne!(before, params.content_hash());
    }
}
