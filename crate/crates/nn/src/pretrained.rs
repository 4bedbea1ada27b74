use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde_json::Value;

use crate::{EncoderConfig, HfTokenizer, LayerNorm, Linear, ModelParams, NnError, Result};

/// A pretrained encoder checkpoint with a freshly initialised head.
pub struct PretrainedBundle {
    pub config: EncoderConfig,
    pub params: ModelParams,
    pub tokenizer: HfTokenizer,
}

fn ckpt_err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

/// Writes parameters as little-endian f64 tensors keyed by
/// [`ModelParams::tensors`] names.
pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let shapes = shapes(params);
    let bytes: Vec<(String, Vec<u8>)> = params
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.iter().flat_map(|v| v.to_le_bytes()).collect()))
        .collect();
    let views = bytes
        .iter()
        .map(|(name, data)| {
            let view = TensorView::new(Dtype::F64, shapes[name].clone(), data)
                .map_err(|e| ckpt_err(format!("{name}: {e}")))?;
            Ok((name.clone(), view))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize_to_file(views, &None, path.as_ref()).map_err(|e| ckpt_err(e.to_string()))
}

fn shapes(params: &ModelParams) -> HashMap<String, Vec<usize>> {
    let mut out = HashMap::new();
    let h = params.word_embeddings.ncols();
    out.insert("embeddings.word".into(), params.word_embeddings.shape().to_vec());
    out.insert(
        "embeddings.position".into(),
        params.position_embeddings.shape().to_vec(),
    );
    for (name, _) in params.tensors() {
        out.entry(name).or_insert_with(|| vec![h]);
    }
    for (i, layer) in params.layers.iter().enumerate() {
        for (name, lin) in [
            ("query", &layer.query),
            ("key", &layer.key),
            ("value", &layer.value),
            ("attn_out", &layer.attn_out),
            ("ffn_in", &layer.ffn_in),
            ("ffn_out", &layer.ffn_out),
        ] {
            out.insert(format!("layer{i}.{name}.weight"), lin.weight.shape().to_vec());
            out.insert(format!("layer{i}.{name}.bias"), lin.bias.shape().to_vec());
        }
    }
    out.insert("classifier.weight".into(), params.classifier.weight.shape().to_vec());
    out.insert("classifier.bias".into(), params.classifier.bias.shape().to_vec());
    out
}

/// Reads parameters written by [`save_params`] into a model shaped by `config`.
pub fn load_params(path: impl AsRef<Path>, config: &EncoderConfig) -> Result<ModelParams> {
    let buffer = std::fs::read(path.as_ref())?;
    let file = SafeTensors::deserialize(&buffer).map_err(|e| ckpt_err(e.to_string()))?;
    let mut params = ModelParams::zeros(config);
    for (name, dst) in params.tensors_mut() {
        let view = file
            .tensor(&name)
            .map_err(|_| ckpt_err(format!("missing tensor {name}")))?;
        let values = to_f64(&view, &name)?;
        if values.len() != dst.len() {
            return Err(ckpt_err(format!(
                "{name}: expected {} values, found {}",
                dst.len(),
                values.len()
            )));
        }
        dst.copy_from_slice(&values);
    }
    Ok(params)
}

fn f16_to_f64(bits: u16) -> f64 {
    let sign = if bits & 0x8000 != 0 { -1.0 } else { 1.0 };
    let exp = ((bits >> 10) & 0x1f) as i32;
    let frac = (bits & 0x3ff) as f64;
    match exp {
        0 => sign * frac * 2f64.powi(-24),
        31 if frac == 0.0 => sign * f64::INFINITY,
        31 => f64::NAN,
        _ => sign * (1.0 + frac / 1024.0) * 2f64.powi(exp - 15),
    }
}

fn to_f64(view: &TensorView<'_>, name: &str) -> Result<Vec<f64>> {
    let data = view.data();
    let values = match view.dtype() {
        Dtype::F64 => data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        Dtype::F32 => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect(),
        Dtype::F16 => data
            .chunks_exact(2)
            .map(|c| f16_to_f64(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|c| f32::from_bits((u16::from_le_bytes([c[0], c[1]]) as u32) << 16) as f64)
            .collect(),
        other => return Err(ckpt_err(format!("{name}: unsupported dtype {other:?}"))),
    };
    Ok(values)
}

fn usize_field(config: &Value, key: &str) -> Result<usize> {
    config
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| ckpt_err(format!("config.json lacks integer field `{key}`")))
}

fn f64_field(config: &Value, key: &str, default: f64) -> f64 {
    config.get(key).and_then(Value::as_f64).unwrap_or(default)
}

/// Maps a HuggingFace `config.json` onto [`EncoderConfig`].
pub fn encoder_config_from_hf(config: &Value, num_labels: usize) -> Result<EncoderConfig> {
    let act = config.get("hidden_act").and_then(Value::as_str).unwrap_or("gelu");
    if act != "gelu" {
        return Err(ckpt_err(format!("unsupported activation `{act}` (only exact gelu)")));
    }
    let model_type = config.get("model_type").and_then(Value::as_str).unwrap_or("bert");
    let pad = config.get("pad_token_id").and_then(Value::as_u64).unwrap_or(0) as usize;
    let position_offset = if model_type.contains("roberta") { pad + 1 } else { 0 };
    let out = EncoderConfig {
        vocab_size: usize_field(config, "vocab_size")?,
        hidden_size: usize_field(config, "hidden_size")?,
        num_layers: usize_field(config, "num_hidden_layers")?,
        num_heads: usize_field(config, "num_attention_heads")?,
        intermediate_size: usize_field(config, "intermediate_size")?,
        max_positions: usize_field(config, "max_position_embeddings")?,
        position_offset,
        layer_norm_eps: f64_field(config, "layer_norm_eps", 1e-12),
        hidden_dropout: f64_field(config, "hidden_dropout_prob", 0.1),
        attention_dropout: f64_field(config, "attention_probs_dropout_prob", 0.1),
        initializer_range: f64_field(config, "initializer_range", 0.02),
        num_labels,
    };
    out.validate()?;
    Ok(out)
}

struct HfTensors<'a> {
    file: SafeTensors<'a>,
    prefix: String,
}

impl HfTensors<'_> {
    fn get(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let full = format!("{}{name}", self.prefix);
        let view = self
            .file
            .tensor(&full)
            .map_err(|_| ckpt_err(format!("missing tensor {full}")))?;
        Ok((view.shape().to_vec(), to_f64(&view, &full)?))
    }

    /// First existing name among `names`, for LayerNorm.weight vs gamma.
    fn get_any(&self, names: &[String]) -> Result<(Vec<usize>, Vec<f64>)> {
        for name in names {
            if self.file.tensor(&format!("{}{name}", self.prefix)).is_ok() {
                return self.get(name);
            }
        }
        Err(ckpt_err(format!("none of {names:?} found")))
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let (shape, data) = self.get(name)?;
        if shape != [rows, cols] {
            return Err(ckpt_err(format!("{name}: expected [{rows}, {cols}], got {shape:?}")));
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    }

    fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        let (shape, data) = self.get(name)?;
        if shape != [len] {
            return Err(ckpt_err(format!("{name}: expected [{len}], got {shape:?}")));
        }
        Ok(Array1::from_vec(data))
    }

    /// PyTorch stores `nn.Linear` weights as `out x in`.
    fn linear(&self, name: &str, input: usize, output: usize) -> Result<Linear> {
        let weight = self.matrix(&format!("{name}.weight"), output, input)?;
        Ok(Linear {
            weight: weight.reversed_axes().as_standard_layout().to_owned(),
            bias: self.vector(&format!("{name}.bias"), output)?,
        })
    }

    fn norm(&self, name: &str, dim: usize) -> Result<LayerNorm> {
        let pick = |a: &str, b: &str| {
            let (shape, data) = self.get_any(&[format!("{name}.{a}"), format!("{name}.{b}")])?;
            if shape != [dim] {
                return Err(ckpt_err(format!("{name}: expected [{dim}], got {shape:?}")));
            }
            Ok(Array1::from_vec(data))
        };
        Ok(LayerNorm {
            gamma: pick("weight", "gamma")?,
            beta: pick("bias", "beta")?,
        })
    }
}

/// Loads a HuggingFace BERT/RoBERTa snapshot directory containing
/// `config.json`, `model.safetensors` and `tokenizer.json`.
///
/// The encoder weights are copied; the classification head is a new
/// `hidden -> num_labels` linear layer drawn from `seed`.
pub fn load_pretrained(dir: impl AsRef<Path>, num_labels: usize, seed: u64) -> Result<PretrainedBundle> {
    let dir = dir.as_ref();
    let raw: Value = serde_json::from_slice(&std::fs::read(dir.join("config.json"))?)?;
    let config = encoder_config_from_hf(&raw, num_labels)?;
    let buffer = std::fs::read(dir.join("model.safetensors"))?;
    let file = SafeTensors::deserialize(&buffer).map_err(|e| ckpt_err(e.to_string()))?;
    let prefix = ["roberta.", "bert.", ""]
        .into_iter()
        .find(|p| file.tensor(&format!("{p}embeddings.word_embeddings.weight")).is_ok())
        .ok_or_else(|| ckpt_err("no embeddings.word_embeddings.weight tensor"))?
        .to_string();
    let t = HfTensors { file, prefix };
    let h = config.hidden_size;
    let inter = config.intermediate_size;

    let (tt_shape, tt) = t.get("embeddings.token_type_embeddings.weight")?;
    if tt_shape.len() != 2 || tt_shape[1] != h {
        return Err(ckpt_err(format!("token type embeddings have shape {tt_shape:?}")));
    }
    let mut layers = Vec::with_capacity(config.num_layers);
    for i in 0..config.num_layers {
        let base = format!("encoder.layer.{i}");
        layers.push(crate::LayerParams {
            query: t.linear(&format!("{base}.attention.self.query"), h, h)?,
            key: t.linear(&format!("{base}.attention.self.key"), h, h)?,
            value: t.linear(&format!("{base}.attention.self.value"), h, h)?,
            attn_out: t.linear(&format!("{base}.attention.output.dense"), h, h)?,
            attn_norm: t.norm(&format!("{base}.attention.output.LayerNorm"), h)?,
            ffn_in: t.linear(&format!("{base}.intermediate.dense"), h, inter)?,
            ffn_out: t.linear(&format!("{base}.output.dense"), inter, h)?,
            ffn_norm: t.norm(&format!("{base}.output.LayerNorm"), h)?,
        });
    }
    let mut params = ModelParams {
        word_embeddings: t.matrix("embeddings.word_embeddings.weight", config.vocab_size, h)?,
        position_embeddings: t.matrix("embeddings.position_embeddings.weight", config.max_positions, h)?,
        token_type_embedding: Array1::from_vec(tt[..h].to_vec()),
        embed_norm: t.norm("embeddings.LayerNorm", h)?,
        layers,
        classifier: Linear {
            weight: Array2::zeros((h, num_labels)),
            bias: Array1::zeros(num_labels),
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params.reset_classifier(num_labels, config.initializer_range, &mut rng);
    let tokenizer = HfTokenizer::from_file(dir.join("tokenizer.json"))?;
    Ok(PretrainedBundle {
        config,
        params,
        tokenizer,
    })
}
