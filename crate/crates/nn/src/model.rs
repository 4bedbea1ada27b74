use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{EncoderConfig, LayerNorm, ModelParams, NnError, Result};

/// Forward-pass mode. Dropout only fires in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn dropout_mask(&mut self, shape: (usize, usize), p: f64) -> Option<Array2<f64>> {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_simple_fn(shape, || {
                    if rng.gen::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
            _ => None,
        }
    }
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    probs_masks: Vec<Option<Array2<f64>>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    attn_norm: NormCache,
    h1: Array2<f64>,
    ffn_pre: Array2<f64>,
    ffn_act: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
    ffn_norm: NormCache,
}

/// Activations retained by [`SequenceClassifier::forward`] for backprop and
/// attention inspection.
pub struct ForwardCache {
    ids: Vec<u32>,
    embed_norm: NormCache,
    embed_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    cls: Array1<f64>,
    cls_mask: Option<Array2<f64>>,
    logits: Array1<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array1<f64> {
        &self.logits
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Per-head attention probabilities of `layer`, each `T x T` with query
    /// rows. Values are pre-dropout.
    pub fn attention(&self, layer: usize) -> Option<&[Array2<f64>]> {
        self.layers.get(layer).map(|l| l.probs.as_slice())
    }

    pub fn sequence_len(&self) -> usize {
        self.ids.len()
    }
}

/// Encoder plus linear head over the first (`<s>` / `[CLS]`) position.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassifier {
    pub config: EncoderConfig,
    pub params: ModelParams,
}

fn layer_norm(x: &Array2<f64>, norm: &LayerNorm, eps: f64) -> (Array2<f64>, NormCache) {
    let h = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / h;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / h;
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &norm.gamma + &norm.beta;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &NormCache, norm: &LayerNorm, grad: &mut LayerNorm) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let h = dy.ncols() as f64;
    let dxhat = dy * &norm.gamma;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / h;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / h;
    let inner = &dxhat - &mean_dxhat.insert_axis(Axis(1)) - &(&cache.xhat * &mean_dxhat_xhat.insert_axis(Axis(1)));
    inner * &cache.inv_std.view().insert_axis(Axis(1))
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

fn affine(x: ArrayView2<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    x.dot(weight) + bias
}

impl SequenceClassifier {
    pub fn new(config: EncoderConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        let checks = [
            (params.word_embeddings.dim(), (config.vocab_size, h), "word embeddings"),
            (
                params.position_embeddings.dim(),
                (config.max_positions, h),
                "position embeddings",
            ),
            (params.classifier.weight.dim(), (h, config.num_labels), "classifier"),
        ];
        for (got, want, what) in checks {
            if got != want {
                return Err(NnError::Shape(format!("{what}: expected {want:?}, got {got:?}")));
            }
        }
        if params.layers.len() != config.num_layers {
            return Err(NnError::Shape(format!(
                "expected {} layers, got {}",
                config.num_layers,
                params.layers.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn random(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Ok(Self { config, params })
    }

    pub fn forward(&self, ids: &[u32], mut mode: Mode<'_>) -> Result<ForwardCache> {
        let cfg = &self.config;
        let p = &self.params;
        let t = ids.len();
        if t == 0 {
            return Err(NnError::Shape("empty token sequence".into()));
        }
        if t > cfg.max_sequence_len() {
            return Err(NnError::Shape(format!(
                "sequence of {t} tokens exceeds the {} supported positions",
                cfg.max_sequence_len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(NnError::Shape(format!(
                "token id {bad} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        let h = cfg.hidden_size;
        let d = cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();

        let mut embedded = Array2::<f64>::zeros((t, h));
        for (pos, &id) in ids.iter().enumerate() {
            let mut row = embedded.row_mut(pos);
            row += &p.word_embeddings.row(id as usize);
            row += &p.position_embeddings.row(cfg.position_offset + pos);
            row += &p.token_type_embedding;
        }
        let (x, embed_norm) = layer_norm(&embedded, &p.embed_norm, cfg.layer_norm_eps);
        let embed_mask = mode.dropout_mask((t, h), cfg.hidden_dropout);
        let mut x = apply_mask(x, &embed_mask);

        let mut layers = Vec::with_capacity(cfg.num_layers);
        for lp in &p.layers {
            let q = affine(x.view(), &lp.query.weight, &lp.query.bias);
            let k = affine(x.view(), &lp.key.weight, &lp.key.bias);
            let v = affine(x.view(), &lp.value.weight, &lp.value.bias);
            let mut ctx = Array2::<f64>::zeros((t, h));
            let mut probs = Vec::with_capacity(cfg.num_heads);
            let mut probs_masks = Vec::with_capacity(cfg.num_heads);
            for head in 0..cfg.num_heads {
                let cols = s![.., head * d..(head + 1) * d];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut scores);
                let mask = mode.dropout_mask((t, t), cfg.attention_dropout);
                let dropped = match &mask {
                    Some(m) => &scores * m,
                    None => scores.clone(),
                };
                ctx.slice_mut(cols).assign(&dropped.dot(&v.slice(cols)));
                probs.push(scores);
                probs_masks.push(mask);
            }
            let attn = affine(ctx.view(), &lp.attn_out.weight, &lp.attn_out.bias);
            let attn_mask = mode.dropout_mask((t, h), cfg.hidden_dropout);
            let residual = &x + &apply_mask(attn, &attn_mask);
            let (h1, attn_norm) = layer_norm(&residual, &lp.attn_norm, cfg.layer_norm_eps);

            let ffn_pre = affine(h1.view(), &lp.ffn_in.weight, &lp.ffn_in.bias);
            let ffn_act = ffn_pre.mapv(gelu);
            let ffn = affine(ffn_act.view(), &lp.ffn_out.weight, &lp.ffn_out.bias);
            let ffn_mask = mode.dropout_mask((t, h), cfg.hidden_dropout);
            let residual = &h1 + &apply_mask(ffn, &ffn_mask);
            let (out, ffn_norm) = layer_norm(&residual, &lp.ffn_norm, cfg.layer_norm_eps);

            layers.push(LayerCache {
                input: std::mem::replace(&mut x, out),
                q,
                k,
                v,
                probs,
                probs_masks,
                ctx,
                attn_mask,
                attn_norm,
                h1,
                ffn_pre,
                ffn_act,
                ffn_mask,
                ffn_norm,
            });
        }

        let cls_mask = mode.dropout_mask((1, h), cfg.hidden_dropout);
        let mut cls = x.row(0).to_owned();
        if let Some(m) = &cls_mask {
            cls *= &m.row(0);
        }
        let logits = cls.dot(&p.classifier.weight) + &p.classifier.bias;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("logits"));
        }
        Ok(ForwardCache {
            ids: ids.to_vec(),
            embed_norm,
            embed_mask,
            layers,
            cls,
            cls_mask,
            logits,
        })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Array1<f64>, grads: &mut ModelParams) {
        let cfg = &self.config;
        let p = &self.params;
        let t = cache.ids.len();
        let h = cfg.hidden_size;
        let d = cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();

        let cls_col = cache.cls.view().insert_axis(Axis(1));
        grads.classifier.weight += &cls_col.dot(&dlogits.view().insert_axis(Axis(0)));
        grads.classifier.bias += dlogits;
        let mut dcls = p.classifier.weight.dot(dlogits);
        if let Some(m) = &cache.cls_mask {
            dcls *= &m.row(0);
        }
        let mut dx = Array2::<f64>::zeros((t, h));
        dx.row_mut(0).assign(&dcls);

        for (lc, (lp, lg)) in cache
            .layers
            .iter()
            .zip(p.layers.iter().zip(grads.layers.iter_mut()))
            .rev()
        {
            let dres2 = layer_norm_backward(&dx, &lc.ffn_norm, &lp.ffn_norm, &mut lg.ffn_norm);
            let mut dh1 = dres2.clone();
            let dffn = apply_mask(dres2, &lc.ffn_mask);
            lg.ffn_out.weight += &lc.ffn_act.t().dot(&dffn);
            lg.ffn_out.bias += &dffn.sum_axis(Axis(0));
            let dact = dffn.dot(&lp.ffn_out.weight.t());
            let dpre = dact * &lc.ffn_pre.mapv(gelu_grad);
            lg.ffn_in.weight += &lc.h1.t().dot(&dpre);
            lg.ffn_in.bias += &dpre.sum_axis(Axis(0));
            dh1 += &dpre.dot(&lp.ffn_in.weight.t());

            let dres1 = layer_norm_backward(&dh1, &lc.attn_norm, &lp.attn_norm, &mut lg.attn_norm);
            let mut dinput = dres1.clone();
            let dattn = apply_mask(dres1, &lc.attn_mask);
            lg.attn_out.weight += &lc.ctx.t().dot(&dattn);
            lg.attn_out.bias += &dattn.sum_axis(Axis(0));
            let dctx = dattn.dot(&lp.attn_out.weight.t());

            let mut dq = Array2::<f64>::zeros((t, h));
            let mut dk = Array2::<f64>::zeros((t, h));
            let mut dv = Array2::<f64>::zeros((t, h));
            for head in 0..cfg.num_heads {
                let cols = s![.., head * d..(head + 1) * d];
                let probs = &lc.probs[head];
                let dctx_h = dctx.slice(cols);
                let dropped = match &lc.probs_masks[head] {
                    Some(m) => probs * m,
                    None => probs.clone(),
                };
                dv.slice_mut(cols).assign(&dropped.t().dot(&dctx_h));
                let dprobs = apply_mask(dctx_h.dot(&lc.v.slice(cols).t()), &lc.probs_masks[head]);
                let row_dot = (&dprobs * probs).sum_axis(Axis(1));
                let dscores = (probs * &(&dprobs - &row_dot.insert_axis(Axis(1)))) * scale;
                dq.slice_mut(cols).assign(&dscores.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&dscores.t().dot(&lc.q.slice(cols)));
            }
            for (dproj, lin, lin_grad) in [
                (&dq, &lp.query, &mut lg.query),
                (&dk, &lp.key, &mut lg.key),
                (&dv, &lp.value, &mut lg.value),
            ] {
                lin_grad.weight += &lc.input.t().dot(dproj);
                lin_grad.bias += &dproj.sum_axis(Axis(0));
                dinput += &dproj.dot(&lin.weight.t());
            }
            dx = dinput;
        }

        let dx = apply_mask(dx, &cache.embed_mask);
        let dembed = layer_norm_backward(&dx, &cache.embed_norm, &p.embed_norm, &mut grads.embed_norm);
        for (pos, &id) in cache.ids.iter().enumerate() {
            let row = dembed.row(pos);
            let mut w = grads.word_embeddings.row_mut(id as usize);
            w += &row;
            let mut pe = grads.position_embeddings.row_mut(cfg.position_offset + pos);
            pe += &row;
            grads.token_type_embedding += &row;
        }
    }

    /// Softmax class probabilities for one token sequence, dropout off.
    pub fn predict_proba(&self, ids: &[u32]) -> Result<Array1<f64>> {
        let cache = self.forward(ids, Mode::Eval)?;
        Ok(softmax(cache.logits()))
    }
}

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}
