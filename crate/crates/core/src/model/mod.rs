//! Encoder-decoder Transformer over feature windows.
//!
//! The encoder reads `T_enc` feature rows with their time embedding; the
//! decoder reads `h + 1` target-player centroids with theirs and attends to
//! the encoder output. Every sub-layer is followed by residual addition and
//! layer normalization. An optional recurrent unit smooths the decoder output
//! sequence before the final projection to two coordinates. By default all
//! coordinates are taken relative to the last observed centroid, and the
//! projection is read as a displacement from it.
//!
//! ```
//! use pose2traj::autodiff::Tensor;
//! use pose2traj::data::Family;
//! use pose2traj::model::{Model, ModelConfig};
//!
//! let mut cfg = ModelConfig::for_family(Family::F1);
//! (cfg.d_model, cfg.n_heads, cfg.ffn_dim, cfg.lstm_hidden) = (8, 2, 16, 8);
//! cfg.k_time = 3;
//! let model = Model::new(cfg).unwrap();
//! let enc = Tensor::zeros(vec![30, 4]);
//! let times: Vec<f64> = (0..30).map(|i| i as f64 / 60.0).collect();
//! let dec = Tensor::zeros(vec![31, 2]);
//! let dec_times: Vec<f64> = (14..45).map(|i| i as f64 / 60.0).collect();
//! let out = model.predict(&enc, &times, &dec, &dec_times).unwrap();
//! assert_eq!(out.shape(), &[31, 2]);
//! ```

mod config;
mod params;

pub use config::ModelConfig;
pub use params::{init_params, ParamSet};

use params::{AttentionIdx, FfnIdx, Layout, LinearIdx, NormIdx, Time2VecIdx};

use crate::autodiff::{AutodiffError, Graph, Tensor, Var, LAYER_NORM_EPS};
use crate::time2vec::{attach_time, time2vec_forward, Time2VecError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Time2Vec(#[from] Time2VecError),
}

/// `L × L` additive mask: 0 on and below the diagonal, `-inf` above.
pub fn causal_mask(len: usize) -> Tensor {
    let data = (0..len * len)
        .map(|i| if i % len > i / len { f64::NEG_INFINITY } else { 0.0 })
        .collect();
    Tensor::matrix(len, len, data).expect("square mask")
}

/// Affine map `x·W + b` on graph nodes.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: Var,
    pub b: Var,
}

impl Linear {
    pub fn apply(self, g: &mut Graph, x: Var) -> Result<Var, AutodiffError> {
        let xw = g.matmul(x, self.w)?;
        g.add(xw, self.b)
    }
}

/// Query, key, value and output projections of one attention block.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// Multi-head scaled dot-product attention of `query` rows over
/// `key_value` rows. `mask`, when given, is added to every head's scores.
pub fn multi_head_attention(
    g: &mut Graph,
    query: Var,
    key_value: Var,
    w: &AttentionWeights,
    n_heads: usize,
    mask: Option<Var>,
) -> Result<Var, AutodiffError> {
    let d = g.shape(query)[1];
    if n_heads == 0 || d % n_heads != 0 {
        return Err(AutodiffError::ShapeMismatch(format!(
            "{d} features over {n_heads} heads"
        )));
    }
    let dh = d / n_heads;
    let q = w.q.apply(g, query)?;
    let k = w.k.apply(g, key_value)?;
    let v = w.v.apply(g, key_value)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice(q, 1, lo, hi)?;
        let kh = g.slice(k, 1, lo, hi)?;
        let vh = g.slice(v, 1, lo, hi)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask {
            scores = g.add(scores, m)?;
        }
        let weights = g.softmax(scores);
        heads.push(g.matmul(weights, vh)?);
    }
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat(&heads, 1)?
    };
    w.o.apply(g, joined)
}

/// Gated recurrent scan over the rows of `x` (`L × d`), starting from zero
/// hidden and cell states. `w_ih` is `d × 4H`, `w_hh` is `H × 4H` and `b` has
/// `4H` entries, with gate blocks ordered input, forget, cell, output.
/// Returns the `L × H` hidden states.
pub fn lstm_scan(
    g: &mut Graph,
    x: Var,
    w_ih: Var,
    w_hh: Var,
    b: Var,
) -> Result<Var, AutodiffError> {
    let hidden = g.shape(w_hh)[0];
    let len = g.shape(x)[0];
    let xw = g.matmul(x, w_ih)?;
    let xw = g.add(xw, b)?;
    let mut h = g.constant(Tensor::zeros(vec![1, hidden]));
    let mut c = g.constant(Tensor::zeros(vec![1, hidden]));
    let mut outs = Vec::with_capacity(len);
    for t in 0..len {
        let row = g.slice(xw, 0, t, t + 1)?;
        let rec = g.matmul(h, w_hh)?;
        let gates = g.add(row, rec)?;
        let i = g.slice(gates, 1, 0, hidden)?;
        let i = g.sigmoid(i);
        let f = g.slice(gates, 1, hidden, 2 * hidden)?;
        let f = g.sigmoid(f);
        let cand = g.slice(gates, 1, 2 * hidden, 3 * hidden)?;
        let cand = g.tanh(cand);
        let o = g.slice(gates, 1, 3 * hidden, 4 * hidden)?;
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        c = g.add(keep, write)?;
        let tc = g.tanh(c);
        h = g.mul(o, tc)?;
        outs.push(h);
    }
    if outs.is_empty() {
        return Ok(g.constant(Tensor::zeros(vec![0, hidden])));
    }
    g.concat(&outs, 0)
}

/// A model configuration with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    layout: Layout,
}

impl Model {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = init_params(&config)?;
        Model::from_params(config, params)
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// configuration.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, names, shapes) = params::layout_and_shapes(&config);
        if params.len() != names.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                names.len(),
                params.len()
            )));
        }
        for ((name, shape), (have, t)) in names.iter().zip(&shapes).zip(params.iter()) {
            if name != have || shape.as_slice() != t.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "parameter {have} {:?}, expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    /// Puts every parameter into `g`, as differentiable leaves when
    /// `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| {
                let mut t = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("param");
                t.set_requires_grad(trainable);
                g.leaf(t)
            })
            .collect()
    }

    /// Forward pass on bound parameters. Returns `(h+1) × 2` predictions.
    pub fn forward(
        &self,
        g: &mut Graph,
        vars: &[Var],
        enc_in: Var,
        enc_times: &[f64],
        dec_in: Var,
        dec_times: &[f64],
    ) -> Result<Var, ModelError> {
        let c = &self.config;
        let l = &self.layout;
        let (es, ds) = (g.shape(enc_in).to_vec(), g.shape(dec_in).to_vec());
        if es.len() != 2 || es[1] != c.family.feature_dim() || es[0] != enc_times.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "encoder input {es:?} with {} times, family {} needs width {}",
                enc_times.len(),
                c.family,
                c.family.feature_dim()
            )));
        }
        if ds.len() != 2 || ds[1] != 2 || ds[0] != dec_times.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "decoder input {ds:?} with {} times",
                dec_times.len()
            )));
        }
        // target player's centroid in the last encoder row
        let col = c.family.centroid_column(c.target_player);
        let last = g.slice(enc_in, 0, es[0] - 1, es[0])?;
        let anchor = g.slice(last, 1, col, col + 2)?;
        let (enc_in, dec_in) = if c.anchor_relative {
            let tile = g.concat(&vec![anchor; es[1] / 2], 1)?;
            let (e, d) = (g.sub(enc_in, tile)?, g.sub(dec_in, anchor)?);
            (g.scale(e, c.relative_scale), g.scale(d, c.relative_scale))
        } else {
            (enc_in, dec_in)
        };
        let memory = self.encode(g, vars, enc_in, enc_times)?;

        let x = embed(g, vars, l.dec_time, l.dec_in, dec_in, dec_times)?;
        let mask = if c.use_decoder_mask {
            Some(g.constant(causal_mask(ds[0])))
        } else {
            None
        };
        let mut x = x;
        for layer in &l.decoder {
            let sa = multi_head_attention(g, x, x, &attn(vars, layer.self_attn), c.n_heads, mask)?;
            x = self.residual_norm(g, vars, x, sa, layer.norm1)?;
            let ca = multi_head_attention(
                g,
                x,
                memory,
                &attn(vars, layer.cross_attn),
                c.n_heads,
                None,
            )?;
            x = self.residual_norm(g, vars, x, ca, layer.norm2)?;
            let ff = ffn(g, vars, layer.ffn, x)?;
            x = self.residual_norm(g, vars, x, ff, layer.norm3)?;
        }
        let y = match l.lstm {
            Some(idx) => lstm_scan(g, x, vars[idx.w_ih], vars[idx.w_hh], vars[idx.b])?,
            None => x,
        };
        let out = lin(vars, l.out).apply(g, y)?;
        if !c.anchor_relative {
            return Ok(out);
        }
        let out = g.scale(out, 1.0 / c.relative_scale);
        Ok(g.add(out, anchor)?)
    }

    fn encode(
        &self,
        g: &mut Graph,
        vars: &[Var],
        enc_in: Var,
        enc_times: &[f64],
    ) -> Result<Var, ModelError> {
        let l = &self.layout;
        let mut x = embed(g, vars, l.enc_time, l.enc_in, enc_in, enc_times)?;
        for layer in &l.encoder {
            let sa = multi_head_attention(g, x, x, &attn(vars, layer.attn), self.config.n_heads, None)?;
            x = self.residual_norm(g, vars, x, sa, layer.norm1)?;
            let ff = ffn(g, vars, layer.ffn, x)?;
            x = self.residual_norm(g, vars, x, ff, layer.norm2)?;
        }
        Ok(x)
    }

    fn residual_norm(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        sub: Var,
        norm: NormIdx,
    ) -> Result<Var, AutodiffError> {
        let sub = g.dropout(sub, self.config.dropout)?;
        let sum = g.add(x, sub)?;
        g.layer_norm(sum, vars[norm.gain], vars[norm.bias], LAYER_NORM_EPS)
    }

    /// Evaluation-mode forward pass on plain tensors.
    pub fn predict(
        &self,
        enc_in: &Tensor,
        enc_times: &[f64],
        dec_in: &Tensor,
        dec_times: &[f64],
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let e = g.constant(enc_in.clone());
        let d = g.constant(dec_in.clone());
        let out = self.forward(&mut g, &vars, e, enc_times, d, dec_times)?;
        Ok(g.value(out).clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }
}

fn lin(vars: &[Var], idx: LinearIdx) -> Linear {
    Linear {
        w: vars[idx.w],
        b: vars[idx.b],
    }
}

fn attn(vars: &[Var], idx: AttentionIdx) -> AttentionWeights {
    AttentionWeights {
        q: lin(vars, idx.q),
        k: lin(vars, idx.k),
        v: lin(vars, idx.v),
        o: lin(vars, idx.o),
    }
}

fn ffn(g: &mut Graph, vars: &[Var], idx: FfnIdx, x: Var) -> Result<Var, AutodiffError> {
    let up = lin(vars, idx.up).apply(g, x)?;
    let up = g.relu(up);
    lin(vars, idx.down).apply(g, up)
}

fn embed(
    g: &mut Graph,
    vars: &[Var],
    time: Time2VecIdx,
    proj: LinearIdx,
    x: Var,
    times: &[f64],
) -> Result<Var, ModelError> {
    let e = time2vec_forward(g, times, vars[time.omega], vars[time.phi])?;
    let joined = attach_time(g, x, e)?;
    Ok(lin(vars, proj).apply(g, joined)?)
}

#[cfg(test)]
mod tests;
