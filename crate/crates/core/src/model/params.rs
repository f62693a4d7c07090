use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::autodiff::Tensor;
use crate::time2vec::Time2VecParams;

/// Ordered, named parameter tensors. Equality compares names, shapes and
/// values; gradient state is ignored.
#[derive(Clone, Debug)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        if names.len() != tensors.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} names for {} tensors",
                names.len(),
                tensors.len()
            )));
        }
        Ok(ParamSet { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(move |i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape() && a.data() == b.data())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LinearIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct AttentionIdx {
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
    pub o: LinearIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FfnIdx {
    pub up: LinearIdx,
    pub down: LinearIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct EncoderLayerIdx {
    pub attn: AttentionIdx,
    pub norm1: NormIdx,
    pub ffn: FfnIdx,
    pub norm2: NormIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct DecoderLayerIdx {
    pub self_attn: AttentionIdx,
    pub norm1: NormIdx,
    pub cross_attn: AttentionIdx,
    pub norm2: NormIdx,
    pub ffn: FfnIdx,
    pub norm3: NormIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LstmIdx {
    /// `d_model × 4H`, gate blocks ordered input, forget, cell, output.
    pub w_ih: usize,
    pub w_hh: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Time2VecIdx {
    pub omega: usize,
    pub phi: usize,
}

/// Where each parameter lives in the [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub enc_time: Time2VecIdx,
    pub dec_time: Time2VecIdx,
    pub enc_in: LinearIdx,
    pub dec_in: LinearIdx,
    pub encoder: Vec<EncoderLayerIdx>,
    pub decoder: Vec<DecoderLayerIdx>,
    pub lstm: Option<LstmIdx>,
    pub out: LinearIdx,
}

enum Init {
    Xavier,
    Zeros,
    Ones,
    ForgetBias(usize),
    Time,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearIdx {
        LinearIdx {
            w: self.push(format!("{prefix}.w"), vec![fan_in, fan_out], Init::Xavier),
            b: self.push(format!("{prefix}.b"), vec![fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.push(format!("{prefix}.gain"), vec![d], Init::Ones),
            bias: self.push(format!("{prefix}.bias"), vec![d], Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIdx {
        AttentionIdx {
            q: self.linear(&format!("{prefix}.q"), d, d),
            k: self.linear(&format!("{prefix}.k"), d, d),
            v: self.linear(&format!("{prefix}.v"), d, d),
            o: self.linear(&format!("{prefix}.o"), d, d),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, hidden: usize) -> FfnIdx {
        FfnIdx {
            up: self.linear(&format!("{prefix}.up"), d, hidden),
            down: self.linear(&format!("{prefix}.down"), hidden, d),
        }
    }

    fn time(&mut self, prefix: &str, k: usize) -> Time2VecIdx {
        Time2VecIdx {
            omega: self.push(format!("{prefix}.omega"), vec![1, k + 1], Init::Time),
            phi: self.push(format!("{prefix}.phi"), vec![1, k + 1], Init::Time),
        }
    }
}

pub(crate) fn layout_and_shapes(config: &ModelConfig) -> (Layout, Vec<String>, Vec<Vec<usize>>) {
    let (layout, b) = build(config);
    (layout, b.names, b.shapes)
}

fn build(config: &ModelConfig) -> (Layout, Builder) {
    let d = config.d_model;
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
    };
    let enc_time = b.time("enc.time", config.k_time);
    let dec_time = b.time("dec.time", config.k_time);
    let enc_in = b.linear("enc.in", config.encoder_input_dim(), d);
    let dec_in = b.linear("dec.in", config.decoder_input_dim(), d);
    let encoder = (0..config.n_encoder_layers)
        .map(|l| EncoderLayerIdx {
            attn: b.attention(&format!("enc.{l}.attn"), d),
            norm1: b.norm(&format!("enc.{l}.norm1"), d),
            ffn: b.ffn(&format!("enc.{l}.ffn"), d, config.ffn_dim),
            norm2: b.norm(&format!("enc.{l}.norm2"), d),
        })
        .collect();
    let decoder = (0..config.n_decoder_layers)
        .map(|l| DecoderLayerIdx {
            self_attn: b.attention(&format!("dec.{l}.self"), d),
            norm1: b.norm(&format!("dec.{l}.norm1"), d),
            cross_attn: b.attention(&format!("dec.{l}.cross"), d),
            norm2: b.norm(&format!("dec.{l}.norm2"), d),
            ffn: b.ffn(&format!("dec.{l}.ffn"), d, config.ffn_dim),
            norm3: b.norm(&format!("dec.{l}.norm3"), d),
        })
        .collect();
    let (lstm, out_in) = if config.use_smoother {
        let h = config.lstm_hidden;
        let idx = LstmIdx {
            w_ih: b.push("lstm.w_ih".into(), vec![d, 4 * h], Init::Xavier),
            w_hh: b.push("lstm.w_hh".into(), vec![h, 4 * h], Init::Xavier),
            b: b.push("lstm.b".into(), vec![4 * h], Init::ForgetBias(h)),
        };
        (Some(idx), h)
    } else {
        (None, d)
    };
    let out = b.linear("out", out_in, 2);
    (
        Layout {
            enc_time,
            dec_time,
            enc_in,
            dec_in,
            encoder,
            decoder,
            lstm,
            out,
        },
        b,
    )
}

/// Deterministic initialization from `config.seed`: Xavier-uniform weights,
/// zero biases, unit norm gains, forget-gate bias 1, random time frequencies.
pub fn init_params(config: &ModelConfig) -> Result<ParamSet, ModelError> {
    config.validate()?;
    let (_, b) = build(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = Vec::with_capacity(b.names.len());
    let mut pending_phi: Option<Tensor> = None;
    for (shape, init) in b.shapes.iter().zip(&b.inits) {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Xavier => {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::ForgetBias(h) => (0..n)
                .map(|i| if (*h..2 * h).contains(&i) { 1.0 } else { 0.0 })
                .collect(),
            Init::Time => match pending_phi.take() {
                Some(phi) => phi.into_data(),
                None => {
                    let t = Time2VecParams::init(
                        config.k_time,
                        config.fps,
                        config.enc_len_frames,
                        &mut rng,
                    );
                    pending_phi = Some(t.phi);
                    t.omega.into_data()
                }
            },
        };
        tensors.push(Tensor::new(shape.clone(), data)?);
    }
    ParamSet::new(b.names, tensors)
}
