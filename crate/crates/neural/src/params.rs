//! Flat parameter storage with a named tensor layout.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Embedding,
    Attention,
    FeedForward,
    Norm,
    Lstm,
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Xavier,
    Lstm,
    Zeros,
    Ones,
    ForgetBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub name: String,
    pub group: ParamGroup,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    init: Init,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Index into [`Layout::tensors`].
pub type Slot = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSlots {
    pub wq: Slot,
    pub bq: Slot,
    pub wk: Slot,
    pub bk: Slot,
    pub wv: Slot,
    pub bv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub norm1_gain: Slot,
    pub norm1_bias: Slot,
    pub ff1_w: Slot,
    pub ff1_b: Slot,
    pub ff2_w: Slot,
    pub ff2_b: Slot,
    pub norm2_gain: Slot,
    pub norm2_bias: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<Tensor>,
    pub input_w: Slot,
    pub input_b: Slot,
    pub layers: Vec<EncoderSlots>,
    pub token_w: Slot,
    pub token_b: Slot,
    /// Input-to-gate weights, gates ordered input, forget, cell, output.
    pub lstm_wx: Slot,
    pub lstm_wh: Slot,
    pub lstm_b: Slot,
    pub conv1_w: Slot,
    pub conv1_b: Slot,
    pub conv2_w: Slot,
    pub conv2_b: Slot,
    pub size: usize,
}

struct Builder {
    tensors: Vec<Tensor>,
    size: usize,
}

impl Builder {
    fn add(&mut self, name: String, group: ParamGroup, rows: usize, cols: usize, init: Init) -> Slot {
        self.tensors.push(Tensor { name, group, offset: self.size, rows, cols, init });
        self.size += rows * cols;
        self.tensors.len() - 1
    }

    fn dense(&mut self, name: &str, group: ParamGroup, rows: usize, cols: usize) -> (Slot, Slot) {
        (self.add(format!("{name}.weight"), group, rows, cols, Init::Xavier), self.add(format!("{name}.bias"), group, 1, cols, Init::Zeros))
    }

    fn norm(&mut self, name: &str, d: usize) -> (Slot, Slot) {
        (self.add(format!("{name}.gain"), ParamGroup::Norm, 1, d, Init::Ones), self.add(format!("{name}.bias"), ParamGroup::Norm, 1, d, Init::Zeros))
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        use ParamGroup::*;
        let d = config.projection_size;
        let h = config.lstm_hidden;
        let mut b = Builder { tensors: Vec::new(), size: 0 };
        let (input_w, input_b) = b.dense("input", Embedding, config.input.dim(), d);
        let layers = (0..config.encoder_layers)
            .map(|l| {
                let (wq, bq) = b.dense(&format!("encoder{l}.query"), Attention, d, d);
                let (wk, bk) = b.dense(&format!("encoder{l}.key"), Attention, d, d);
                let (wv, bv) = b.dense(&format!("encoder{l}.value"), Attention, d, d);
                let (wo, bo) = b.dense(&format!("encoder{l}.attention_out"), Attention, d, d);
                let (norm1_gain, norm1_bias) = b.norm(&format!("encoder{l}.norm1"), d);
                let (ff1_w, ff1_b) = b.dense(&format!("encoder{l}.ff1"), FeedForward, d, config.ff_channels);
                let (ff2_w, ff2_b) = b.dense(&format!("encoder{l}.ff2"), FeedForward, config.ff_channels, d);
                let (norm2_gain, norm2_bias) = b.norm(&format!("encoder{l}.norm2"), d);
                EncoderSlots { wq, bq, wk, bk, wv, bv, wo, bo, norm1_gain, norm1_bias, ff1_w, ff1_b, ff2_w, ff2_b, norm2_gain, norm2_bias }
            })
            .collect();
        let (token_w, token_b) = b.dense("token", Embedding, config.token_vocab(), config.decoder_input_projection);
        let lstm_in = d + config.decoder_input_projection;
        let lstm_wx = b.add("lstm.input_weight".into(), Lstm, lstm_in, 4 * h, Init::Lstm);
        let lstm_wh = b.add("lstm.hidden_weight".into(), Lstm, h, 4 * h, Init::Lstm);
        let lstm_b = b.add("lstm.bias".into(), Lstm, 1, 4 * h, Init::ForgetBias);
        let (conv1_w, conv1_b) = b.dense("conv1", Conv, h, config.conv_channels);
        let (conv2_w, conv2_b) = b.dense("conv2", Conv, config.conv_channels, config.vocab_size);
        Layout {
            size: b.size,
            tensors: b.tensors,
            input_w,
            input_b,
            layers,
            token_w,
            token_b,
            lstm_wx,
            lstm_wh,
            lstm_b,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
        }
    }

    pub fn view<'a, T: Scalar>(&self, data: &'a [T], slot: Slot) -> ArrayView2<'a, T> {
        let t = &self.tensors[slot];
        ArrayView2::from_shape((t.rows, t.cols), &data[t.range()]).expect("layout matches storage")
    }

    pub fn view_mut<'a, T: Scalar>(&self, data: &'a mut [T], slot: Slot) -> ArrayViewMut2<'a, T> {
        let t = &self.tensors[slot];
        ArrayViewMut2::from_shape((t.rows, t.cols), &mut data[t.range()]).expect("layout matches storage")
    }

    /// Group owning each flat parameter index.
    pub fn group_of(&self, index: usize) -> ParamGroup {
        let i = self.tensors.partition_point(|t| t.offset + t.len() <= index);
        self.tensors[i].group
    }
}

/// Model weights in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layout = Layout::new(config);
        ModelParams { config: config.clone(), data: vec![T::zero(); layout.size], layout }
    }

    /// Xavier-uniform projections; LSTM weights uniform in ±1/sqrt(hidden)
    /// with forget-gate bias 1; unit norm gains; zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.lstm_hidden;
        for t in &p.layout.tensors {
            let bound = match t.init {
                Init::Xavier => (6.0 / (t.rows + t.cols) as f64).sqrt(),
                Init::Lstm => 1.0 / (h as f64).sqrt(),
                _ => 0.0,
            };
            for (k, v) in p.data[t.range()].iter_mut().enumerate() {
                *v = match t.init {
                    Init::Xavier | Init::Lstm => T::of(rng.random_range(-bound..bound)),
                    Init::Zeros => T::zero(),
                    Init::Ones => T::one(),
                    Init::ForgetBias => T::of(if (h..2 * h).contains(&k) { 1.0 } else { 0.0 }),
                };
            }
        }
        p
    }

    pub fn view(&self, slot: Slot) -> ArrayView2<'_, T> {
        self.layout.view(&self.data, slot)
    }

    pub fn view_mut(&mut self, slot: Slot) -> ArrayViewMut2<'_, T> {
        self.layout.view_mut(&mut self.data, slot)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { config: self.config.clone(), layout: self.layout.clone(), data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }
}
