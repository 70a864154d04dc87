//! Forward and backward passes.
//!
//! Encoder: one-hot+scalar input projected to `projection_size`, then post-norm
//! Transformer layers with bidirectional attention. Decoder: previous token
//! projection concatenated with the encoder state, one LSTM layer, then two
//! per-step dense layers (ReLU between) and a softmax.

use mf_core::features::EncoderFeatures;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::params::{EncoderSlots, ModelParams};
use crate::scalar::Scalar;
use crate::NeuralError;

const NORM_EPS: f64 = 1e-5;

/// Sparse input row: (row of the input projection, value).
type InputRow<T> = Vec<(usize, T)>;

fn input_rows<T: Scalar>(p: &ModelParams<T>, rows: &[EncoderFeatures]) -> Result<Vec<InputRow<T>>, NeuralError> {
    let schema = &p.config.input;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.task() != p.config.task {
                return Err(NeuralError::ShapeMismatch(format!("row {i} has task {} but model is {}", r.task(), p.config.task)));
            }
            let idx = r.indices();
            let sc = r.scalars();
            if idx.len() != schema.fields.len() || sc.len() != schema.scalars {
                return Err(NeuralError::ShapeMismatch(format!("row {i} does not match the input schema")));
            }
            let mut out = Vec::with_capacity(idx.len() + sc.len());
            let mut offset = 0;
            for (&k, &size) in idx.iter().zip(&schema.fields) {
                if k >= size {
                    return Err(NeuralError::ShapeMismatch(format!("row {i}: index {k} outside field of size {size}")));
                }
                out.push((offset + k, T::one()));
                offset += size;
            }
            out.extend(sc.iter().enumerate().map(|(j, &v)| (offset + j, T::of(v))));
            Ok(out)
        })
        .collect()
}

fn check_tokens<T: Scalar>(p: &ModelParams<T>, n: usize, tokens: &[u16]) -> Result<(), NeuralError> {
    if tokens.len() != n {
        return Err(NeuralError::ShapeMismatch(format!("{n} rows but {} tokens", tokens.len())));
    }
    if let Some(t) = tokens.iter().find(|&&t| t as usize >= p.config.vocab_size) {
        return Err(NeuralError::ShapeMismatch(format!("token {t} outside vocabulary of {}", p.config.vocab_size)));
    }
    Ok(())
}

fn dropout_mask<T: Scalar, R: Rng>(rng: &mut R, rate: f64, shape: (usize, usize)) -> Array2<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < rate { T::zero() } else { keep })
}

fn add_row<T: Scalar>(m: &mut Array2<T>, b: ArrayView2<T>) {
    *m += &b.row(0);
}

fn softmax_rows<T: Scalar>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn relu<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    m.mapv(|v| v.max(T::zero()))
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

struct NormTrace<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

fn layer_norm<T: Scalar>(x: &Array2<T>, gain: ArrayView2<T>, bias: ArrayView2<T>) -> (Array2<T>, NormTrace<T>) {
    let d = T::of(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
        *s = T::one() / (var + T::of(NORM_EPS)).sqrt();
        let k = *s;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * &gain.row(0) + &bias.row(0);
    (y, NormTrace { xhat, inv_std })
}

fn layer_norm_backward<T: Scalar>(dy: &Array2<T>, t: &NormTrace<T>, gain: ArrayView2<T>, dgain: &mut [T], dbias: &mut [T]) -> Array2<T> {
    let d = T::of(dy.ncols() as f64);
    for (j, (g, b)) in dgain.iter_mut().zip(dbias.iter_mut()).enumerate() {
        for i in 0..dy.nrows() {
            *g = *g + dy[(i, j)] * t.xhat[(i, j)];
            *b = *b + dy[(i, j)];
        }
    }
    let dxhat = dy * &gain.row(0);
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let r = dxhat.row(i);
        let xh = t.xhat.row(i);
        let sum = r.sum();
        let dot = r.dot(&xh);
        let k = t.inv_std[i] / d;
        for j in 0..dy.ncols() {
            dx[(i, j)] = k * (d * r[j] - sum - xh[j] * dot);
        }
    }
    dx
}

struct LayerTrace<T> {
    input: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Vec<Array2<T>>,
    mixed: Array2<T>,
    attn_mask: Option<Array2<T>>,
    norm1: NormTrace<T>,
    h1: Array2<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
    ff_mask: Option<Array2<T>>,
    norm2: NormTrace<T>,
}

/// Intermediate values of a teacher-forced pass, kept for backpropagation.
pub struct Trace<T> {
    inputs: Vec<InputRow<T>>,
    input_mask: Option<Array2<T>>,
    layers: Vec<LayerTrace<T>>,
    tokens: Vec<usize>,
    decoder_in: Array2<T>,
    gates: Array2<T>,
    cells: Array2<T>,
    hidden: Array2<T>,
    conv_pre: Array2<T>,
    conv_mask: Option<Array2<T>>,
    conv_out: Array2<T>,
    /// Pre-softmax scores, one row per step.
    pub logits: Array2<T>,
    /// Per-step output distributions, one row per step.
    pub probs: Array2<T>,
}

fn encoder_layer<T: Scalar, R: Rng>(p: &ModelParams<T>, l: &EncoderSlots, x: Array2<T>, mut rng: Option<&mut R>) -> LayerTrace<T> {
    let c = &p.config;
    let dh = c.head_size();
    let mut q = x.dot(&p.view(l.wq));
    add_row(&mut q, p.view(l.bq));
    let mut k = x.dot(&p.view(l.wk));
    add_row(&mut k, p.view(l.bk));
    let mut v = x.dot(&p.view(l.wv));
    add_row(&mut v, p.view(l.bv));
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut mixed = Array2::zeros(x.raw_dim());
    let mut attn = Vec::with_capacity(c.attention_heads);
    for h in 0..c.attention_heads {
        let r = h * dh..(h + 1) * dh;
        let mut a = q.slice(s![.., r.clone()]).dot(&k.slice(s![.., r.clone()]).t()) * scale;
        softmax_rows(&mut a);
        mixed.slice_mut(s![.., r.clone()]).assign(&a.dot(&v.slice(s![.., r])));
        attn.push(a);
    }
    let mut out = mixed.dot(&p.view(l.wo));
    add_row(&mut out, p.view(l.bo));
    let attn_mask = rng.as_deref_mut().filter(|_| c.dropout > 0.0).map(|r| dropout_mask(r, c.dropout, out.dim()));
    if let Some(m) = &attn_mask {
        out *= m;
    }
    let (h1, norm1) = layer_norm(&(&x + &out), p.view(l.norm1_gain), p.view(l.norm1_bias));
    let mut ff_pre = h1.dot(&p.view(l.ff1_w));
    add_row(&mut ff_pre, p.view(l.ff1_b));
    let ff_act = relu(&ff_pre);
    let mut ff = ff_act.dot(&p.view(l.ff2_w));
    add_row(&mut ff, p.view(l.ff2_b));
    let ff_mask = rng.filter(|_| c.dropout > 0.0).map(|r| dropout_mask(r, c.dropout, ff.dim()));
    if let Some(m) = &ff_mask {
        ff *= m;
    }
    let (_, norm2) = layer_norm(&(&h1 + &ff), p.view(l.norm2_gain), p.view(l.norm2_bias));
    LayerTrace { input: x, q, k, v, attn, mixed, attn_mask, norm1, h1, ff_pre, ff_act, ff_mask, norm2 }
}

fn layer_output<T: Scalar>(p: &ModelParams<T>, l: &EncoderSlots, t: &LayerTrace<T>) -> Array2<T> {
    &t.norm2.xhat * &p.view(l.norm2_gain).row(0) + &p.view(l.norm2_bias).row(0)
}

fn embed<T: Scalar>(p: &ModelParams<T>, inputs: &[InputRow<T>]) -> Array2<T> {
    let w = p.view(p.layout.input_w);
    let mut e = Array2::zeros((inputs.len(), p.config.projection_size));
    for (mut row, input) in e.rows_mut().into_iter().zip(inputs) {
        row.assign(&p.view(p.layout.input_b).row(0));
        for &(k, v) in input {
            row.scaled_add(v, &w.row(k));
        }
    }
    e
}

#[allow(clippy::type_complexity)]
fn encode_traced<T: Scalar, R: Rng>(
    p: &ModelParams<T>,
    inputs: &[InputRow<T>],
    mut rng: Option<&mut R>,
) -> (Array2<T>, Option<Array2<T>>, Vec<LayerTrace<T>>) {
    let c = &p.config;
    let mut x = embed(p, inputs);
    let input_mask = rng.as_deref_mut().filter(|_| c.dropout > 0.0).map(|r| dropout_mask(r, c.dropout, x.dim()));
    if let Some(m) = &input_mask {
        x *= m;
    }
    let mut layers = Vec::with_capacity(c.encoder_layers);
    for l in &p.layout.layers {
        let t = encoder_layer(p, l, x, rng.as_deref_mut());
        x = layer_output(p, l, &t);
        layers.push(t);
    }
    (x, input_mask, layers)
}

/// Encoder states for a sequence of rows (dropout off).
pub fn encode<T: Scalar>(p: &ModelParams<T>, rows: &[EncoderFeatures]) -> Result<Array2<T>, NeuralError> {
    let inputs = input_rows(p, rows)?;
    Ok(encode_traced::<T, rand_chacha::ChaCha8Rng>(p, &inputs, None).0)
}

fn decoder_tokens(start: usize, tokens: &[u16]) -> Vec<usize> {
    std::iter::once(start).chain(tokens.iter().map(|&t| t as usize)).take(tokens.len()).collect()
}

fn decoder_input<T: Scalar>(p: &ModelParams<T>, enc: ArrayView1<T>, token: usize) -> Array1<T> {
    let d = p.config.projection_size;
    let mut u = Array1::zeros(d + p.config.decoder_input_projection);
    u.slice_mut(s![..d]).assign(&enc);
    u.slice_mut(s![d..]).assign(&(&p.view(p.layout.token_w).row(token) + &p.view(p.layout.token_b).row(0)));
    u
}

/// LSTM cell update from precomputed input contribution `zx`.
/// Returns activated gates, new cell and new hidden state.
fn lstm_cell<T: Scalar>(p: &ModelParams<T>, zx: ArrayView1<T>, h: ArrayView1<T>, c: ArrayView1<T>) -> (Array1<T>, Array1<T>, Array1<T>) {
    let hs = p.config.lstm_hidden;
    let mut z = &zx + &h.dot(&p.view(p.layout.lstm_wh));
    for (j, v) in z.iter_mut().enumerate() {
        *v = if (2 * hs..3 * hs).contains(&j) { v.tanh() } else { sigmoid(*v) };
    }
    let mut c_new = Array1::zeros(hs);
    let mut h_new = Array1::zeros(hs);
    for j in 0..hs {
        let (i, f, g, o) = (z[j], z[hs + j], z[2 * hs + j], z[3 * hs + j]);
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (z, c_new, h_new)
}

/// Full teacher-forced pass. `rng` enables dropout.
pub fn forward_trace<T: Scalar, R: Rng>(
    p: &ModelParams<T>,
    rows: &[EncoderFeatures],
    tokens: &[u16],
    mut rng: Option<&mut R>,
) -> Result<Trace<T>, NeuralError> {
    let c = &p.config;
    check_tokens(p, rows.len(), tokens)?;
    let inputs = input_rows(p, rows)?;
    let n = rows.len();
    let (enc, input_mask, layers) = encode_traced(p, &inputs, rng.as_deref_mut());
    let tokens = decoder_tokens(c.start_token(), tokens);
    let hs = c.lstm_hidden;
    let mut decoder_in = Array2::zeros((n, c.projection_size + c.decoder_input_projection));
    for (i, &t) in tokens.iter().enumerate() {
        decoder_in.row_mut(i).assign(&decoder_input(p, enc.row(i), t));
    }
    let mut zx = decoder_in.dot(&p.view(p.layout.lstm_wx));
    add_row(&mut zx, p.view(p.layout.lstm_b));
    let mut gates = Array2::zeros((n, 4 * hs));
    let mut cells = Array2::zeros((n, hs));
    let mut hidden = Array2::zeros((n, hs));
    let mut h = Array1::zeros(hs);
    let mut cell = Array1::zeros(hs);
    for i in 0..n {
        let (z, c_new, h_new) = lstm_cell(p, zx.row(i), h.view(), cell.view());
        gates.row_mut(i).assign(&z);
        cells.row_mut(i).assign(&c_new);
        hidden.row_mut(i).assign(&h_new);
        h = h_new;
        cell = c_new;
    }
    let mut conv_pre = hidden.dot(&p.view(p.layout.conv1_w));
    add_row(&mut conv_pre, p.view(p.layout.conv1_b));
    let mut conv_out = relu(&conv_pre);
    let conv_mask = rng.filter(|_| c.dropout > 0.0).map(|r| dropout_mask(r, c.dropout, conv_out.dim()));
    if let Some(m) = &conv_mask {
        conv_out *= m;
    }
    let mut logits = conv_out.dot(&p.view(p.layout.conv2_w));
    add_row(&mut logits, p.view(p.layout.conv2_b));
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    Ok(Trace { inputs, input_mask, layers, tokens, decoder_in, gates, cells, hidden, conv_pre, conv_mask, conv_out, logits, probs })
}

/// Per-step categorical distributions under teacher forcing (dropout off).
pub fn forward<T: Scalar>(p: &ModelParams<T>, rows: &[EncoderFeatures], tokens: &[u16]) -> Result<Array2<T>, NeuralError> {
    Ok(forward_trace::<T, rand_chacha::ChaCha8Rng>(p, rows, tokens, None)?.probs)
}

/// Mean negative log-likelihood of `targets`.
pub fn loss<T: Scalar>(probs: &Array2<T>, targets: &[u16]) -> f64 {
    let total: f64 = targets.iter().enumerate().map(|(i, &t)| -probs[(i, t as usize)].f64().ln()).sum();
    total / targets.len().max(1) as f64
}

/// Adds the gradient of `weight * sum_i -ln p_i(target_i)` to `grads`.
pub fn backward<T: Scalar>(p: &ModelParams<T>, t: &Trace<T>, targets: &[u16], weight: T, grads: &mut [T]) {
    let lay = &p.layout;
    let c = &p.config;
    let n = targets.len();
    let hs = c.lstm_hidden;

    let mut dz = t.probs.clone();
    for (i, &y) in targets.iter().enumerate() {
        dz[(i, y as usize)] = dz[(i, y as usize)] - T::one();
    }
    dz *= weight;

    lay.view_mut(grads, lay.conv2_w).scaled_add(T::one(), &t.conv_out.t().dot(&dz));
    lay.view_mut(grads, lay.conv2_b).row_mut(0).scaled_add(T::one(), &dz.sum_axis(Axis(0)));
    let mut dconv = dz.dot(&p.view(lay.conv2_w).t());
    if let Some(m) = &t.conv_mask {
        dconv *= m;
    }
    dconv.zip_mut_with(&t.conv_pre, |g, &x| {
        if x <= T::zero() {
            *g = T::zero()
        }
    });
    lay.view_mut(grads, lay.conv1_w).scaled_add(T::one(), &t.hidden.t().dot(&dconv));
    lay.view_mut(grads, lay.conv1_b).row_mut(0).scaled_add(T::one(), &dconv.sum_axis(Axis(0)));
    let dhidden = dconv.dot(&p.view(lay.conv1_w).t());

    let wh = p.view(lay.lstm_wh);
    let mut dgates = Array2::zeros((n, 4 * hs));
    let mut dh_next = Array1::<T>::zeros(hs);
    let mut dc_next = Array1::<T>::zeros(hs);
    for i in (0..n).rev() {
        let g = t.gates.row(i);
        let mut dzr = dgates.row_mut(i);
        for j in 0..hs {
            let (ig, fg, gg, og) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
            let ct = t.cells[(i, j)];
            let tc = ct.tanh();
            let c_prev = if i > 0 { t.cells[(i - 1, j)] } else { T::zero() };
            let dh = dhidden[(i, j)] + dh_next[j];
            let dc = dh * og * (T::one() - tc * tc) + dc_next[j];
            dzr[j] = dc * gg * ig * (T::one() - ig);
            dzr[hs + j] = dc * c_prev * fg * (T::one() - fg);
            dzr[2 * hs + j] = dc * ig * (T::one() - gg * gg);
            dzr[3 * hs + j] = dh * tc * og * (T::one() - og);
            dc_next[j] = dc * fg;
        }
        dh_next = dgates.row(i).dot(&wh.t());
    }
    lay.view_mut(grads, lay.lstm_wx).scaled_add(T::one(), &t.decoder_in.t().dot(&dgates));
    if n > 1 {
        lay.view_mut(grads, lay.lstm_wh).scaled_add(T::one(), &t.hidden.slice(s![..n - 1, ..]).t().dot(&dgates.slice(s![1.., ..])));
    }
    lay.view_mut(grads, lay.lstm_b).row_mut(0).scaled_add(T::one(), &dgates.sum_axis(Axis(0)));
    let du = dgates.dot(&p.view(lay.lstm_wx).t());

    let d = c.projection_size;
    {
        let mut tw = lay.view_mut(grads, lay.token_w);
        for (i, &tok) in t.tokens.iter().enumerate() {
            tw.row_mut(tok).scaled_add(T::one(), &du.slice(s![i, d..]));
        }
    }
    lay.view_mut(grads, lay.token_b).row_mut(0).scaled_add(T::one(), &du.slice(s![.., d..]).sum_axis(Axis(0)));
    let mut dx = du.slice(s![.., ..d]).to_owned();

    for (l, lt) in lay.layers.iter().zip(&t.layers).rev() {
        dx = encoder_layer_backward(p, l, lt, dx, grads);
    }

    if let Some(m) = &t.input_mask {
        dx *= m;
    }
    lay.view_mut(grads, lay.input_b).row_mut(0).scaled_add(T::one(), &dx.sum_axis(Axis(0)));
    let mut iw = lay.view_mut(grads, lay.input_w);
    for (row, input) in dx.rows().into_iter().zip(&t.inputs) {
        for &(k, v) in input {
            iw.row_mut(k).scaled_add(v, &row);
        }
    }
}

fn dense_backward<T: Scalar>(p: &ModelParams<T>, x: &Array2<T>, dy: &Array2<T>, w: usize, b: usize, grads: &mut [T]) -> Array2<T> {
    let lay = &p.layout;
    lay.view_mut(grads, w).scaled_add(T::one(), &x.t().dot(dy));
    lay.view_mut(grads, b).row_mut(0).scaled_add(T::one(), &dy.sum_axis(Axis(0)));
    dy.dot(&p.view(w).t())
}

fn norm_backward<T: Scalar>(p: &ModelParams<T>, dy: &Array2<T>, t: &NormTrace<T>, gain: usize, bias: usize, grads: &mut [T]) -> Array2<T> {
    let lay = &p.layout;
    let (gr, br) = (lay.tensors[gain].range(), lay.tensors[bias].range());
    let mut dg = grads[gr.clone()].to_vec();
    let mut db = grads[br.clone()].to_vec();
    let dx = layer_norm_backward(dy, t, p.view(gain), &mut dg, &mut db);
    grads[gr].copy_from_slice(&dg);
    grads[br].copy_from_slice(&db);
    dx
}

fn encoder_layer_backward<T: Scalar>(p: &ModelParams<T>, l: &EncoderSlots, t: &LayerTrace<T>, dout: Array2<T>, grads: &mut [T]) -> Array2<T> {
    let c = &p.config;
    let dr2 = norm_backward(p, &dout, &t.norm2, l.norm2_gain, l.norm2_bias, grads);
    let mut dff = dr2.clone();
    if let Some(m) = &t.ff_mask {
        dff *= m;
    }
    let mut dact = dense_backward(p, &t.ff_act, &dff, l.ff2_w, l.ff2_b, grads);
    dact.zip_mut_with(&t.ff_pre, |g, &x| {
        if x <= T::zero() {
            *g = T::zero()
        }
    });
    let dh1 = dr2 + dense_backward(p, &t.h1, &dact, l.ff1_w, l.ff1_b, grads);

    let dr1 = norm_backward(p, &dh1, &t.norm1, l.norm1_gain, l.norm1_bias, grads);
    let mut dattn = dr1.clone();
    if let Some(m) = &t.attn_mask {
        dattn *= m;
    }
    let dmixed = dense_backward(p, &t.mixed, &dattn, l.wo, l.bo, grads);

    let dh = c.head_size();
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut dq = Array2::zeros(t.q.raw_dim());
    let mut dk = Array2::zeros(t.k.raw_dim());
    let mut dv = Array2::zeros(t.v.raw_dim());
    for (h, a) in t.attn.iter().enumerate() {
        let r = h * dh..(h + 1) * dh;
        let dmh = dmixed.slice(s![.., r.clone()]);
        let vh = t.v.slice(s![.., r.clone()]);
        let da = dmh.dot(&vh.t());
        dv.slice_mut(s![.., r.clone()]).assign(&a.t().dot(&dmh));
        let mut ds = &da * a;
        for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
            let sum = row.sum();
            row.zip_mut_with(&arow, |v, &pa| *v = *v - pa * sum);
        }
        ds *= scale;
        dq.slice_mut(s![.., r.clone()]).assign(&ds.dot(&t.k.slice(s![.., r.clone()])));
        dk.slice_mut(s![.., r.clone()]).assign(&ds.t().dot(&t.q.slice(s![.., r])));
    }
    let mut dx = dr1;
    dx += &dense_backward(p, &t.input, &dq, l.wq, l.bq, grads);
    dx += &dense_backward(p, &t.input, &dk, l.wk, l.bk, grads);
    dx += &dense_backward(p, &t.input, &dv, l.wv, l.bv, grads);
    dx
}

/// Recurrent decoder state for incremental sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub hidden: Array1<T>,
    pub cell: Array1<T>,
}

impl<T: Scalar> DecoderState<T> {
    pub fn new(p: &ModelParams<T>) -> Self {
        DecoderState { hidden: Array1::zeros(p.config.lstm_hidden), cell: Array1::zeros(p.config.lstm_hidden) }
    }
}

/// One decoder step: logits for the next token given the encoder state at
/// this position and the previous token (`None` at the start).
pub fn decoder_step<T: Scalar>(p: &ModelParams<T>, enc: ArrayView1<T>, prev: Option<u16>, state: &DecoderState<T>) -> (Vec<f64>, DecoderState<T>) {
    let token = prev.map_or(p.config.start_token(), |t| t as usize);
    let u = decoder_input(p, enc, token);
    let zx = &u.dot(&p.view(p.layout.lstm_wx)) + &p.view(p.layout.lstm_b).row(0);
    let (_, cell, hidden) = lstm_cell(p, zx.view(), state.hidden.view(), state.cell.view());
    let pre = &hidden.dot(&p.view(p.layout.conv1_w)) + &p.view(p.layout.conv1_b).row(0);
    let act = pre.mapv(|v| v.max(T::zero()));
    let logits = &act.dot(&p.view(p.layout.conv2_w)) + &p.view(p.layout.conv2_b).row(0);
    (logits.iter().map(|v| v.f64()).collect(), DecoderState { hidden, cell })
}
