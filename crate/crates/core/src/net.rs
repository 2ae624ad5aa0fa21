//! Convolutional policy/value network.
//!
//! Layout: `conv(10, 2x2) -> relu -> maxpool(2x2) -> conv(10, 2x2) -> relu
//! -> maxpool(2x2) -> flatten -> dense(128) -> relu`, then a softmax policy
//! head with one output per board column and a linear value head. Values are
//! in raw time units: the value head predicts minus the remaining completion
//! time, so it is clamped to be non-positive when used for search.
//!
//! Tensors are stored row-major in `f64`. Activations are laid out as
//! `[channel][row][col]` with row 0 being the bottom row of the board.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{AgentAction, Game, GameState};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("board {board_w}x{board_h} does not fit the {input_w}x{input_h} network input")]
    BoardTooLarge {
        board_w: usize,
        board_h: usize,
        input_w: usize,
        input_h: usize,
    },
    #[error("checkpoint version mismatch: expected `{CHECKPOINT_HEADER}`, found `{0}`")]
    VersionMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Number of stone kinds, one input channel each.
pub const KIND_CHANNELS: usize = 3;

pub const CHECKPOINT_HEADER: &str = "HRCNET v1";

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub filters: [usize; 2],
    pub kernels: [usize; 2],
    pub pools: [usize; 2],
    pub hidden: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        NetShape {
            height: 15,
            width: 8,
            channels: KIND_CHANNELS,
            filters: [10, 10],
            kernels: [2, 2],
            pools: [2, 2],
            hidden: 128,
        }
    }
}

/// Spatial sizes after each layer, `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    pub conv1: (usize, usize),
    pub pool1: (usize, usize),
    pub conv2: (usize, usize),
    pub pool2: (usize, usize),
    pub flatten: usize,
}

fn conv_out(input: (usize, usize), k: usize) -> Option<(usize, usize)> {
    (input.0 >= k && input.1 >= k && k > 0).then(|| (input.0 - k + 1, input.1 - k + 1))
}

fn pool_out(input: (usize, usize), p: usize) -> Option<(usize, usize)> {
    let out = (input.0 / p.max(1), input.1 / p.max(1));
    (p > 0 && out.0 > 0 && out.1 > 0).then_some(out)
}

impl NetShape {
    /// Default architecture sized for a board, never smaller than 15x8.
    pub fn for_board(width: usize, height: usize) -> Self {
        let d = NetShape::default();
        NetShape {
            height: height.max(d.height),
            width: width.max(d.width),
            ..d
        }
    }

    pub fn dims(&self) -> Result<LayerDims, NetError> {
        let err = || NetError::ShapeMismatch(format!("layer sizes collapse for {self:?}"));
        let conv1 = conv_out((self.height, self.width), self.kernels[0]).ok_or_else(err)?;
        let pool1 = pool_out(conv1, self.pools[0]).ok_or_else(err)?;
        let conv2 = conv_out(pool1, self.kernels[1]).ok_or_else(err)?;
        let pool2 = pool_out(conv2, self.pools[1]).ok_or_else(err)?;
        Ok(LayerDims {
            conv1,
            pool1,
            conv2,
            pool2,
            flatten: self.filters[1] * pool2.0 * pool2.1,
        })
    }

    /// Names and dimensions of every parameter tensor, in storage order.
    pub fn tensor_layout(&self) -> Result<Vec<(&'static str, Vec<usize>)>, NetError> {
        let dims = self.dims()?;
        let [f1, f2] = self.filters;
        let [k1, k2] = self.kernels;
        Ok(vec![
            ("conv1.weight", vec![f1, self.channels, k1, k1]),
            ("conv1.bias", vec![f1]),
            ("conv2.weight", vec![f2, f1, k2, k2]),
            ("conv2.bias", vec![f2]),
            ("dense.weight", vec![self.hidden, dims.flatten]),
            ("dense.bias", vec![self.hidden]),
            ("policy.weight", vec![self.width, self.hidden]),
            ("policy.bias", vec![self.width]),
            ("value.weight", vec![1, self.hidden]),
            ("value.bias", vec![1]),
        ])
    }
}

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const DENSE_W: usize = 4;
const DENSE_B: usize = 5;
const POLICY_W: usize = 6;
const POLICY_B: usize = 7;
const VALUE_W: usize = 8;
const VALUE_B: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor {
            name: name.to_string(),
            dims,
            data: vec![0.0; len],
        }
    }
}

/// Network weights. Gradients and optimizer state use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    shape: NetShape,
    dims: LayerDims,
    tensors: Vec<Tensor>,
}

impl Parameters {
    pub fn zeros(shape: NetShape) -> Result<Self, NetError> {
        let dims = shape.dims()?;
        let tensors = shape
            .tensor_layout()?
            .into_iter()
            .map(|(name, d)| Tensor::zeros(name, d))
            .collect();
        Ok(Parameters {
            shape,
            dims,
            tensors,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self, NetError> {
        let mut params = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in params.tensors.iter_mut() {
            if t.name.ends_with(".bias") {
                continue;
            }
            let (fan_in, fan_out) = match t.dims.as_slice() {
                [o, i, kh, kw] => (i * kh * kw, o * kh * kw),
                [o, i] => (*i, *o),
                _ => unreachable!("weights are 2-d or 4-d"),
            };
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in t.data.iter_mut() {
                *w = rng.gen_range(-s..=s);
            }
        }
        Ok(params)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn layer_dims(&self) -> &LayerDims {
        &self.dims
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|w| w * w)
            .sum()
    }

    fn check_same_shape(&self, other: &Parameters) -> Result<(), NetError> {
        if self.shape != other.shape {
            return Err(NetError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn t(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }
}

/// `h x w x 3` one-hot-by-kind occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl InputTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        InputTensor {
            height,
            width,
            data: vec![0.0; KIND_CHANNELS * height * width],
        }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    fn set(&mut self, channel: usize, row: usize, col: usize, v: f64) {
        self.data[(channel * self.height + row) * self.width + col] = v;
    }
}

/// Encodes the stones on the board; boards smaller than the input are
/// zero-padded at the top and right.
pub fn encode_state(state: &GameState, shape: &NetShape) -> Result<InputTensor, NetError> {
    let board = state.board();
    if board.width() > shape.width || board.height() > shape.height {
        return Err(NetError::BoardTooLarge {
            board_w: board.width(),
            board_h: board.height(),
            input_w: shape.width,
            input_h: shape.height,
        });
    }
    let mut x = InputTensor::zeros(shape.height, shape.width);
    for row in 0..board.height() {
        for col in 0..board.width() {
            if let Some(t) = board.cell(col, row) {
                x.set(board.kind_of(t).channel(), row, col, 1.0);
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    /// Distribution over board columns.
    pub p: Vec<f64>,
    /// Minus the estimated remaining completion time, never positive.
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: InputTensor,
    pub target_policy: Vec<f64>,
    pub target_value: f64,
}

/// Per-term mean losses over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub value: f64,
    pub policy: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.value + self.policy + self.l2
    }
}

// ---------------------------------------------------------------------------
// layer kernels

fn conv_forward(
    input: &[f64],
    in_ch: usize,
    in_dims: (usize, usize),
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    out_dims: (usize, usize),
) -> Vec<f64> {
    let (ih, iw) = in_dims;
    let (oh, ow) = out_dims;
    let mut out = vec![0.0; out_ch * oh * ow];
    for f in 0..out_ch {
        let plane = &mut out[f * oh * ow..(f + 1) * oh * ow];
        plane.iter_mut().for_each(|o| *o = bias[f]);
        for c in 0..in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let w = weight[((f * in_ch + c) * k + ky) * k + kx];
                    if w == 0.0 {
                        continue;
                    }
                    for y in 0..oh {
                        let src = &input[(c * ih + y + ky) * iw + kx..];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (o, i) in dst.iter_mut().zip(src.iter()) {
                            *o += w * i;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_ch: usize,
    in_dims: (usize, usize),
    weight: &[f64],
    out_ch: usize,
    k: usize,
    out_dims: (usize, usize),
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let (ih, iw) = in_dims;
    let (oh, ow) = out_dims;
    for f in 0..out_ch {
        let plane = &dout[f * oh * ow..(f + 1) * oh * ow];
        dbias[f] += plane.iter().sum::<f64>();
        for c in 0..in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..oh {
                        for x in 0..ow {
                            acc += plane[y * ow + x] * input[(c * ih + y + ky) * iw + x + kx];
                        }
                    }
                    dweight[((f * in_ch + c) * k + ky) * k + kx] += acc;
                }
            }
        }
    }
    if let Some(din) = dinput {
        for f in 0..out_ch {
            let plane = &dout[f * oh * ow..(f + 1) * oh * ow];
            for c in 0..in_ch {
                for ky in 0..k {
                    for kx in 0..k {
                        let w = weight[((f * in_ch + c) * k + ky) * k + kx];
                        for y in 0..oh {
                            for x in 0..ow {
                                din[(c * ih + y + ky) * iw + x + kx] += w * plane[y * ow + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling with floor semantics. Returns the pooled
/// values and, for each output, the flat input index of the winning cell.
fn pool_forward(input: &[f64], ch: usize, in_dims: (usize, usize), p: usize, out_dims: (usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (ih, iw) = in_dims;
    let (oh, ow) = out_dims;
    let mut out = Vec::with_capacity(ch * oh * ow);
    let mut arg = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for y in 0..oh {
            for x in 0..ow {
                let mut best_i = (c * ih + y * p) * iw + x * p;
                let mut best = input[best_i];
                for dy in 0..p {
                    for dx in 0..p {
                        let i = (c * ih + y * p + dy) * iw + x * p + dx;
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64], out_len: usize) -> Vec<f64> {
    let n = input.len();
    (0..out_len)
        .map(|o| {
            bias[o]
                + weight[o * n..(o + 1) * n]
                    .iter()
                    .zip(input)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
        })
        .collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Intermediate values kept for backpropagation.
struct Trace {
    a1: Vec<f64>,
    pooled1: Vec<f64>,
    arg1: Vec<usize>,
    a2: Vec<f64>,
    flat: Vec<f64>,
    arg2: Vec<usize>,
    hidden: Vec<f64>,
    log_p: Vec<f64>,
    value: f64,
}

impl Parameters {
    fn check_input(&self, x: &InputTensor) -> Result<(), NetError> {
        if x.height != self.shape.height
            || x.width != self.shape.width
            || x.data.len() != self.shape.channels * x.height * x.width
        {
            return Err(NetError::ShapeMismatch(format!(
                "input {}x{} does not match network {}x{}",
                x.height, x.width, self.shape.height, self.shape.width
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &InputTensor) -> Trace {
        let s = &self.shape;
        let d = &self.dims;
        let [f1, f2] = s.filters;
        let [k1, k2] = s.kernels;
        let mut a1 = conv_forward(&x.data, s.channels, (s.height, s.width), self.t(CONV1_W), self.t(CONV1_B), f1, k1, d.conv1);
        relu_in_place(&mut a1);
        let (pooled1, arg1) = pool_forward(&a1, f1, d.conv1, s.pools[0], d.pool1);
        let mut a2 = conv_forward(&pooled1, f1, d.pool1, self.t(CONV2_W), self.t(CONV2_B), f2, k2, d.conv2);
        relu_in_place(&mut a2);
        let (flat, arg2) = pool_forward(&a2, f2, d.conv2, s.pools[1], d.pool2);
        let mut hidden = dense_forward(&flat, self.t(DENSE_W), self.t(DENSE_B), s.hidden);
        relu_in_place(&mut hidden);
        let logits = dense_forward(&hidden, self.t(POLICY_W), self.t(POLICY_B), s.width);
        let value = dense_forward(&hidden, self.t(VALUE_W), self.t(VALUE_B), 1)[0];
        Trace {
            a1,
            pooled1,
            arg1,
            a2,
            flat,
            arg2,
            hidden,
            log_p: log_softmax(&logits),
            value,
        }
    }

    /// Policy distribution and the raw (unclamped) value estimate.
    pub fn forward_raw(&self, x: &InputTensor) -> Result<(Vec<f64>, f64), NetError> {
        self.check_input(x)?;
        let tr = self.trace(x);
        Ok((tr.log_p.iter().map(|l| l.exp()).collect(), tr.value))
    }

    pub fn forward(&self, x: &InputTensor) -> Result<PolicyValue, NetError> {
        let (p, v) = self.forward_raw(x)?;
        Ok(PolicyValue { p, v: v.min(0.0) })
    }

    /// Accumulates `scale * d(loss_i)/d(theta)` for one example into `grad`;
    /// returns the example's (value, policy) loss terms.
    fn accumulate(&self, ex: &TrainingExample, scale: f64, grad: &mut Parameters) -> (f64, f64) {
        let s = &self.shape;
        let d = &self.dims;
        let [f1, f2] = s.filters;
        let [k1, k2] = s.kernels;
        let tr = self.trace(&ex.input);

        let value_loss = (ex.target_value - tr.value).powi(2);
        let policy_loss: f64 = -ex
            .target_policy
            .iter()
            .zip(&tr.log_p)
            .map(|(pi, lp)| if *pi == 0.0 { 0.0 } else { pi * lp })
            .sum::<f64>();

        let dv = scale * 2.0 * (tr.value - ex.target_value);
        let mass: f64 = ex.target_policy.iter().sum();
        let dlogits: Vec<f64> = tr
            .log_p
            .iter()
            .zip(&ex.target_policy)
            .map(|(lp, pi)| scale * (lp.exp() * mass - pi))
            .collect();

        let mut dhidden = vec![0.0; s.hidden];
        {
            let [.., pw, pb, vw, vb] = &mut grad.tensors[..] else {
                unreachable!()
            };
            for (o, g) in dlogits.iter().enumerate() {
                pb.data[o] += g;
                for (j, h) in tr.hidden.iter().enumerate() {
                    pw.data[o * s.hidden + j] += g * h;
                    dhidden[j] += g * self.t(POLICY_W)[o * s.hidden + j];
                }
            }
            vb.data[0] += dv;
            for (j, h) in tr.hidden.iter().enumerate() {
                vw.data[j] += dv * h;
                dhidden[j] += dv * self.t(VALUE_W)[j];
            }
        }
        for (g, h) in dhidden.iter_mut().zip(&tr.hidden) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }

        let n = tr.flat.len();
        let mut dflat = vec![0.0; n];
        for (o, g) in dhidden.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            grad.tensors[DENSE_B].data[o] += g;
            let wrow = &self.t(DENSE_W)[o * n..(o + 1) * n];
            let grow = &mut grad.tensors[DENSE_W].data[o * n..(o + 1) * n];
            for j in 0..n {
                grow[j] += g * tr.flat[j];
                dflat[j] += g * wrow[j];
            }
        }

        let mut da2 = vec![0.0; tr.a2.len()];
        for (g, &i) in dflat.iter().zip(&tr.arg2) {
            if tr.a2[i] > 0.0 {
                da2[i] += g;
            }
        }
        let mut dpooled1 = vec![0.0; tr.pooled1.len()];
        {
            let (lo, hi) = grad.tensors.split_at_mut(CONV2_B);
            conv_backward(
                &tr.pooled1,
                f1,
                d.pool1,
                self.t(CONV2_W),
                f2,
                k2,
                d.conv2,
                &da2,
                &mut lo[CONV2_W].data,
                &mut hi[0].data,
                Some(&mut dpooled1),
            );
        }
        let mut da1 = vec![0.0; tr.a1.len()];
        for (g, &i) in dpooled1.iter().zip(&tr.arg1) {
            if tr.a1[i] > 0.0 {
                da1[i] += g;
            }
        }
        let (lo, hi) = grad.tensors.split_at_mut(CONV1_B);
        conv_backward(
            &ex.input.data,
            s.channels,
            (s.height, s.width),
            self.t(CONV1_W),
            f1,
            k1,
            d.conv1,
            &da1,
            &mut lo[CONV1_W].data,
            &mut hi[0].data,
            None,
        );
        (value_loss, policy_loss)
    }
}

fn check_batch(params: &Parameters, batch: &[TrainingExample]) -> Result<(), NetError> {
    if batch.is_empty() {
        return Err(NetError::ShapeMismatch("empty batch".into()));
    }
    for ex in batch {
        params.check_input(&ex.input)?;
        if ex.target_policy.len() != params.shape.width {
            return Err(NetError::ShapeMismatch(format!(
                "policy target of length {} for a {}-wide network",
                ex.target_policy.len(),
                params.shape.width
            )));
        }
    }
    Ok(())
}

/// Mean over the batch of `(z - v)^2 - sum pi log p`, plus `l2 * |theta|^2`.
/// `v` here is the unclamped value output.
pub fn loss(params: &Parameters, batch: &[TrainingExample], l2: f64) -> Result<LossBreakdown, NetError> {
    check_batch(params, batch)?;
    let mut out = LossBreakdown::default();
    for ex in batch {
        let tr = params.trace(&ex.input);
        out.value += (ex.target_value - tr.value).powi(2);
        out.policy -= ex
            .target_policy
            .iter()
            .zip(&tr.log_p)
            .map(|(pi, lp)| if *pi == 0.0 { 0.0 } else { pi * lp })
            .sum::<f64>();
    }
    let b = batch.len() as f64;
    out.value /= b;
    out.policy /= b;
    out.l2 = l2 * params.sum_of_squares();
    Ok(out)
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn gradients(params: &Parameters, batch: &[TrainingExample], l2: f64) -> Result<(Parameters, LossBreakdown), NetError> {
    check_batch(params, batch)?;
    let mut grad = Parameters::zeros(params.shape)?;
    let scale = 1.0 / batch.len() as f64;
    let mut out = LossBreakdown::default();
    for ex in batch {
        let (v, p) = params.accumulate(ex, scale, &mut grad);
        out.value += v * scale;
        out.policy += p * scale;
    }
    if l2 != 0.0 {
        for (g, w) in grad.tensors.iter_mut().zip(&params.tensors) {
            for (gi, wi) in g.data.iter_mut().zip(&w.data) {
                *gi += 2.0 * l2 * wi;
            }
        }
    }
    out.l2 = l2 * params.sum_of_squares();
    Ok((grad, out))
}

/// Stochastic gradient descent with classic momentum:
/// `velocity = momentum * velocity + grad; theta -= lr * velocity`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Parameters>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grad: &Parameters) -> Result<(), NetError> {
        params.check_same_shape(grad)?;
        let velocity = match &mut self.velocity {
            Some(v) => v,
            None => self.velocity.insert(Parameters::zeros(params.shape)?),
        };
        for ((p, g), v) in params
            .tensors
            .iter_mut()
            .zip(&grad.tensors)
            .zip(velocity.tensors.iter_mut())
        {
            for ((pi, gi), vi) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= self.lr * *vi;
            }
        }
        Ok(())
    }
}

/// Something that scores a game state for the tree search.
pub trait Evaluator: Sync {
    /// Prior over board columns and a value in raw time units.
    fn evaluate(&self, game: &Game, state: &GameState) -> Result<PolicyValue, NetError>;
}

impl Evaluator for Parameters {
    fn evaluate(&self, _game: &Game, state: &GameState) -> Result<PolicyValue, NetError> {
        self.forward(&encode_state(state, &self.shape)?)
    }
}

/// Uniform prior over the board's columns and a value of zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, game: &Game, _state: &GameState) -> Result<PolicyValue, NetError> {
        let w = game.spec().width;
        Ok(PolicyValue {
            p: vec![1.0 / w as f64; w],
            v: 0.0,
        })
    }
}

/// Folds a distribution over actions onto board columns, dropping the no-op
/// mass and renormalizing. `None` when no pick carries any mass.
pub fn fold_policy(state: &GameState, policy: &[(AgentAction, f64)], width: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; width];
    for (a, p) in policy {
        if let AgentAction::Pick(t) = a {
            out[state.board().col_of(*t)] += p;
        }
    }
    let mass: f64 = out.iter().sum();
    if mass <= 0.0 {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= mass);
    Some(out)
}

// ---------------------------------------------------------------------------
// checkpoints

/// Writes `HRCNET v1`, then each tensor as `tensor <name> <dims..>` followed
/// by its row-major values with 17 significant digits, then `end`.
pub fn save_checkpoint<W: Write>(params: &Parameters, mut out: W) -> Result<(), NetError> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    for t in &params.tensors {
        write!(out, "tensor {}", t.name)?;
        for d in &t.dims {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        let row = *t.dims.last().unwrap_or(&1);
        for chunk in t.data.chunks(row.max(1)) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`] for the given shape.
pub fn load_checkpoint<R: BufRead>(source: R, shape: NetShape) -> Result<Parameters, NetError> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(NetError::Corrupt("empty checkpoint".into())),
    };
    if header.trim_end() != CHECKPOINT_HEADER {
        return Err(NetError::VersionMismatch(header));
    }
    let mut params = Parameters::zeros(shape)?;
    let mut tokens: Vec<String> = Vec::new();
    for line in lines {
        let line = line?;
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    let mut it = tokens.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| NetError::Corrupt(format!("truncated before {what}")));
    for t in params.tensors.iter_mut() {
        let kw = next("tensor header")?;
        if kw != "tensor" {
            return Err(NetError::Corrupt(format!("expected `tensor`, found `{kw}`")));
        }
        let name = next("tensor name")?;
        if name != t.name {
            return Err(NetError::ShapeMismatch(format!("expected tensor {}, found {name}", t.name)));
        }
        for (axis, &expected) in t.dims.iter().enumerate() {
            let raw = next("tensor dims")?;
            let got: usize = raw
                .parse()
                .map_err(|_| NetError::Corrupt(format!("bad dimension `{raw}`")))?;
            if got != expected {
                return Err(NetError::ShapeMismatch(format!(
                    "{} axis {axis}: expected {expected}, found {got}",
                    t.name
                )));
            }
        }
        for v in t.data.iter_mut() {
            let raw = next("tensor values")?;
            *v = raw
                .parse()
                .map_err(|_| NetError::Corrupt(format!("bad value `{raw}` in {}", t.name)))?;
        }
    }
    match next("end marker")?.as_str() {
        "end" => {}
        other => return Err(NetError::ShapeMismatch(format!("unexpected trailing `{other}`"))),
    }
    if let Ok(extra) = next("") {
        return Err(NetError::Corrupt(format!("data after end marker: `{extra}`")));
    }
    Ok(params)
}
