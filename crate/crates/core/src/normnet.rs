//! Miniature voxel-level normalcy segmentation network.
//!
//! Encoder-decoder with skip connections: 3x3x3 convolutions (zero padding)
//! with ReLU, 2x max pooling per encoder level, nearest-neighbor upsampling
//! plus skip concatenation in the decoder, and a final 3x3x3 convolution to
//! one sigmoid channel. Parameters and optimizer state are stored as f32;
//! every computation runs in f64, which keeps training deterministic and the
//! finite-difference oracles tight.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::lesionforge::TrainPair;
use crate::seeds;
use crate::vol3::{Dims3, Mask3, Volume3};
use crate::{Error, Result};

const KERNEL: usize = 3;
const DICE_EPS: f64 = 1e-5;
const BCE_CLAMP: f64 = 1e-7;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub levels: usize,
    pub base_channels: usize,
    /// Training/inference patch shape (d, h, w); each divisible by
    /// 2^(levels-1).
    pub patch_dims: [usize; 3],
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub dice_weight: f64,
    pub ce_weight: f64,
    /// Probability strictly above this counts as healthy.
    pub prob_threshold: f64,
    pub ensemble_size: usize,
    pub vote_quorum: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            levels: 3,
            base_channels: 8,
            patch_dims: [32, 32, 32],
            lr: 3e-4,
            batch_size: 2,
            iterations: 300,
            dice_weight: 1.0,
            ce_weight: 1.0,
            prob_threshold: 0.95,
            ensemble_size: 5,
            vote_quorum: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::config("levels must be >= 1"));
        }
        if self.base_channels < 1 {
            return Err(Error::config("base_channels must be >= 1"));
        }
        let down = 1usize << (self.levels - 1);
        if self.patch_dims.iter().any(|&d| d == 0 || d % down != 0) {
            return Err(Error::config(format!(
                "patch_dims {:?} must be positive and divisible by {down}",
                self.patch_dims
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be finite and >= 0"));
        }
        if self.dice_weight < 0.0 || self.ce_weight < 0.0 {
            return Err(Error::config("loss weights must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.prob_threshold) {
            return Err(Error::config("prob_threshold must lie in [0,1]"));
        }
        if self.ensemble_size < 1 || self.vote_quorum < 1 || self.vote_quorum > self.ensemble_size {
            return Err(Error::config("need 1 <= vote_quorum <= ensemble_size"));
        }
        Ok(())
    }

    fn patch(&self) -> Dims3 {
        Dims3::new(self.patch_dims[0], self.patch_dims[1], self.patch_dims[2])
    }
}

/// Dense activation tensor: `channels` grids of `dims` f64 scalars.
#[derive(Clone, Debug)]
pub(crate) struct Tensor4 {
    channels: usize,
    dims: Dims3,
    data: Vec<f64>,
}

impl Tensor4 {
    fn zeros(channels: usize, dims: Dims3) -> Self {
        Tensor4 { channels, dims, data: vec![0.0; channels * dims.len()] }
    }

    #[inline]
    fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Offsets of one convolution's parameters inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerDesc {
    in_ch: usize,
    out_ch: usize,
    weight_off: usize,
    bias_off: usize,
}

impl LayerDesc {
    fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * KERNEL * KERNEL * KERNEL
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Topology {
    encoders: Vec<LayerDesc>,
    /// Decoder conv for level i consumes the upsampled deeper features
    /// concatenated with the level-i skip.
    decoders: Vec<LayerDesc>,
    final_layer: LayerDesc,
    total: usize,
}

fn build_topology(cfg: &NetConfig) -> Topology {
    let mut off = 0usize;
    let mut alloc = |in_ch: usize, out_ch: usize| {
        let weight_off = off;
        off += out_ch * in_ch * KERNEL * KERNEL * KERNEL;
        let bias_off = off;
        off += out_ch;
        LayerDesc { in_ch, out_ch, weight_off, bias_off }
    };
    let ch = |level: usize| cfg.base_channels << level;
    let encoders: Vec<LayerDesc> = (0..cfg.levels)
        .map(|i| {
            let in_ch = if i == 0 { 1 } else { ch(i - 1) };
            alloc(in_ch, ch(i))
        })
        .collect();
    let decoders: Vec<LayerDesc> = (0..cfg.levels.saturating_sub(1))
        .map(|i| alloc(ch(i + 1) + ch(i), ch(i)))
        .collect();
    let final_layer = alloc(cfg.base_channels, 1);
    Topology { encoders, decoders, final_layer, total: off }
}

/// The network: config, flat f32 parameters, and Adam state.
#[derive(Clone, Debug)]
pub struct TinyNet {
    config: NetConfig,
    topology: Topology,
    params: Vec<f32>,
    adam_m: Vec<f32>,
    adam_v: Vec<f32>,
    step: u64,
}

impl PartialEq for TinyNet {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.adam_m == other.adam_m
            && self.adam_v == other.adam_v
            && self.step == other.step
            && self.topology == other.topology
    }
}

impl TinyNet {
    /// All-zero parameters (outputs sigmoid(0) = 0.5 everywhere).
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let topology = build_topology(&config);
        let total = topology.total;
        Ok(TinyNet {
            config,
            topology,
            params: vec![0.0; total],
            adam_m: vec![0.0; total],
            adam_v: vec![0.0; total],
            step: 0,
        })
    }

    /// He-style initialization, deterministic in the seed.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = seeds::rng_from(seed);
        let layers: Vec<LayerDesc> = net.layer_order();
        for layer in layers {
            let fan_in = (layer.in_ch * KERNEL * KERNEL * KERNEL) as f64;
            let std = (2.0 / fan_in).sqrt();
            for i in 0..layer.weight_len() {
                net.params[layer.weight_off + i] = (gaussian(&mut rng) * std) as f32;
            }
            // Biases stay zero.
        }
        Ok(net)
    }

    fn layer_order(&self) -> Vec<LayerDesc> {
        let mut all = self.topology.encoders.clone();
        all.extend(self.topology.decoders.iter().cloned());
        all.push(self.topology.final_layer);
        all
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.topology.total
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update from a flat gradient vector.
    pub fn adam_step(&mut self, grads: &[f64], lr: f64) {
        assert_eq!(grads.len(), self.params.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for i in 0..self.params.len() {
            let g = grads[i];
            let m = ADAM_BETA1 * self.adam_m[i] as f64 + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.adam_v[i] as f64 + (1.0 - ADAM_BETA2) * g * g;
            self.adam_m[i] = m as f32;
            self.adam_v[i] = v as f32;
            let update = lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
            self.params[i] = (self.params[i] as f64 - update) as f32;
        }
    }

    /// Forward pass on a windowed patch; the probability patch has the same
    /// spatial dims.
    pub fn forward_volume(&self, patch: &Volume3) -> Result<Volume3> {
        let trace = self.forward_trace(&self.patch_to_tensor(patch)?)?;
        let data: Vec<f32> = trace.probs.iter().map(|&p| p as f32).collect();
        Ok(Volume3::new_windowed(patch.dims(), patch.spacing(), data)?)
    }

    fn patch_to_tensor(&self, patch: &Volume3) -> Result<Tensor4> {
        if patch.dims() != self.config.patch() {
            return Err(Error::ShapeMismatch(patch.dims(), self.config.patch()));
        }
        let mut t = Tensor4::zeros(1, patch.dims());
        for (dst, &src) in t.data.iter_mut().zip(patch.data()) {
            *dst = src as f64;
        }
        Ok(t)
    }

    fn forward_trace(&self, input: &Tensor4) -> Result<Trace> {
        let levels = self.config.levels;
        let mut enc_pre = Vec::with_capacity(levels);
        let mut enc_act = Vec::with_capacity(levels);
        let mut pooled: Vec<Tensor4> = Vec::with_capacity(levels.saturating_sub(1));
        let mut pool_argmax = Vec::with_capacity(levels.saturating_sub(1));

        for i in 0..levels {
            let x = if i == 0 { input } else { &pooled[i - 1] };
            let pre = conv3_forward(&self.topology.encoders[i], &self.params, x);
            let act = relu(&pre);
            enc_pre.push(pre);
            enc_act.push(act);
            if i + 1 < levels {
                let (p, argmax) = maxpool2(&enc_act[i]);
                pooled.push(p);
                pool_argmax.push(argmax);
            }
        }

        let mut cats: Vec<Option<Tensor4>> = (0..levels).map(|_| None).collect();
        let mut dec_pre: Vec<Option<Tensor4>> = (0..levels).map(|_| None).collect();
        let mut dec_act: Vec<Option<Tensor4>> = (0..levels).map(|_| None).collect();
        let mut cur = enc_act[levels - 1].clone();
        for i in (0..levels.saturating_sub(1)).rev() {
            let up = upsample2(&cur);
            let cat = concat(&up, &enc_act[i]);
            let pre = conv3_forward(&self.topology.decoders[i], &self.params, &cat);
            let act = relu(&pre);
            cats[i] = Some(cat);
            dec_pre[i] = Some(pre);
            dec_act[i] = Some(act.clone());
            cur = act;
        }

        let logits = conv3_forward(&self.topology.final_layer, &self.params, &cur);
        let probs: Vec<f64> = logits.data.iter().map(|&z| sigmoid(z)).collect();
        Ok(Trace {
            input: input.clone(),
            enc_pre,
            enc_act,
            pooled,
            pool_argmax,
            cats,
            dec_pre,
            dec_act,
            logits,
            probs,
        })
    }

    /// Reverse-mode gradients of the loss w.r.t. every parameter, given the
    /// gradient w.r.t. the output probabilities.
    fn backward_from_probs(&self, trace: &Trace, dloss_dprob: &[f64]) -> Vec<f64> {
        let levels = self.config.levels;
        let mut grads = vec![0.0f64; self.topology.total];

        // Through the sigmoid.
        let mut dlogits = Tensor4::zeros(1, trace.logits.dims);
        for (i, dst) in dlogits.data.iter_mut().enumerate() {
            let p = trace.probs[i];
            *dst = dloss_dprob[i] * p * (1.0 - p);
        }

        let final_input: &Tensor4 = if levels == 1 {
            &trace.enc_act[0]
        } else {
            trace.dec_act[0].as_ref().unwrap()
        };
        let mut dcur = conv3_backward(
            &self.topology.final_layer,
            &self.params,
            final_input,
            &dlogits,
            &mut grads,
        );

        let mut denc_act: Vec<Option<Tensor4>> = (0..levels).map(|_| None).collect();
        for i in 0..levels.saturating_sub(1) {
            // dcur holds the gradient w.r.t. dec_act[i].
            relu_backward(&mut dcur, trace.dec_pre[i].as_ref().unwrap());
            let dcat = conv3_backward(
                &self.topology.decoders[i],
                &self.params,
                trace.cats[i].as_ref().unwrap(),
                &dcur,
                &mut grads,
            );
            let deeper_ch = self.config.base_channels << (i + 1);
            let (dup, dskip) = split_channels(&dcat, deeper_ch);
            accumulate(&mut denc_act[i], dskip);
            dcur = upsample2_backward(&dup);
        }
        // After the unwind, dcur is the gradient w.r.t. the deepest encoder
        // activation.
        accumulate(&mut denc_act[levels - 1], dcur);

        for i in (0..levels).rev() {
            let mut dact = denc_act[i].take().expect("encoder gradient present");
            relu_backward(&mut dact, &trace.enc_pre[i]);
            let enc_input: &Tensor4 = if i == 0 { &trace.input } else { &trace.pooled[i - 1] };
            let dinput = conv3_backward(
                &self.topology.encoders[i],
                &self.params,
                enc_input,
                &dact,
                &mut grads,
            );
            if i > 0 {
                let dpooled =
                    maxpool2_backward(&dinput, &trace.pool_argmax[i - 1], trace.enc_act[i - 1].dims, trace.enc_act[i - 1].channels);
                accumulate(&mut denc_act[i - 1], dpooled);
            }
        }
        grads
    }

    /// Loss and flat parameter gradients for one (patch, ground-truth) pair.
    pub fn loss_and_gradients(&self, patch: &Volume3, gt: &Mask3) -> Result<(f64, Vec<f64>)> {
        gt.same_shape(patch.dims())?;
        let trace = self.forward_trace(&self.patch_to_tensor(patch)?)?;
        let (loss, dprob) = dice_bce_loss(
            &trace.probs,
            gt.bits(),
            self.config.dice_weight,
            self.config.ce_weight,
        );
        let grads = self.backward_from_probs(&trace, &dprob);
        Ok((loss, grads))
    }

    /// Parameter gradients for an externally supplied output-probability
    /// gradient (zero upstream gradient must yield zero parameter
    /// gradients).
    pub fn gradients_from_output(&self, patch: &Volume3, dloss_dprob: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(&self.patch_to_tensor(patch)?)?;
        if dloss_dprob.len() != trace.probs.len() {
            return Err(Error::param("output gradient length mismatch"));
        }
        Ok(self.backward_from_probs(&trace, dloss_dprob))
    }
}

struct Trace {
    input: Tensor4,
    enc_pre: Vec<Tensor4>,
    enc_act: Vec<Tensor4>,
    pooled: Vec<Tensor4>,
    pool_argmax: Vec<Vec<usize>>,
    cats: Vec<Option<Tensor4>>,
    dec_pre: Vec<Option<Tensor4>>,
    dec_act: Vec<Option<Tensor4>>,
    logits: Tensor4,
    probs: Vec<f64>,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn relu(t: &Tensor4) -> Tensor4 {
    let mut out = t.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// In place: gradient through ReLU given the pre-activation.
fn relu_backward(dact: &mut Tensor4, pre: &Tensor4) {
    for (g, &p) in dact.data.iter_mut().zip(&pre.data) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

fn accumulate(slot: &mut Option<Tensor4>, t: Tensor4) {
    match slot {
        None => *slot = Some(t),
        Some(existing) => {
            for (a, b) in existing.data.iter_mut().zip(&t.data) {
                *a += b;
            }
        }
    }
}

/// Fused x-axis 3-tap update: `out[x] += w0 in[x-1] + w1 in[x] + w2 in[x+1]`
/// with zero padding at the row ends.
/// Fused x-axis 3-tap stencil over a flattened contiguous block of rows of
/// width `w`: `out[f] += w0 in[f-1] + w1 in[f] + w2 in[f+1]`, with the
/// wrap-around terms at row seams removed afterwards so each row behaves as
/// if zero-padded. Operating on whole blocks keeps the hot loop long.
#[inline]
fn block_taps_forward(out: &mut [f64], inp: &[f64], w: usize, w0: f64, w1: f64, w2: f64) {
    let m = out.len();
    if m == 1 {
        out[0] += w1 * inp[0];
        return;
    }
    out[0] += w1 * inp[0] + w2 * inp[1];
    {
        let inner = &mut out[1..m - 1];
        let left = &inp[..m - 2];
        let mid = &inp[1..m - 1];
        let right = &inp[2..];
        for (((o, &a), &b), &c) in inner.iter_mut().zip(left).zip(mid).zip(right) {
            *o += w0 * a + w1 * b + w2 * c;
        }
    }
    out[m - 1] += w0 * inp[m - 2] + w1 * inp[m - 1];
    for y in 1..m / w {
        let f = y * w;
        out[f] -= w0 * inp[f - 1];
        out[f - 1] -= w2 * inp[f];
    }
}

/// 3x3x3 convolution with zero padding 1.
fn conv3_forward(layer: &LayerDesc, params: &[f32], input: &Tensor4) -> Tensor4 {
    let dims = input.dims;
    let (dd, hh, ww) = (dims.d, dims.h, dims.w);
    let hw = hh * ww;
    let mut out = Tensor4::zeros(layer.out_ch, dims);
    for co in 0..layer.out_ch {
        let bias = params[layer.bias_off + co] as f64;
        out.channel_mut(co).fill(bias);
    }
    for co in 0..layer.out_ch {
        let och = out.channel_mut(co);
        for ci in 0..layer.in_ch {
            let inp = input.channel(ci);
            let wbase = layer.weight_off + (co * layer.in_ch + ci) * 27;
            for z in 0..dd {
                for kz in 0..KERNEL {
                    let iz = z as i64 + kz as i64 - 1;
                    if iz < 0 || iz >= dd as i64 {
                        continue;
                    }
                    let in_plane = &inp[iz as usize * hw..(iz as usize + 1) * hw];
                    let out_plane = &mut och[z * hw..(z + 1) * hw];
                    for ky in 0..KERNEL {
                        let dy = ky as i64 - 1;
                        let y0 = 0.max(-dy) as usize;
                        let y1 = (hh as i64).min(hh as i64 - dy) as usize;
                        if y0 >= y1 {
                            continue;
                        }
                        let wrow = wbase + (kz * KERNEL + ky) * KERNEL;
                        block_taps_forward(
                            &mut out_plane[y0 * ww..y1 * ww],
                            &in_plane[(y0 as i64 + dy) as usize * ww..(y1 as i64 + dy) as usize * ww],
                            ww,
                            params[wrow] as f64,
                            params[wrow + 1] as f64,
                            params[wrow + 2] as f64,
                        );
                    }
                }
            }
        }
    }
    out
}

/// Per-row weight-gradient contributions for the three x-taps:
/// `dw[kx] = sum_x dout[x] * in[x + kx - 1]` over valid x.
/// Dot product with four independent accumulators (fixed lane order, so the
/// result is deterministic while still vectorizing).
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0f64;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Block-level weight-gradient contributions for the three x-taps, with the
/// row-seam wrap-around pairs removed.
#[inline]
fn block_taps_grad(dout: &[f64], inp: &[f64], w: usize) -> (f64, f64, f64) {
    let m = dout.len();
    let dw1 = dot4(dout, inp);
    if m == 1 {
        return (0.0, dw1, 0.0);
    }
    let mut dw0 = dot4(&dout[1..], &inp[..m - 1]);
    let mut dw2 = dot4(&dout[..m - 1], &inp[1..]);
    for y in 1..m / w {
        let f = y * w;
        dw0 -= dout[f] * inp[f - 1];
        dw2 -= dout[f - 1] * inp[f];
    }
    (dw0, dw1, dw2)
}

/// Backward of [`conv3_forward`]: accumulates dW/db into `grads` and returns
/// the gradient w.r.t. the layer input.
fn conv3_backward(
    layer: &LayerDesc,
    params: &[f32],
    input: &Tensor4,
    dout: &Tensor4,
    grads: &mut [f64],
) -> Tensor4 {
    let dims = input.dims;
    let (dd, hh, ww) = (dims.d, dims.h, dims.w);
    let mut dinput = Tensor4::zeros(layer.in_ch, dims);

    let hw = hh * ww;
    for co in 0..layer.out_ch {
        let doch = dout.channel(co);
        grads[layer.bias_off + co] += doch.iter().sum::<f64>();
        for ci in 0..layer.in_ch {
            let inp = input.channel(ci);
            let dich = dinput.channel_mut(ci);
            let wbase = layer.weight_off + (co * layer.in_ch + ci) * 27;
            let mut dw = [0.0f64; 27];
            for z in 0..dd {
                for kz in 0..KERNEL {
                    let iz = z as i64 + kz as i64 - 1;
                    if iz < 0 || iz >= dd as i64 {
                        continue;
                    }
                    let in_plane = &inp[iz as usize * hw..(iz as usize + 1) * hw];
                    let din_plane = &mut dich[iz as usize * hw..(iz as usize + 1) * hw];
                    let dout_plane = &doch[z * hw..(z + 1) * hw];
                    for ky in 0..KERNEL {
                        let dy = ky as i64 - 1;
                        let y0 = 0.max(-dy) as usize;
                        let y1 = (hh as i64).min(hh as i64 - dy) as usize;
                        if y0 >= y1 {
                            continue;
                        }
                        let kbase = (kz * KERNEL + ky) * KERNEL;
                        let dout_block = &dout_plane[y0 * ww..y1 * ww];
                        let in_block =
                            &in_plane[(y0 as i64 + dy) as usize * ww..(y1 as i64 + dy) as usize * ww];
                        let (dw0, dw1, dw2) = block_taps_grad(dout_block, in_block, ww);
                        dw[kbase] += dw0;
                        dw[kbase + 1] += dw1;
                        dw[kbase + 2] += dw2;
                        // dInput gets the transposed stencil: the x-taps flip
                        // around the center.
                        let din_block = &mut din_plane
                            [(y0 as i64 + dy) as usize * ww..(y1 as i64 + dy) as usize * ww];
                        block_taps_forward(
                            din_block,
                            dout_block,
                            ww,
                            params[wbase + kbase + 2] as f64,
                            params[wbase + kbase + 1] as f64,
                            params[wbase + kbase] as f64,
                        );
                    }
                }
            }
            for (k, &d) in dw.iter().enumerate() {
                grads[wbase + k] += d;
            }
        }
    }
    dinput
}

/// 2x max pooling; records the argmax input index per output element.
fn maxpool2(input: &Tensor4) -> (Tensor4, Vec<usize>) {
    let dims = input.dims;
    let out_dims = Dims3::new(dims.d / 2, dims.h / 2, dims.w / 2);
    let mut out = Tensor4::zeros(input.channels, out_dims);
    let mut argmax = vec![0usize; input.channels * out_dims.len()];
    for c in 0..input.channels {
        let inp = input.channel(c);
        let base = c * out_dims.len();
        let och = out.channel_mut(c);
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                for x in 0..out_dims.w {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for bz in 0..2 {
                        for by in 0..2 {
                            for bx in 0..2 {
                                let idx = dims.index(2 * z + bz, 2 * y + by, 2 * x + bx);
                                if inp[idx] > best {
                                    best = inp[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    let oidx = out_dims.index(z, y, x);
                    och[oidx] = best;
                    argmax[base + oidx] = c * dims.len() + best_idx;
                }
            }
        }
    }
    (out, argmax)
}

fn maxpool2_backward(dout: &Tensor4, argmax: &[usize], in_dims: Dims3, in_channels: usize) -> Tensor4 {
    let mut din = Tensor4::zeros(in_channels, in_dims);
    for (flat, &src) in argmax.iter().enumerate() {
        din.data[src] += dout.data[flat];
    }
    din
}

/// Nearest-neighbor 2x upsampling.
fn upsample2(input: &Tensor4) -> Tensor4 {
    let dims = input.dims;
    let out_dims = Dims3::new(dims.d * 2, dims.h * 2, dims.w * 2);
    let mut out = Tensor4::zeros(input.channels, out_dims);
    for c in 0..input.channels {
        let inp = input.channel(c);
        let och = out.channel_mut(c);
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                let irow = ((z / 2) * dims.h + y / 2) * dims.w;
                let orow = (z * out_dims.h + y) * out_dims.w;
                for x in 0..out_dims.w {
                    och[orow + x] = inp[irow + x / 2];
                }
            }
        }
    }
    out
}

fn upsample2_backward(dout: &Tensor4) -> Tensor4 {
    let out_dims = dout.dims;
    let dims = Dims3::new(out_dims.d / 2, out_dims.h / 2, out_dims.w / 2);
    let mut din = Tensor4::zeros(dout.channels, dims);
    for c in 0..dout.channels {
        let doch = dout.channel(c);
        let dich = din.channel_mut(c);
        for z in 0..out_dims.d {
            for y in 0..out_dims.h {
                let irow = ((z / 2) * dims.h + y / 2) * dims.w;
                let orow = (z * out_dims.h + y) * out_dims.w;
                for x in 0..out_dims.w {
                    dich[irow + x / 2] += doch[orow + x];
                }
            }
        }
    }
    din
}

fn concat(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    debug_assert_eq!(a.dims, b.dims);
    let mut out = Tensor4::zeros(a.channels + b.channels, a.dims);
    out.data[..a.data.len()].copy_from_slice(&a.data);
    out.data[a.data.len()..].copy_from_slice(&b.data);
    out
}

fn split_channels(t: &Tensor4, first: usize) -> (Tensor4, Tensor4) {
    let n = t.dims.len();
    let a = Tensor4 { channels: first, dims: t.dims, data: t.data[..first * n].to_vec() };
    let b = Tensor4 {
        channels: t.channels - first,
        dims: t.dims,
        data: t.data[first * n..].to_vec(),
    };
    (a, b)
}

/// Dice + mean binary cross-entropy over one patch, with the analytic
/// gradient w.r.t. the predicted probabilities.
pub fn dice_bce_loss(probs: &[f64], gt: &[bool], dice_weight: f64, ce_weight: f64) -> (f64, Vec<f64>) {
    assert_eq!(probs.len(), gt.len());
    let n = probs.len() as f64;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    let mut sum_pg = 0.0;
    for (&p, &g) in probs.iter().zip(gt) {
        sum_p += p;
        if g {
            sum_g += 1.0;
            sum_pg += p;
        }
    }
    let denom = sum_p + sum_g + DICE_EPS;
    let dice_loss = 1.0 - (2.0 * sum_pg + DICE_EPS) / denom;

    let mut bce = 0.0;
    let mut grad = vec![0.0f64; probs.len()];
    for (i, (&p, &g)) in probs.iter().zip(gt).enumerate() {
        let clamped = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let gv = if g { 1.0 } else { 0.0 };
        bce -= gv * clamped.ln() + (1.0 - gv) * (1.0 - clamped).ln();
        let mut dbce = 0.0;
        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
            dbce = (-gv / clamped + (1.0 - gv) / (1.0 - clamped)) / n;
        }
        // d(dice)/dp_i = -(2 g_i denom - (2 sum_pg + eps)) / denom^2.
        let ddice = -(2.0 * gv * denom - (2.0 * sum_pg + DICE_EPS)) / (denom * denom);
        grad[i] = dice_weight * ddice + ce_weight * dbce;
    }
    bce /= n;
    (dice_weight * dice_loss + ce_weight * bce, grad)
}

/// One row of the training log.
#[derive(Clone, Copy, Debug)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub loss: f64,
}

/// Train a network on random lung-centered patches from the pairs.
/// Deterministic in `(pairs, cfg, seed)`.
pub fn train(pairs: &[TrainPair], cfg: &NetConfig, seed: u64) -> Result<(TinyNet, Vec<TrainLogRow>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::config("training needs at least one pair"));
    }
    let patch = cfg.patch();
    let mut lung_voxels: Vec<Vec<usize>> = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let dims = pair.input.dims();
        if dims.d < patch.d || dims.h < patch.h || dims.w < patch.w {
            return Err(Error::config(format!(
                "case dims {dims} smaller than patch {patch}"
            )));
        }
        let voxels: Vec<usize> = pair.lung.set_indices().collect();
        if voxels.is_empty() {
            return Err(Error::config("training pair has an empty lung mask"));
        }
        lung_voxels.push(voxels);
    }

    let mut net = TinyNet::init(cfg.clone(), seeds::derive_seed(seed, seeds::STREAM_TRAIN, 0))?;
    let mut rng = seeds::rng_from(seeds::derive_seed(seed, seeds::STREAM_TRAIN, 1));
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let mut grads = vec![0.0f64; net.param_count()];
        let mut batch_loss = 0.0f64;
        for _ in 0..cfg.batch_size {
            let pi = rng.random_range(0..pairs.len());
            let pair = &pairs[pi];
            let center = lung_voxels[pi][rng.random_range(0..lung_voxels[pi].len())];
            let (patch_vol, patch_gt) = extract_patch(pair, center, patch);
            let (loss, g) = net.loss_and_gradients(&patch_vol, &patch_gt)?;
            batch_loss += loss;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let scale = 1.0 / cfg.batch_size as f64;
        for g in &mut grads {
            *g *= scale;
        }
        batch_loss *= scale;
        net.adam_step(&grads, cfg.lr);
        log.push(TrainLogRow { iteration, loss: batch_loss });
    }
    Ok((net, log))
}

/// Cut the patch whose clamped center is `center_idx` out of a pair.
pub fn extract_patch(pair: &TrainPair, center_idx: usize, patch: Dims3) -> (Volume3, Mask3) {
    let dims = pair.input.dims();
    let (cz, cy, cx) = dims.coords(center_idx);
    let origin = |c: usize, p: usize, n: usize| c.saturating_sub(p / 2).min(n - p);
    let (oz, oy, ox) = (origin(cz, patch.d, dims.d), origin(cy, patch.h, dims.h), origin(cx, patch.w, dims.w));
    let mut data = Vec::with_capacity(patch.len());
    let mut gt = Vec::with_capacity(patch.len());
    for z in 0..patch.d {
        for y in 0..patch.h {
            let row = dims.index(oz + z, oy + y, ox);
            data.extend_from_slice(&pair.input.data()[row..row + patch.w]);
            gt.extend(pair.gt.bits()[row..row + patch.w].iter().copied());
        }
    }
    let vol = Volume3::new_windowed(patch, pair.input.spacing(), data).expect("windowed slice");
    let mask = Mask3::from_bits(patch, gt).expect("same length");
    (vol, mask)
}

/// Sliding-window mean probability over the lung bounding box; voxels no
/// tile covers stay 0.
pub fn predict_prob(net: &TinyNet, thorax: &Volume3, lung: &Mask3) -> Result<Volume3> {
    thorax.same_shape(lung.dims())?;
    let dims = thorax.dims();
    let patch = net.config.patch();
    if dims.d < patch.d || dims.h < patch.h || dims.w < patch.w {
        return Err(Error::param(format!("volume {dims} smaller than patch {patch}")));
    }
    let Some((lo, hi)) = lung.bounding_box() else {
        return Ok(Volume3::zeros(dims, thorax.spacing()));
    };

    let origins = |lo: usize, hi: usize, p: usize, n: usize| {
        let mut v = Vec::new();
        let stride = (p / 2).max(1);
        let last = hi.min(n - 1);
        let mut o = lo.min(n - p);
        loop {
            let o_clamped = o.min(n - p);
            v.push(o_clamped);
            if o_clamped + p > last {
                break;
            }
            o = o_clamped + stride;
        }
        v.dedup();
        v
    };
    let zs = origins(lo.0, hi.0, patch.d, dims.d);
    let ys = origins(lo.1, hi.1, patch.h, dims.h);
    let xs = origins(lo.2, hi.2, patch.w, dims.w);

    let mut sum = vec![0.0f64; dims.len()];
    let mut count = vec![0u32; dims.len()];
    for &oz in &zs {
        for &oy in &ys {
            for &ox in &xs {
                let mut data = Vec::with_capacity(patch.len());
                for z in 0..patch.d {
                    for y in 0..patch.h {
                        let row = dims.index(oz + z, oy + y, ox);
                        data.extend_from_slice(&thorax.data()[row..row + patch.w]);
                    }
                }
                let tile = Volume3::new_windowed(patch, thorax.spacing(), data)?;
                let probs = net.forward_volume(&tile)?;
                for z in 0..patch.d {
                    for y in 0..patch.h {
                        let srow = dims.index(oz + z, oy + y, ox);
                        let prow = patch.index(z, y, 0);
                        for x in 0..patch.w {
                            sum[srow + x] += probs.data()[prow + x] as f64;
                            count[srow + x] += 1;
                        }
                    }
                }
            }
        }
    }
    let data: Vec<f32> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { (s / c as f64) as f32 } else { 0.0 })
        .collect();
    Ok(Volume3::new_windowed(dims, thorax.spacing(), data)?)
}

/// Healthy mask: probability strictly above the threshold, inside the lung.
pub fn predict_healthy(
    net: &TinyNet,
    thorax: &Volume3,
    lung: &Mask3,
    prob_threshold: f64,
) -> Result<Mask3> {
    let probs = predict_prob(net, thorax, lung)?;
    healthy_from_prob(&probs, lung, prob_threshold)
}

/// Threshold an (ensemble-averaged) probability volume into a healthy mask.
pub fn healthy_from_prob(probs: &Volume3, lung: &Mask3, prob_threshold: f64) -> Result<Mask3> {
    probs.same_shape(lung.dims())?;
    let bits = probs
        .data()
        .iter()
        .zip(lung.bits())
        .map(|(&p, &m)| m && p as f64 > prob_threshold)
        .collect();
    Mask3::from_bits(lung.dims(), bits)
}

/// Per-voxel quorum vote over member masks.
pub fn ensemble_vote(masks: &[Mask3], quorum: usize) -> Result<Mask3> {
    let Some(first) = masks.first() else {
        return Err(Error::config("ensemble vote needs at least one mask"));
    };
    if quorum > masks.len() || quorum == 0 {
        return Err(Error::config("need 1 <= quorum <= mask count"));
    }
    let dims = first.dims();
    let mut votes = vec![0u32; dims.len()];
    for m in masks {
        m.same_shape(dims)?;
        for (v, &b) in votes.iter_mut().zip(m.bits()) {
            if b {
                *v += 1;
            }
        }
    }
    Mask3::from_bits(dims, votes.iter().map(|&v| v as usize >= quorum).collect())
}

// ---------------------------------------------------------------------------
// TNET model file: magic `TNET` | version u8 = 1 | config block | parameter
// tensors, Adam moments, step counter | CRC32 of all preceding bytes.
// Tensors are f32 little-endian in declaration order.
// ---------------------------------------------------------------------------

const TNET_MAGIC: &[u8; 4] = b"TNET";
const TNET_VERSION: u8 = 1;

fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

impl TinyNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 12 * self.params.len());
        out.extend_from_slice(TNET_MAGIC);
        out.push(TNET_VERSION);
        let c = &self.config;
        for v in [
            c.levels as u32,
            c.base_channels as u32,
            c.patch_dims[0] as u32,
            c.patch_dims[1] as u32,
            c.patch_dims[2] as u32,
            c.batch_size as u32,
            c.iterations as u32,
            c.ensemble_size as u32,
            c.vote_quorum as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [c.lr, c.dice_weight, c.ce_weight, c.prob_threshold] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for buf in [&self.params, &self.adam_m, &self.adam_v] {
            for v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TinyNet> {
        const HEADER: usize = 4 + 1 + 9 * 4 + 4 * 8;
        if bytes.len() < HEADER + 4 {
            return Err(Error::Truncated { expected: HEADER + 4, found: bytes.len() });
        }
        if &bytes[0..4] != TNET_MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes[4] != TNET_VERSION {
            return Err(Error::UnsupportedFormat(format!("model version {}", bytes[4])));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32(body) != stored {
            return Err(Error::ChecksumMismatch);
        }

        let mut off = 5usize;
        let mut read_u32 = || {
            let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            off += 4;
            v as usize
        };
        let levels = read_u32();
        let base_channels = read_u32();
        let patch_dims = [read_u32(), read_u32(), read_u32()];
        let batch_size = read_u32();
        let iterations = read_u32();
        let ensemble_size = read_u32();
        let vote_quorum = read_u32();
        let mut read_f64 = || {
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            v
        };
        let lr = read_f64();
        let dice_weight = read_f64();
        let ce_weight = read_f64();
        let prob_threshold = read_f64();
        let config = NetConfig {
            levels,
            base_channels,
            patch_dims,
            lr,
            batch_size,
            iterations,
            dice_weight,
            ce_weight,
            prob_threshold,
            ensemble_size,
            vote_quorum,
        };
        config.validate()?;
        let topology = build_topology(&config);
        let total = topology.total;
        let expected = HEADER + 3 * 4 * total + 8 + 4;
        if bytes.len() != expected {
            return Err(Error::Truncated { expected, found: bytes.len() });
        }
        let mut read_f32s = |n: usize| {
            let v: Vec<f32> = bytes[off..off + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += 4 * n;
            v
        };
        let params = read_f32s(total);
        let adam_m = read_f32s(total);
        let adam_v = read_f32s(total);
        let step = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        Ok(TinyNet { config, topology, params, adam_m, adam_v, step })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TinyNet> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NetConfig {
        NetConfig {
            levels: 2,
            base_channels: 2,
            patch_dims: [8, 8, 8],
            ..NetConfig::default()
        }
    }

    fn random_patch(cfg: &NetConfig, seed: u64) -> Volume3 {
        let dims = cfg.patch();
        let mut rng = seeds::rng_from(seed);
        let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        Volume3::new_windowed(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn zero_net_outputs_half_everywhere() {
        let net = TinyNet::zeros(small_cfg()).unwrap();
        let patch = random_patch(net.config(), 1);
        let probs = net.forward_volume(&patch).unwrap();
        assert_eq!(probs.dims(), patch.dims());
        for &p in probs.data() {
            assert_eq!(p, 0.5);
        }
    }

    #[test]
    fn forward_output_stays_in_open_unit_interval() {
        for seed in [1u64, 2, 3] {
            let net = TinyNet::init(small_cfg(), seed).unwrap();
            let patch = random_patch(net.config(), seed + 10);
            let probs = net.forward_volume(&patch).unwrap();
            for &p in probs.data() {
                assert!(p > 0.0 && p < 1.0 && p.is_finite());
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_patch_dims() {
        let net = TinyNet::zeros(small_cfg()).unwrap();
        let wrong = Volume3::zeros(Dims3::cube(4), [1.0; 3]);
        assert!(matches!(net.forward_volume(&wrong), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn interior_translation_equivariance() {
        let cfg = NetConfig {
            levels: 2,
            base_channels: 2,
            patch_dims: [16, 16, 16],
            ..NetConfig::default()
        };
        let net = TinyNet::init(cfg.clone(), 9).unwrap();
        let dims = cfg.patch();
        let mut a = vec![0.05f32; dims.len()];
        // Compact bump in the middle.
        for z in 5..9 {
            for y in 5..9 {
                for x in 5..9 {
                    a[dims.index(z, y, x)] = 0.9;
                }
            }
        }
        let mut b = vec![0.05f32; dims.len()];
        for z in 5..9 {
            for y in 5..9 {
                for x in 7..11 {
                    b[dims.index(z, y, x)] = 0.9;
                }
            }
        }
        let pa = net
            .forward_volume(&Volume3::new_windowed(dims, [1.0; 3], a).unwrap())
            .unwrap();
        let pb = net
            .forward_volume(&Volume3::new_windowed(dims, [1.0; 3], b).unwrap())
            .unwrap();
        // Away from the borders, shifting the content by 2 shifts the output
        // by 2 (pool-grid aligned shift).
        for z in 6..10 {
            for y in 6..10 {
                for x in 8..10 {
                    let shifted = pa.at(z, y, x - 2);
                    assert!(
                        (pb.at(z, y, x) - shifted).abs() < 1e-6,
                        "equivariance broke at {z},{y},{x}"
                    );
                }
            }
        }
    }

    #[test]
    fn loss_on_exact_prediction_is_zero() {
        let gt = vec![true, false, true, true];
        let probs = vec![1.0, 0.0, 1.0, 1.0];
        let (loss, _) = dice_bce_loss(&probs, &gt, 1.0, 1.0);
        // Dice is 0 up to epsilon; clamped BCE is ~1e-7 per voxel.
        assert!(loss.abs() < 1e-5);
    }

    #[test]
    fn dice_term_closed_form_on_empty_gt() {
        let probs = vec![0.5f64; 64];
        let gt = vec![false; 64];
        let (loss, _) = dice_bce_loss(&probs, &gt, 1.0, 0.0);
        let sum_p = 32.0;
        let expect = 1.0 - DICE_EPS / (sum_p + DICE_EPS);
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_weights_scale_gradients_linearly() {
        let probs: Vec<f64> = (0..27).map(|i| 0.1 + 0.8 * (i as f64 / 26.0)).collect();
        let gt: Vec<bool> = (0..27).map(|i| i % 3 == 0).collect();
        let (l1, g1) = dice_bce_loss(&probs, &gt, 1.0, 1.0);
        let (l2, g2) = dice_bce_loss(&probs, &gt, 2.0, 2.0);
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let net = TinyNet::init(small_cfg(), 4).unwrap();
        let patch = random_patch(net.config(), 5);
        let zeros = vec![0.0f64; patch.dims().len()];
        let grads = net.gradients_from_output(&patch, &zeros).unwrap();
        assert!(grads.iter().all(|&g| g.abs() < 1e-10));
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = TinyNet::init(small_cfg(), 6).unwrap();
        let before = net.params().to_vec();
        let grads = vec![0.0f64; net.param_count()];
        net.adam_step(&grads, 1e-3);
        assert_eq!(net.params(), &before[..]);
        assert_eq!(net.step(), 1);
    }

    #[test]
    fn adam_single_step_matches_hand_computation() {
        // One parameter, gradient 1, t = 1: update = lr * mhat/(sqrt(vhat)+eps)
        // with mhat = 1, vhat = 1.
        let cfg = NetConfig {
            levels: 1,
            base_channels: 1,
            patch_dims: [2, 2, 2],
            ..NetConfig::default()
        };
        let mut net = TinyNet::zeros(cfg).unwrap();
        let mut grads = vec![0.0f64; net.param_count()];
        grads[0] = 1.0;
        let lr = 0.01;
        net.adam_step(&grads, lr);
        let expect = -(lr * 1.0 / (1.0f64.sqrt() + ADAM_EPS)) as f32;
        assert!((net.params()[0] - expect).abs() < 1e-12);
        assert_eq!(net.params()[1], 0.0);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = TinyNet::init(small_cfg(), 7).unwrap();
        let mut b = TinyNet::init(small_cfg(), 7).unwrap();
        let grads: Vec<f64> = (0..a.param_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        a.adam_step(&grads, 3e-4);
        b.adam_step(&grads, 3e-4);
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_vote_rules() {
        let dims = Dims3::cube(2);
        let yes = Mask3::full(dims);
        let no = Mask3::empty(dims);
        let vote =
            ensemble_vote(&[yes.clone(), yes.clone(), no.clone(), no.clone(), no.clone()], 3)
                .unwrap();
        assert!(vote.is_empty_mask(), "2 of 5 misses quorum 3");
        let vote = ensemble_vote(&[yes.clone(), yes.clone(), yes.clone(), no.clone(), no], 3).unwrap();
        assert_eq!(vote, Mask3::full(dims), "3 of 5 meets quorum");
        let same = ensemble_vote(&vec![yes.clone(); 5], 3).unwrap();
        assert_eq!(same, yes);
        assert!(ensemble_vote(&[], 1).is_err());
    }

    #[test]
    fn vote_is_monotone_in_added_votes() {
        let dims = Dims3::cube(3);
        let mut rng = seeds::rng_from(12);
        let masks: Vec<Mask3> = (0..4)
            .map(|_| {
                Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(0.5)).collect())
                    .unwrap()
            })
            .collect();
        let base = ensemble_vote(&masks, 2).unwrap();
        let mut extended = masks.clone();
        extended.push(Mask3::full(dims));
        let grown = ensemble_vote(&extended, 2).unwrap();
        assert!(base.is_subset_of(&grown).unwrap());
    }

    #[test]
    fn model_file_round_trips_bitwise() {
        let mut net = TinyNet::init(small_cfg(), 13).unwrap();
        let grads: Vec<f64> = (0..net.param_count()).map(|i| (i as f64 * 0.11).cos()).collect();
        net.adam_step(&grads, 3e-4);
        let bytes = net.to_bytes();
        let back = TinyNet::from_bytes(&bytes).unwrap();
        assert_eq!(net, back);
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn model_file_rejects_corruption() {
        let net = TinyNet::zeros(small_cfg()).unwrap();
        let mut bytes = net.to_bytes();
        let n = bytes.len();
        bytes[n / 2] ^= 0x40;
        assert!(matches!(TinyNet::from_bytes(&bytes), Err(Error::ChecksumMismatch)));
        let mut wrong_magic = net.to_bytes();
        wrong_magic[0] = b'X';
        assert!(matches!(TinyNet::from_bytes(&wrong_magic), Err(Error::BadMagic)));
        let truncated = &net.to_bytes()[..10];
        assert!(matches!(TinyNet::from_bytes(truncated), Err(Error::Truncated { .. })));
    }

    #[test]
    fn constant_net_tiling_matches_single_pass() {
        // With constant output (zero weights), overlapping tiles and a
        // single full-volume pass threshold to identical masks.
        let dims = Dims3::cube(48);
        let mut rng = seeds::rng_from(3);
        let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let vol = Volume3::new_windowed(dims, [1.0; 3], data).unwrap();
        let lung = Mask3::full(dims);

        let tiled_cfg = NetConfig { levels: 2, base_channels: 2, patch_dims: [32; 3], ..NetConfig::default() };
        let single_cfg = NetConfig { levels: 2, base_channels: 2, patch_dims: [48; 3], ..NetConfig::default() };
        let tiled = predict_healthy(&TinyNet::zeros(tiled_cfg).unwrap(), &vol, &lung, 0.95).unwrap();
        let single = predict_healthy(&TinyNet::zeros(single_cfg).unwrap(), &vol, &lung, 0.95).unwrap();
        assert_eq!(tiled, single);
        assert!(tiled.is_empty_mask(), "probability 0.5 is below 0.95");

        // Threshold 0 turns the whole lung healthy.
        let all = predict_healthy(
            &TinyNet::zeros(NetConfig { levels: 2, base_channels: 2, patch_dims: [32; 3], ..NetConfig::default() })
                .unwrap(),
            &vol,
            &lung,
            0.0,
        )
        .unwrap();
        assert_eq!(all, lung);
    }

    #[test]
    fn training_is_deterministic_and_lr_zero_freezes_weights() {
        use crate::lesionforge::TrainPair;
        let dims = Dims3::cube(12);
        let mut rng = seeds::rng_from(2);
        let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let input = Volume3::new_windowed(dims, [1.0; 3], data).unwrap();
        let gt = crate::vol3::bright_mask(&input, 0.5).unwrap();
        let lung = Mask3::full(dims);
        let pair = TrainPair {
            input,
            gt,
            lung: lung.clone(),
            lesion_shape: Mask3::empty(dims),
            seed: 0,
        };
        let cfg = NetConfig {
            levels: 2,
            base_channels: 2,
            patch_dims: [8, 8, 8],
            iterations: 5,
            batch_size: 2,
            ..NetConfig::default()
        };
        let (a, log_a) = train(std::slice::from_ref(&pair), &cfg, 42).unwrap();
        let (b, _) = train(std::slice::from_ref(&pair), &cfg, 42).unwrap();
        assert_eq!(a, b, "same seed gives bitwise-identical weights");
        assert_eq!(log_a.len(), 5);

        let frozen_cfg = NetConfig { lr: 0.0, ..cfg };
        let (frozen, _) = train(std::slice::from_ref(&pair), &frozen_cfg, 42).unwrap();
        let init = TinyNet::init(frozen_cfg, seeds::derive_seed(42, seeds::STREAM_TRAIN, 0)).unwrap();
        assert_eq!(frozen.params(), init.params());
    }
}
