//! From-scratch convolutional feature extractor.
//!
//! VGG-flavored topology: conv3x3+ReLU blocks with 2x2/2 max-pooling after
//! each, then FC1-ReLU, FC2-ReLU, FC3 (5 logits), softmax. Everything is
//! plain f64 on the CPU with explicit loops; backprop is exact and verified
//! against finite differences.

mod adam;
mod backprop;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamConfig, TrainState};
pub use backprop::{input_gradient, loss_and_grad, Gradients, GuidedStats, ReluRule};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::train;

use crate::dataset::Frame2D;
use crate::error::{CadxError, Result};
use crate::rng;
use serde::{Deserialize, Serialize};

/// Number of output categories; fixed by the tissue taxonomy.
pub const OUT_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub input_size: usize,
    /// Output channels of each conv block; one 3x3 conv + ReLU + 2x2 pool per block.
    pub conv_channels: Vec<usize>,
    pub fc1_dim: usize,
    pub fc2_dim: usize,
    /// Per-layer trainability, conv blocks first, then FC1, FC2, FC3.
    /// Empty means all layers trainable.
    pub trainable: Vec<bool>,
}

impl Default for NetConfig {
    /// Desk-scale profile. The full-size configuration (224 input, VGG-16
    /// widths, 4096-D FC2) is expressible but not the default.
    fn default() -> Self {
        NetConfig {
            input_size: 64,
            conv_channels: vec![8, 16, 32, 32],
            fc1_dim: 256,
            fc2_dim: 256,
            trainable: Vec::new(),
        }
    }
}

impl NetConfig {
    pub fn n_layers(&self) -> usize {
        self.conv_channels.len() + 3
    }

    /// Trainability mask expanded to one flag per layer.
    pub fn trainable_mask(&self) -> Vec<bool> {
        if self.trainable.is_empty() {
            vec![true; self.n_layers()]
        } else {
            self.trainable.clone()
        }
    }

    /// Spatial side length after each pooling stage.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_size];
        for _ in &self.conv_channels {
            sizes.push(sizes.last().unwrap() / 2);
        }
        sizes
    }

    pub fn flat_dim(&self) -> usize {
        let side = *self.spatial_sizes().last().unwrap();
        self.conv_channels.last().copied().unwrap_or(0) * side * side
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.len() < 2 {
            return Err(CadxError::validation("need at least 2 conv blocks"));
        }
        if self.conv_channels.contains(&0) {
            return Err(CadxError::validation("conv channel width of zero"));
        }
        if self.fc1_dim == 0 || self.fc2_dim == 0 {
            return Err(CadxError::validation("fc dimensions must be positive"));
        }
        let mut side = self.input_size;
        for _ in &self.conv_channels {
            if side < 2 || !side.is_multiple_of(2) {
                return Err(CadxError::validation(format!(
                    "input size {} does not pool evenly through {} blocks",
                    self.input_size,
                    self.conv_channels.len()
                )));
            }
            side /= 2;
        }
        if !self.trainable.is_empty() && self.trainable.len() != self.n_layers() {
            return Err(CadxError::validation(format!(
                "trainable mask has {} entries, expected {}",
                self.trainable.len(),
                self.n_layers()
            )));
        }
        Ok(())
    }
}

/// Channel-major 3-D activation buffer.
#[derive(Debug, Clone)]
pub(crate) struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    pub fn channel(&self, ch: usize) -> &[f64] {
        let plane = self.h * self.w;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    #[inline]
    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let plane = self.h * self.w;
        &mut self.data[ch * plane..(ch + 1) * plane]
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub in_c: usize,
    pub out_c: usize,
    /// 3x3 kernels, laid out [out_c][in_c][3][3].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FcLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major [out_dim][in_dim].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CnnModel {
    config: NetConfig,
    pub convs: Vec<ConvLayer>,
    pub fc1: FcLayer,
    pub fc2: FcLayer,
    pub fc3: FcLayer,
}

impl CnnModel {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Parameter tensors in topology order as (layer index, slice) pairs,
    /// weights before bias within a layer.
    pub fn param_tensors(&self) -> Vec<(usize, &[f64])> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            out.push((i, conv.weights.as_slice()));
            out.push((i, conv.bias.as_slice()));
        }
        let base = self.convs.len();
        for (offset, fc) in [&self.fc1, &self.fc2, &self.fc3].into_iter().enumerate() {
            out.push((base + offset, fc.weights.as_slice()));
            out.push((base + offset, fc.bias.as_slice()));
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<(usize, &mut [f64])> {
        let base = self.convs.len();
        let mut out: Vec<(usize, &mut [f64])> = Vec::new();
        for (i, conv) in self.convs.iter_mut().enumerate() {
            out.push((i, conv.weights.as_mut_slice()));
            out.push((i, conv.bias.as_mut_slice()));
        }
        for (offset, fc) in [&mut self.fc1, &mut self.fc2, &mut self.fc3]
            .into_iter()
            .enumerate()
        {
            out.push((base + offset, fc.weights.as_mut_slice()));
            out.push((base + offset, fc.bias.as_mut_slice()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.param_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// He-scaled random weights, zero biases; deterministic given the seed.
pub fn init_model(config: &NetConfig, seed: u64) -> Result<CnnModel> {
    config.validate()?;
    let mut r = rng::seeded(rng::derive_seed(seed, 0xC0DE));
    let mut convs = Vec::with_capacity(config.conv_channels.len());
    let mut in_c = 1;
    for &out_c in &config.conv_channels {
        let fan_in = in_c * 9;
        let std = (2.0 / fan_in as f64).sqrt();
        let weights = (0..out_c * in_c * 9)
            .map(|_| std * rng::gaussian(&mut r))
            .collect();
        convs.push(ConvLayer {
            in_c,
            out_c,
            weights,
            bias: vec![0.0; out_c],
        });
        in_c = out_c;
    }
    let fc = |in_dim: usize, out_dim: usize, r: &mut rng::Rng| {
        let std = (2.0 / in_dim as f64).sqrt();
        FcLayer {
            in_dim,
            out_dim,
            weights: (0..out_dim * in_dim)
                .map(|_| std * rng::gaussian(r))
                .collect(),
            bias: vec![0.0; out_dim],
        }
    };
    let flat = config.flat_dim();
    let fc1 = fc(flat, config.fc1_dim, &mut r);
    let fc2 = fc(config.fc1_dim, config.fc2_dim, &mut r);
    let fc3 = fc(config.fc2_dim, OUT_DIM, &mut r);
    Ok(CnnModel {
        config: config.clone(),
        convs,
        fc1,
        fc2,
        fc3,
    })
}

/// Full forward trace; keeps every intermediate needed for backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    pub(crate) conv_inputs: Vec<Tensor3>,
    pub(crate) conv_preact: Vec<Tensor3>,
    pub(crate) pool_src: Vec<Tensor3>,
    pub(crate) pool_argmax: Vec<Vec<usize>>,
    pub(crate) flat: Vec<f64>,
    pub(crate) fc1_pre: Vec<f64>,
    pub(crate) fc1_post: Vec<f64>,
    pub(crate) fc2_pre: Vec<f64>,
    pub(crate) fc2_post: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl Forward {
    /// Penultimate high-dimensional feature (FC2 activations).
    pub fn fc2_features(&self) -> &[f64] {
        &self.fc2_post
    }

    /// FC3 pre-softmax activations, the 5-D image feature.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Runs the network on one preprocessed frame.
pub fn forward(model: &CnnModel, frame: &Frame2D) -> Result<Forward> {
    let n = model.config.input_size;
    if frame.width() != n || frame.height() != n {
        return Err(CadxError::validation(format!(
            "frame {}x{} does not match network input size {n}",
            frame.width(),
            frame.height()
        )));
    }
    let mut current = Tensor3 {
        c: 1,
        h: n,
        w: n,
        data: frame.data().to_vec(),
    };
    let blocks = model.convs.len();
    let mut conv_inputs = Vec::with_capacity(blocks);
    let mut conv_preact = Vec::with_capacity(blocks);
    let mut pool_src = Vec::with_capacity(blocks);
    let mut pool_argmax = Vec::with_capacity(blocks);
    for conv in &model.convs {
        let pre = conv_forward(conv, &current);
        conv_inputs.push(current);
        let mut post = pre.clone();
        relu_inplace(&mut post.data);
        conv_preact.push(pre);
        let (pooled, argmax) = max_pool_2x2(&post);
        pool_src.push(post);
        pool_argmax.push(argmax);
        current = pooled;
    }
    let flat = current.data;
    let fc1_pre = fc_forward(&model.fc1, &flat);
    let mut fc1_post = fc1_pre.clone();
    relu_inplace(&mut fc1_post);
    let fc2_pre = fc_forward(&model.fc2, &fc1_post);
    let mut fc2_post = fc2_pre.clone();
    relu_inplace(&mut fc2_post);
    let logits = fc_forward(&model.fc3, &fc2_post);
    let probs = softmax(&logits);
    Ok(Forward {
        conv_inputs,
        conv_preact,
        pool_src,
        pool_argmax,
        flat,
        fc1_pre,
        fc1_post,
        fc2_pre,
        fc2_post,
        logits,
        probs,
    })
}

/// FC3 pre-softmax activations for one frame.
pub fn extract_features(model: &CnnModel, frame: &Frame2D) -> Result<Vec<f64>> {
    Ok(forward(model, frame)?.logits.clone())
}

pub(crate) fn conv_forward(conv: &ConvLayer, input: &Tensor3) -> Tensor3 {
    let (h, w) = (input.h, input.w);
    let mut out = Tensor3::zeros(conv.out_c, h, w);
    for oc in 0..conv.out_c {
        let out_plane = out.channel_mut(oc);
        out_plane.fill(conv.bias[oc]);
        for ic in 0..conv.in_c {
            let in_plane = input.channel(ic);
            let kbase = (oc * conv.in_c + ic) * 9;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wgt = conv.weights[kbase + ky * 3 + kx];
                    if wgt == 0.0 {
                        continue;
                    }
                    // Valid output rows for this kernel offset (zero padding
                    // of one pixel).
                    let y_lo = 1usize.saturating_sub(ky);
                    let y_hi = h.min(h + 1 - ky);
                    let x_lo = 1usize.saturating_sub(kx);
                    let x_hi = w.min(w + 1 - kx);
                    for y in y_lo..y_hi {
                        let src = &in_plane[(y + ky - 1) * w..(y + ky) * w];
                        let dst = &mut out_plane[y * w..(y + 1) * w];
                        for x in x_lo..x_hi {
                            dst[x] += wgt * src[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn relu_inplace(data: &mut [f64]) {
    for v in data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// 2x2 stride-2 max pooling; argmax records the flat index into the source
/// plane, ties broken to the first position in row-major window order.
pub(crate) fn max_pool_2x2(input: &Tensor3) -> (Tensor3, Vec<usize>) {
    let (c, h, w) = (input.c, input.h, input.w);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor3::zeros(c, oh, ow);
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        let plane = input.channel(ch);
        let out_plane = out.channel_mut(ch);
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = (2 * y) * w + 2 * x;
                let mut best = plane[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = (2 * y + dy) * w + 2 * x + dx;
                    if plane[idx] > best {
                        best = plane[idx];
                        best_idx = idx;
                    }
                }
                out_plane[y * ow + x] = best;
                argmax[(ch * oh + y) * ow + x] = ch * h * w + best_idx;
            }
        }
    }
    (out, argmax)
}

pub(crate) fn fc_forward(fc: &FcLayer, input: &[f64]) -> Vec<f64> {
    debug_assert_eq!(input.len(), fc.in_dim);
    (0..fc.out_dim)
        .map(|o| {
            let row = &fc.weights[o * fc.in_dim..(o + 1) * fc.in_dim];
            fc.bias[o]
                + row
                    .iter()
                    .zip(input.iter())
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// log(sum(exp(logits))), shared by the loss and its tests.
pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}
