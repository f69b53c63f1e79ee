//! Analytic backpropagation: parameter gradients for training and input
//! gradients for attribution maps.

use super::{forward, log_sum_exp, CnnModel, ConvLayer, FcLayer, Forward, Tensor3};
use crate::dataset::{FineClass, Frame2D};
use crate::error::{CadxError, Result};

/// Gradient buffers shaped exactly like the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub convs: Vec<(Vec<f64>, Vec<f64>)>,
    pub fc1: (Vec<f64>, Vec<f64>),
    pub fc2: (Vec<f64>, Vec<f64>),
    pub fc3: (Vec<f64>, Vec<f64>),
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Gradients {
            convs: model
                .convs
                .iter()
                .map(|c| (vec![0.0; c.weights.len()], vec![0.0; c.bias.len()]))
                .collect(),
            fc1: (
                vec![0.0; model.fc1.weights.len()],
                vec![0.0; model.fc1.bias.len()],
            ),
            fc2: (
                vec![0.0; model.fc2.weights.len()],
                vec![0.0; model.fc2.bias.len()],
            ),
            fc3: (
                vec![0.0; model.fc3.weights.len()],
                vec![0.0; model.fc3.bias.len()],
            ),
        }
    }

    /// Tensors in the same (layer index, slice) order as
    /// `CnnModel::param_tensors`.
    pub fn tensors(&self) -> Vec<(usize, &[f64])> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.convs.iter().enumerate() {
            out.push((i, w.as_slice()));
            out.push((i, b.as_slice()));
        }
        let base = self.convs.len();
        for (offset, (w, b)) in [&self.fc1, &self.fc2, &self.fc3].into_iter().enumerate() {
            out.push((base + offset, w.as_slice()));
            out.push((base + offset, b.as_slice()));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    fn scale(&mut self, factor: f64) {
        for (w, b) in self.convs.iter_mut() {
            w.iter_mut().for_each(|v| *v *= factor);
            b.iter_mut().for_each(|v| *v *= factor);
        }
        for (w, b) in [&mut self.fc1, &mut self.fc2, &mut self.fc3] {
            w.iter_mut().for_each(|v| *v *= factor);
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// ReLU backward gating rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluRule {
    /// Pass gradient where the forward pre-activation was positive.
    Standard,
    /// Guided backpropagation: additionally require the incoming gradient
    /// itself to be positive.
    Guided,
}

/// Instrumentation for the guided rule, accumulated over every ReLU.
#[derive(Debug, Clone, Default)]
pub struct GuidedStats {
    /// Smallest gradient value passed through any ReLU gate.
    pub min_passed: f64,
    /// Gradients that were passed while negative (must stay 0).
    pub negative_passed: usize,
    /// Nonzero gradients passed where the forward pre-activation was <= 0.
    pub passed_at_inactive: usize,
}

/// Mean softmax cross-entropy over the batch plus exact parameter gradients.
pub fn loss_and_grad(
    model: &CnnModel,
    batch: &[(&Frame2D, FineClass)],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(CadxError::validation("empty training batch"));
    }
    let mut grads = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    for &(frame, label) in batch {
        let trace = forward(model, frame)?;
        let lse = log_sum_exp(trace.logits());
        loss_sum += lse - trace.logits()[label.code() as usize];
        // d loss / d logits = probs - onehot(label) for a single sample.
        let mut dlogits = trace.probs().to_vec();
        dlogits[label.code() as usize] -= 1.0;
        backward(
            model,
            &trace,
            &dlogits,
            ReluRule::Standard,
            Some(&mut grads),
            None,
        );
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    let loss = loss_sum * inv;
    if !loss.is_finite() {
        return Err(CadxError::numeric("non-finite training loss"));
    }
    Ok((loss, grads))
}

/// Gradient of one logit with respect to the input pixels. `rule` selects
/// plain saliency backprop or the guided variant; `stats` collects ReLU gate
/// instrumentation when provided.
pub fn input_gradient(
    model: &CnnModel,
    trace: &Forward,
    target_class: FineClass,
    rule: ReluRule,
    stats: Option<&mut GuidedStats>,
) -> Frame2D {
    let mut dlogits = vec![0.0; trace.logits().len()];
    dlogits[target_class.code() as usize] = 1.0;
    let dinput = backward(model, trace, &dlogits, rule, None, stats);
    Frame2D::new(dinput.w, dinput.h, dinput.data).expect("gradient tensor is a valid frame")
}

/// Shared backward pass from logit gradients down to the input. Parameter
/// gradients are accumulated into `grads` when provided.
fn backward(
    model: &CnnModel,
    trace: &Forward,
    dlogits: &[f64],
    rule: ReluRule,
    mut grads: Option<&mut Gradients>,
    mut stats: Option<&mut GuidedStats>,
) -> Tensor3 {
    // FC3 (no activation on logits).
    let mut dfc2_post = fc_backward_input(&model.fc3, dlogits);
    if let Some(g) = grads.as_deref_mut() {
        fc_backward_params(&model.fc3, &trace.fc2_post, dlogits, &mut g.fc3);
    }
    relu_backward(&trace.fc2_pre, &mut dfc2_post, rule, stats.as_deref_mut());

    // FC2.
    let mut dfc1_post = fc_backward_input(&model.fc2, &dfc2_post);
    if let Some(g) = grads.as_deref_mut() {
        fc_backward_params(&model.fc2, &trace.fc1_post, &dfc2_post, &mut g.fc2);
    }
    relu_backward(&trace.fc1_pre, &mut dfc1_post, rule, stats.as_deref_mut());

    // FC1 down to the flattened pooled activations.
    let dflat = fc_backward_input(&model.fc1, &dfc1_post);
    if let Some(g) = grads.as_deref_mut() {
        fc_backward_params(&model.fc1, &trace.flat, &dfc1_post, &mut g.fc1);
    }

    // Conv blocks in reverse: unpool, ReLU gate, conv backward.
    let mut dcurrent = dflat;
    for (i, conv) in model.convs.iter().enumerate().rev() {
        let src = &trace.pool_src[i];
        let mut dsrc = vec![0.0; src.data.len()];
        for (cell, &src_idx) in trace.pool_argmax[i].iter().enumerate() {
            dsrc[src_idx] += dcurrent[cell];
        }
        relu_backward(&trace.conv_preact[i].data, &mut dsrc, rule, stats.as_deref_mut());
        let dpre = Tensor3 {
            c: src.c,
            h: src.h,
            w: src.w,
            data: dsrc,
        };
        let input = &trace.conv_inputs[i];
        if let Some(g) = grads.as_deref_mut() {
            conv_backward_params(conv, input, &dpre, &mut g.convs[i]);
        }
        let dinput = conv_backward_input(conv, &dpre, input.h, input.w);
        if i == 0 {
            return dinput;
        }
        dcurrent = dinput.data;
    }
    unreachable!("network has at least one conv block");
}

fn relu_backward(preact: &[f64], grad: &mut [f64], rule: ReluRule, stats: Option<&mut GuidedStats>) {
    match rule {
        ReluRule::Standard => {
            for (g, &z) in grad.iter_mut().zip(preact.iter()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        ReluRule::Guided => {
            for (g, &z) in grad.iter_mut().zip(preact.iter()) {
                if z <= 0.0 || *g <= 0.0 {
                    *g = 0.0;
                }
            }
            if let Some(s) = stats {
                for (g, &z) in grad.iter().zip(preact.iter()) {
                    if *g != 0.0 {
                        s.min_passed = s.min_passed.min(*g);
                        if *g < 0.0 {
                            s.negative_passed += 1;
                        }
                        if z <= 0.0 {
                            s.passed_at_inactive += 1;
                        }
                    }
                }
            }
        }
    }
}

fn fc_backward_input(fc: &FcLayer, dout: &[f64]) -> Vec<f64> {
    let mut dinput = vec![0.0; fc.in_dim];
    for (o, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &fc.weights[o * fc.in_dim..(o + 1) * fc.in_dim];
        for (d, &w) in dinput.iter_mut().zip(row.iter()) {
            *d += g * w;
        }
    }
    dinput
}

fn fc_backward_params(fc: &FcLayer, input: &[f64], dout: &[f64], grad: &mut (Vec<f64>, Vec<f64>)) {
    let (dw, db) = grad;
    for (o, &g) in dout.iter().enumerate() {
        db[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[o * fc.in_dim..(o + 1) * fc.in_dim];
        for (d, &x) in row.iter_mut().zip(input.iter()) {
            *d += g * x;
        }
    }
}

fn conv_backward_params(
    conv: &ConvLayer,
    input: &Tensor3,
    dout: &Tensor3,
    grad: &mut (Vec<f64>, Vec<f64>),
) {
    let (h, w) = (dout.h, dout.w);
    let (dw, db) = grad;
    for (oc, db_oc) in db.iter_mut().enumerate() {
        let dplane = dout.channel(oc);
        *db_oc += dplane.iter().sum::<f64>();
        for ic in 0..conv.in_c {
            let in_plane = input.channel(ic);
            let kbase = (oc * conv.in_c + ic) * 9;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let y_lo = 1usize.saturating_sub(ky);
                    let y_hi = h.min(h + 1 - ky);
                    let x_lo = 1usize.saturating_sub(kx);
                    let x_hi = w.min(w + 1 - kx);
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let src = &in_plane[(y + ky - 1) * w..(y + ky) * w];
                        let g = &dplane[y * w..(y + 1) * w];
                        for x in x_lo..x_hi {
                            acc += g[x] * src[x + kx - 1];
                        }
                    }
                    dw[kbase + ky * 3 + kx] += acc;
                }
            }
        }
    }
}

fn conv_backward_input(conv: &ConvLayer, dout: &Tensor3, h: usize, w: usize) -> Tensor3 {
    let mut dinput = Tensor3::zeros(conv.in_c, h, w);
    for oc in 0..conv.out_c {
        let dplane = dout.channel(oc);
        for ic in 0..conv.in_c {
            let din_plane = dinput.channel_mut(ic);
            let kbase = (oc * conv.in_c + ic) * 9;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wgt = conv.weights[kbase + ky * 3 + kx];
                    if wgt == 0.0 {
                        continue;
                    }
                    let y_lo = 1usize.saturating_sub(ky);
                    let y_hi = h.min(h + 1 - ky);
                    let x_lo = 1usize.saturating_sub(kx);
                    let x_hi = w.min(w + 1 - kx);
                    for y in y_lo..y_hi {
                        let dst = &mut din_plane[(y + ky - 1) * w..(y + ky) * w];
                        let g = &dplane[y * w..(y + 1) * w];
                        for x in x_lo..x_hi {
                            dst[x + kx - 1] += wgt * g[x];
                        }
                    }
                }
            }
        }
    }
    dinput
}
