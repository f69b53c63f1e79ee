//! Explainability: saliency and guided-backpropagation attribution maps,
//! plus PCA projection of the penultimate features.

mod pca;

pub use pca::{pca_fit, pca_project, PcaModel};

use crate::dataset::{FineClass, Frame2D};
use crate::error::Result;
use crate::neuralnet::{forward, input_gradient, CnnModel, GuidedStats, ReluRule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionKind {
    GuidedBackprop,
    Saliency,
}

/// Non-negative attribution values normalized to [0, 1]; an all-zero
/// gradient stays all-zero.
#[derive(Debug, Clone)]
pub struct AttributionMap {
    pub kind: AttributionKind,
    pub target_class: FineClass,
    pub map: Frame2D,
}

fn normalize_abs(gradient: Frame2D) -> Frame2D {
    let mut data: Vec<f64> = gradient.data().iter().map(|v| v.abs()).collect();
    let max = data.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        data.iter_mut().for_each(|v| *v /= max);
    }
    Frame2D::new(gradient.width(), gradient.height(), data).expect("normalized map is valid")
}

/// |d logit_target / d input|, max-normalized. The gradient targets the
/// pre-softmax logit, so a saturated softmax cannot flatten the map.
pub fn saliency_map(
    model: &CnnModel,
    frame: &Frame2D,
    target_class: FineClass,
) -> Result<AttributionMap> {
    let trace = forward(model, frame)?;
    let gradient = input_gradient(model, &trace, target_class, ReluRule::Standard, None);
    Ok(AttributionMap {
        kind: AttributionKind::Saliency,
        target_class,
        map: normalize_abs(gradient),
    })
}

/// Same backward pass with the guided ReLU rule (gradient passes only where
/// the forward pre-activation was positive and the gradient itself is
/// positive); returns the gate instrumentation alongside the map.
pub fn guided_backprop(
    model: &CnnModel,
    frame: &Frame2D,
    target_class: FineClass,
) -> Result<(AttributionMap, GuidedStats)> {
    let trace = forward(model, frame)?;
    let mut stats = GuidedStats::default();
    let gradient = input_gradient(
        model,
        &trace,
        target_class,
        ReluRule::Guided,
        Some(&mut stats),
    );
    Ok((
        AttributionMap {
            kind: AttributionKind::GuidedBackprop,
            target_class,
            map: normalize_abs(gradient),
        },
        stats,
    ))
}

/// Predicted class of a frame, used by the `--class auto` explain mode.
pub fn predicted_class(model: &CnnModel, frame: &Frame2D) -> Result<FineClass> {
    let trace = forward(model, frame)?;
    let mut best = 0usize;
    for (i, &p) in trace.probs().iter().enumerate() {
        if p > trace.probs()[best] {
            best = i;
        }
    }
    FineClass::from_code(best as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{init_model, NetConfig};
    use crate::rng;

    fn tiny_config() -> NetConfig {
        NetConfig {
            input_size: 8,
            conv_channels: vec![2, 2],
            fc1_dim: 8,
            fc2_dim: 8,
            trainable: Vec::new(),
        }
    }

    fn random_frame(seed: u64, n: usize) -> Frame2D {
        let mut r = rng::seeded(seed);
        let data = (0..n * n)
            .map(|_| rng::uniform_in(&mut r, -0.5, 0.5))
            .collect();
        Frame2D::new(n, n, data).unwrap()
    }

    #[test]
    fn saliency_values_in_unit_interval_with_max_one() {
        let model = init_model(&tiny_config(), 3).unwrap();
        let frame = random_frame(4, 8);
        let map = saliency_map(&model, &frame, FineClass::Hsil).unwrap().map;
        assert!(map.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let max = map.data().iter().cloned().fold(0.0f64, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_model_gives_all_zero_map() {
        let mut model = init_model(&tiny_config(), 5).unwrap();
        for (_, t) in model.param_tensors_mut() {
            t.fill(0.0);
        }
        let frame = random_frame(6, 8);
        let map = saliency_map(&model, &frame, FineClass::Normal).unwrap().map;
        assert!(map.data().iter().all(|&v| v == 0.0));
        let (gb, stats) = guided_backprop(&model, &frame, FineClass::Normal).unwrap();
        assert!(gb.map.data().iter().all(|&v| v == 0.0));
        assert_eq!(stats.negative_passed, 0);
    }

    #[test]
    fn saliency_gradient_matches_logit_finite_differences() {
        let model = init_model(&tiny_config(), 7).unwrap();
        let frame = random_frame(8, 8);
        let target = FineClass::Lsil;
        let trace = forward(&model, &frame).unwrap();
        let gradient = input_gradient(&model, &trace, target, ReluRule::Standard, None);
        // Probe a deterministic subset of pixels.
        let h = 1e-6;
        for &idx in &[0usize, 3, 9, 17, 31, 44, 63] {
            let mut up = frame.clone();
            up.data_mut()[idx] += h;
            let mut down = frame.clone();
            down.data_mut()[idx] -= h;
            let zu = forward(&model, &up).unwrap().logits()[target.code() as usize];
            let zd = forward(&model, &down).unwrap().logits()[target.code() as usize];
            let fd = (zu - zd) / (2.0 * h);
            let an = gradient.data()[idx];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!(
                (fd - an).abs() / denom < 1e-3,
                "pixel {idx}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn guided_gates_pass_no_negative_gradient() {
        for seed in 0..5u64 {
            let model = init_model(&tiny_config(), 100 + seed).unwrap();
            let frame = random_frame(200 + seed, 8);
            let (_, stats) = guided_backprop(&model, &frame, FineClass::Cancer).unwrap();
            assert_eq!(stats.negative_passed, 0, "seed {seed}");
            assert_eq!(stats.passed_at_inactive, 0, "seed {seed}");
            assert!(stats.min_passed >= 0.0, "seed {seed}: {}", stats.min_passed);
        }
    }

    #[test]
    fn linear_single_layer_saliency_proportional_to_weights() {
        // With every hidden nonlinearity inactive on the positive path it is
        // hard to make the full conv net a pure linear map, so check the
        // degenerate property on the FC stack instead: a network whose conv
        // kernels are identity-like delta filters keeps gradients
        // proportional to FC3 weights pushed back through pooling.
        // The tractable statement: for a model with no negative
        // pre-activations anywhere, guided backprop equals saliency.
        let mut model = init_model(&tiny_config(), 9).unwrap();
        for (_, t) in model.param_tensors_mut() {
            t.iter_mut().for_each(|v| *v = v.abs() * 0.5 + 0.01);
        }
        let data = (0..64).map(|i| 0.2 + (i % 5) as f64 * 0.1).collect();
        let frame = Frame2D::new(8, 8, data).unwrap();
        let sal = saliency_map(&model, &frame, FineClass::Cancer).unwrap().map;
        let (gb, _) = guided_backprop(&model, &frame, FineClass::Cancer).unwrap();
        for (a, b) in sal.data().iter().zip(gb.map.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
