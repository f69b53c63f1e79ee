//! Deterministic mini-batch training loop.

use super::{adam_step, loss_and_grad, AdamConfig, CnnModel, TrainState};
use crate::dataset::{FineClass, Frame2D};
use crate::error::{CadxError, Result};
use crate::rng;

/// Trains in place for `epochs` passes and returns the per-epoch mean loss.
/// The shuffle schedule and reduction order are fixed by `seed`, so two runs
/// with identical inputs produce bit-identical parameters.
pub fn train(
    model: &mut CnnModel,
    samples: &[(Frame2D, FineClass)],
    adam: &AdamConfig,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    adam.validate()?;
    if batch_size == 0 {
        return Err(CadxError::validation("batch size must be positive"));
    }
    let mut counts = [0usize; 5];
    for (_, label) in samples {
        counts[label.code() as usize] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(CadxError::validation(format!(
            "class {missing} absent from training data"
        )));
    }

    let mut state = TrainState::new(model);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(seed, 0x7EA1));
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&Frame2D, FineClass)> =
                chunk.iter().map(|&i| (&samples[i].0, samples[i].1)).collect();
            let (loss, grads) = loss_and_grad(model, &batch)?;
            adam_step(&mut state, model, &grads, adam)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let epoch_loss = loss_sum / seen as f64;
        if !epoch_loss.is_finite() {
            return Err(CadxError::numeric("non-finite epoch loss"));
        }
        losses.push(epoch_loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{forward, init_model, NetConfig};

    fn tiny_config() -> NetConfig {
        NetConfig {
            input_size: 8,
            conv_channels: vec![2, 2],
            fc1_dim: 8,
            fc2_dim: 8,
            trainable: Vec::new(),
        }
    }

    /// Five distinguishable synthetic patterns, one per class.
    fn toy_samples(per_class: usize) -> Vec<(Frame2D, FineClass)> {
        let mut samples = Vec::new();
        let mut r = rng::seeded(31);
        for class in FineClass::ALL {
            for _ in 0..per_class {
                let mut data = vec![0.0; 64];
                for (i, v) in data.iter_mut().enumerate() {
                    let (y, x) = (i / 8, i % 8);
                    *v = match class {
                        FineClass::Normal => ((y < 3) as u8) as f64 * 0.5,
                        FineClass::Ectropion => ((x < 3) as u8) as f64 * 0.5,
                        FineClass::Lsil => (((x + y) % 2) as f64) * 0.5,
                        FineClass::Hsil => ((y >= 5) as u8) as f64 * 0.5,
                        FineClass::Cancer => (((x > 2) && (x < 6) && (y > 2) && (y < 6)) as u8)
                            as f64
                            * 0.5,
                    } + rng::uniform_in(&mut r, -0.05, 0.05);
                }
                samples.push((Frame2D::new(8, 8, data).unwrap(), class));
            }
        }
        samples
    }

    #[test]
    fn loss_improves_past_uniform_on_separable_toys() {
        let mut model = init_model(&tiny_config(), 7).unwrap();
        let samples = toy_samples(6);
        let losses = train(&mut model, &samples, &AdamConfig::default(), 10, 8, 7).unwrap();
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(
            *losses.last().unwrap() < 5.0f64.ln(),
            "final loss {} not better than uniform",
            losses.last().unwrap()
        );
    }

    #[test]
    fn all_frozen_mask_is_a_noop() {
        let mut cfg = tiny_config();
        cfg.trainable = vec![false; 5];
        let mut model = init_model(&cfg, 8).unwrap();
        let before: Vec<Vec<f64>> = model
            .param_tensors()
            .iter()
            .map(|(_, t)| t.to_vec())
            .collect();
        let samples = toy_samples(2);
        train(&mut model, &samples, &AdamConfig::default(), 3, 4, 8).unwrap();
        for ((_, after), before) in model.param_tensors().iter().zip(before.iter()) {
            assert_eq!(&after.to_vec(), before, "frozen parameters moved");
        }
    }

    #[test]
    fn missing_class_is_an_error() {
        let mut model = init_model(&tiny_config(), 9).unwrap();
        let samples: Vec<(Frame2D, FineClass)> = toy_samples(2)
            .into_iter()
            .filter(|(_, c)| *c != FineClass::Lsil)
            .collect();
        let err = train(&mut model, &samples, &AdamConfig::default(), 1, 4, 9).unwrap_err();
        assert!(err.to_string().contains("class 2 absent"), "{err}");
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut model = init_model(&tiny_config(), 10).unwrap();
            let samples = toy_samples(3);
            train(&mut model, &samples, &AdamConfig::default(), 3, 4, 10).unwrap();
            let frame = Frame2D::filled(8, 8, 0.25);
            forward(&model, &frame).unwrap().logits().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
