use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::softmax;
use super::network::{loss_and_grad, Network};
use super::optim::{Optimizer, OptimizerState};
use super::{NnetError, Tensor};
use crate::imgcore::RgbImage;

/// One labeled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1,
            epochs: 40,
            optimizer: Optimizer::adam(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnetError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NnetError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// NaN when there is no validation set.
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_accuracy,valid_loss,valid_accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_accuracy, e.valid_loss, e.valid_accuracy
            ));
        }
        s
    }
}

/// `[3, H, W]` tensor with channels scaled to `[0, 1]`.
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Mean loss and accuracy over a set; `(NaN, NaN)` when empty.
pub fn evaluate(net: &Network, samples: &[Sample]) -> Result<(f64, f64), NnetError> {
    if samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for s in samples {
        let logits = net.forward(&s.input)?;
        loss += loss_and_grad(&logits, s.label)?.0;
        correct += usize::from(logits.argmax() == s.label);
    }
    Ok((loss / samples.len() as f64, correct as f64 / samples.len() as f64))
}

pub fn train(
    net: Network,
    train_set: &[Sample],
    valid_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory), NnetError> {
    train_with_progress(net, train_set, valid_set, cfg, |_| {})
}

/// Trains on a seeded shuffle each epoch, one optimizer step per
/// `batch_size` samples (gradients averaged). Train loss/accuracy are
/// measured on the fly, before each sample's update.
pub fn train_with_progress(
    mut net: Network,
    train_set: &[Sample],
    valid_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Network, TrainHistory), NnetError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NnetError::EmptyDataset);
    }
    let classes = net.class_count();
    if let Some(s) = train_set.iter().chain(valid_set).find(|s| s.label >= classes) {
        return Err(NnetError::LabelOutOfRange(s.label, classes));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, &net.zero_grads());
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = net.zero_grads();
            for &i in batch {
                let s = &train_set[i];
                let trace = net.forward_trace(&s.input)?;
                let (loss, d_logits) = loss_and_grad(trace.output(), s.label)?;
                loss_sum += loss;
                correct += usize::from(trace.output().argmax() == s.label);
                let (_, grads) = net.backward_trace(&trace, &d_logits)?;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (at, gt) in a.iter_mut().zip(g) {
                        at.add_assign(gt);
                    }
                }
            }
            if batch.len() > 1 {
                let k = 1.0 / batch.len() as f64;
                acc.iter_mut().flatten().for_each(|t| t.scale(k));
            }
            opt.apply(net.params_mut(), &acc);
        }
        let (valid_loss, valid_accuracy) = evaluate(&net, valid_set)?;
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            valid_loss,
            valid_accuracy,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((net, history))
}

/// Class index and softmax probabilities for a 32×32 RGB glyph.
pub fn predict(net: &Network, image: &RgbImage) -> Result<(usize, Vec<f64>), NnetError> {
    let logits = net.forward(&image_to_tensor(image))?;
    let probs = softmax(logits.data());
    Ok((logits.argmax(), probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Architecture, LayerSpec};
    use rand::Rng;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    fn toy_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                input: Tensor::from_vec(&[3, 32, 32], (0..3 * 32 * 32).map(|_| rng.gen::<f64>()).collect()),
                label: i % 17,
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(Architecture::BlprCnn, classes(17), &mut rng);
        let data = toy_set(&mut rng, 3);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (trained, hist) = train(net.clone(), &data, &[], &cfg).unwrap();
        assert_eq!(trained, net);
        assert!(hist.is_empty());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(Architecture::BlprCnn, classes(17), &mut rng);
        assert!(matches!(train(net, &[], &[], &TrainConfig::default()), Err(NnetError::EmptyDataset)));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn small_net_overfits_and_is_deterministic() {
        // Tiny network on tiny inputs keeps this fast; the full-size check
        // lives in the acceptance suite.
        let specs = [
            LayerSpec::Conv2d { out_channels: 4 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 5 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::new(&[3, 8, 8], &specs, classes(5)).unwrap();
        net.init_he_uniform(&mut rng);
        let data: Vec<Sample> = (0..10)
            .map(|i| Sample {
                input: Tensor::from_vec(&[3, 8, 8], (0..192).map(|_| rng.gen::<f64>()).collect()),
                label: i % 5,
            })
            .collect();
        let cfg = TrainConfig { epochs: 200, learning_rate: 1e-2, ..TrainConfig::default() };
        let (a, ha) = train(net.clone(), &data, &data, &cfg).unwrap();
        let (b, hb) = train(net, &data, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 200);
        assert_eq!(evaluate(&a, &data).unwrap().1, 1.0);
    }

    #[test]
    fn predict_probabilities_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Network::build(Architecture::BlprCnn, classes(17), &mut rng);
        let data: Vec<u8> = (0..32 * 32 * 3).map(|_| rng.gen()).collect();
        let img = RgbImage::from_raw(32, 32, data).unwrap();
        let (class, probs) = predict(&net, &img).unwrap();
        assert_eq!(probs.len(), 17);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p >= 0.0));
        let best = probs.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(probs[class], best);
    }

    #[test]
    fn tensor_layout_is_channel_major() {
        let img = RgbImage::from_raw(2, 1, vec![255, 0, 51, 0, 255, 0]).unwrap();
        let t = image_to_tensor(&img);
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.2, 0.0]);
    }
}
