use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::tensor::Tensor;

use super::label::AugmentedLabel;
use super::model::{cross_entropy, MlpModel};

/// Class-conditioned Gaussian blobs clamped to `[0, 1]`, optionally
/// multiplied by a fixed scale.
#[derive(Debug, Clone)]
pub struct BlobSource {
    means: Vec<Vec<f64>>,
    spread: f64,
    scale: f64,
}

impl BlobSource {
    /// Per-class means are drawn uniformly from `[0.2, 0.8]` per coordinate.
    pub fn new(input_dim: usize, classes: usize, spread: f64, rng: &mut RngHandle) -> Result<Self> {
        if input_dim == 0 || classes < 2 {
            return Err(Error::Argument(
                "need a positive input width and at least two classes".into(),
            ));
        }
        let means = (0..classes)
            .map(|_| (0..input_dim).map(|_| rng.uniform(0.2, 0.8)).collect())
            .collect();
        Ok(Self { means, spread, scale: 1.0 })
    }

    /// Samples land in `[0, scale]` instead of `[0, 1]`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn input_dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn sample(&self, class: usize, rng: &mut RngHandle) -> Tensor {
        Tensor::vector(
            self.means[class]
                .iter()
                .map(|m| self.scale * (m + self.spread * rng.normal()).clamp(0.0, 1.0))
                .collect(),
        )
    }
}

pub type Dataset = Vec<(Tensor, AugmentedLabel)>;

pub const DEFAULT_BLOB_SPREAD: f64 = 0.15;

/// `n` one-hot labelled samples from a fresh [`BlobSource`].
pub fn synth_dataset(n: usize, input_dim: usize, classes: usize, rng: &mut RngHandle) -> Result<Dataset> {
    let source = BlobSource::new(input_dim, classes, DEFAULT_BLOB_SPREAD, rng)?;
    sample_dataset(&source, n, rng)
}

pub fn sample_dataset(source: &BlobSource, n: usize, rng: &mut RngHandle) -> Result<Dataset> {
    (0..n)
        .map(|_| {
            let class = rng.index(source.classes());
            Ok((source.sample(class, rng), AugmentedLabel::one_hot(class, source.classes())?))
        })
        .collect()
}

/// Mean cross-entropy after each epoch.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
}

/// Plain per-example SGD on cross-entropy, shuffling every epoch.
pub fn train(model: &MlpModel, dataset: &Dataset, epochs: usize, lr: f64, rng: &mut RngHandle) -> Result<MlpModel> {
    train_with_history(model, dataset, epochs, lr, rng).map(|(m, _)| m)
}

pub fn train_with_history(
    model: &MlpModel,
    dataset: &Dataset,
    epochs: usize,
    lr: f64,
    rng: &mut RngHandle,
) -> Result<(MlpModel, TrainHistory)> {
    let mut model = model.clone();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..epochs {
        // Fisher-Yates with the handle's stream.
        for i in (1..order.len()).rev() {
            let j = rng.index(i + 1);
            order.swap(i, j);
        }
        for &k in &order {
            let (x, y) = &dataset[k];
            let cap = model.backward(x, y)?;
            for (l, layer) in model.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer.weight.data_mut().iter_mut().zip(cap.weight_grads[l].data()) {
                    *w -= lr * g;
                }
                if let (Some(b), Some(gb)) = (layer.bias.as_mut(), cap.bias_grads[l].as_ref()) {
                    for (w, g) in b.data_mut().iter_mut().zip(gb.data()) {
                        *w -= lr * g;
                    }
                }
            }
        }
        history.epoch_losses.push(mean_loss(&model, dataset)?);
    }
    Ok((model, history))
}

pub fn mean_loss(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, y) in dataset {
        total += cross_entropy(model.forward(x)?.logits(), y)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Fraction of samples whose arg-max logit equals the label's top class.
pub fn accuracy(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, y) in dataset {
        if model.forward(x)?.logits().argmax() == y.top_class() {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}
