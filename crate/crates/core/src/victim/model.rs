use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::tensor::{matvec_slice, matvec_transposed, read_tensor, softmax_slice, write_tensor, Tensor};

use super::capture::GradientCapture;
use super::label::AugmentedLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with the convention `ReLU'(0) = 0`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One fully-connected layer: `a = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(weight: Tensor, bias: Option<Tensor>, activation: Activation) -> Result<Self> {
        if weight.ndim() != 2 {
            return Err(Error::Shape(format!(
                "layer weight must be a matrix, got {:?}",
                weight.shape()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != weight.rows() {
                return Err(Error::Shape(format!(
                    "bias of length {} for weight {:?}",
                    b.len(),
                    weight.shape()
                )));
            }
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Pre-activation output `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = matvec_slice(&self.weight, x)?;
        if let Some(b) = &self.bias {
            for (zi, bi) in z.iter_mut().zip(b.data()) {
                *zi += bi;
            }
        }
        Ok(z)
    }
}

/// A stack of fully-connected layers ending in raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<LayerSpec>,
}

/// Everything recorded during one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input of every layer; `inputs[0]` is the network input.
    pub inputs: Vec<Tensor>,
    /// Pre-activation output of every layer; the last entry is the logits.
    pub pre_activations: Vec<Tensor>,
}

impl ForwardPass {
    pub fn logits(&self) -> &Tensor {
        self.pre_activations.last().expect("at least one layer")
    }

    /// Input of the final (classifier) layer.
    pub fn last_input(&self) -> &Tensor {
        self.inputs.last().expect("at least one layer")
    }
}

impl MlpModel {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::Shape("model needs at least one layer".into()))?;
        if last.activation != Activation::Identity {
            return Err(Error::Shape(
                "the last layer must have no activation (raw logits)".into(),
            ));
        }
        if last.out_dim() < 2 {
            return Err(Error::Shape("need at least two classes".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random initialisation, uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// for weights and biases. `dims` lists input width, hidden widths, then
    /// the class count; hidden layers use `hidden_activation`.
    pub fn random(
        dims: &[usize],
        bias: bool,
        hidden_activation: Activation,
        rng: &mut RngHandle,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Argument(
                "need at least an input width and a class count".into(),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            let weight = Tensor::matrix(
                fan_out,
                fan_in,
                (0..fan_in * fan_out)
                    .map(|_| rng.uniform(-limit, limit))
                    .collect(),
            )?;
            let bias = bias.then(|| {
                Tensor::vector((0..fan_out).map(|_| rng.uniform(-limit, limit)).collect())
            });
            let activation = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                hidden_activation
            };
            layers.push(LayerSpec::new(weight, bias, activation)?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn last_layer(&self) -> &LayerSpec {
        self.layers.last().expect("validated non-empty")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn class_count(&self) -> usize {
        self.last_layer().out_dim()
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardPass> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.data().to_vec();
        for layer in &self.layers {
            let z = layer.affine(&current)?;
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(Tensor::vector(std::mem::replace(&mut current, a)));
            pre.push(Tensor::vector(z));
        }
        Ok(ForwardPass {
            inputs,
            pre_activations: pre,
        })
    }

    /// Exact single-example gradients of the cross-entropy loss.
    pub fn backward(&self, x: &Tensor, y: &AugmentedLabel) -> Result<GradientCapture> {
        let pass = self.forward(x)?;
        self.backward_from(&pass, y)
    }

    pub(crate) fn backward_from(&self, pass: &ForwardPass, y: &AugmentedLabel) -> Result<GradientCapture> {
        let logits = pass.logits();
        if y.len() != logits.len() {
            return Err(Error::Shape(format!(
                "label of length {} for {} classes",
                y.len(),
                logits.len()
            )));
        }
        let p = softmax_slice(logits.data());
        let loss = cross_entropy_from_probs(&p, y.values());
        let mut dz: Vec<f64> = p.iter().zip(y.values()).map(|(pi, yi)| pi - yi).collect();
        // When the softmax saturates, p_top rounds to 1 and p_top - y_top
        // loses everything the other entries carry. Taking the top entry as
        // minus the sum of the rest keeps Σ dz = 0, as it is analytically.
        let top = logits.argmax();
        dz[top] = -dz
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, d)| d)
            .sum::<f64>();

        let n = self.layers.len();
        let mut weight_grads = vec![None; n];
        let mut bias_grads = vec![None; n];
        let mut z_grads = vec![None; n];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            weight_grads[l] = Some(Tensor::outer(&dz, pass.inputs[l].data()));
            if layer.bias.is_some() {
                bias_grads[l] = Some(Tensor::vector(dz.clone()));
            }
            let next = if l > 0 {
                let dx = matvec_transposed(&layer.weight, &dz)?;
                let act = self.layers[l - 1].activation;
                Some(
                    dx.iter()
                        .zip(pass.pre_activations[l - 1].data())
                        .map(|(g, &z)| g * act.derivative(z))
                        .collect(),
                )
            } else {
                None
            };
            z_grads[l] = Some(Tensor::vector(std::mem::take(&mut dz)));
            if let Some(next) = next {
                dz = next;
            }
        }
        Ok(GradientCapture {
            weight_grads: weight_grads.into_iter().map(Option::unwrap).collect(),
            bias_grads,
            z_grads: z_grads.into_iter().map(Option::unwrap).collect(),
            loss,
            prediction: logits.argmax(),
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = ModelManifest {
            input_dim: self.input_dim(),
            class_count: self.class_count(),
            layers: Vec::new(),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let weight_file = format!("layer{i}_weight.gtn");
            write_tensor(dir.join(&weight_file), &layer.weight)?;
            let bias_file = match &layer.bias {
                Some(b) => {
                    let name = format!("layer{i}_bias.gtn");
                    write_tensor(dir.join(&name), b)?;
                    Some(name)
                }
                None => None,
            };
            manifest.layers.push(LayerManifest {
                in_dim: layer.in_dim(),
                out_dim: layer.out_dim(),
                activation: layer.activation,
                weight_file,
                bias_file,
            });
        }
        let path = dir.join(MODEL_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MODEL_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ModelManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in &manifest.layers {
            let weight = read_tensor(dir.join(&entry.weight_file))?;
            if weight.shape() != [entry.out_dim, entry.in_dim] {
                return Err(Error::Shape(format!(
                    "{} has shape {:?}, manifest says [{}, {}]",
                    entry.weight_file,
                    weight.shape(),
                    entry.out_dim,
                    entry.in_dim
                )));
            }
            let bias = entry
                .bias_file
                .as_ref()
                .map(|f| read_tensor(dir.join(f)))
                .transpose()?;
            layers.push(LayerSpec::new(weight, bias, entry.activation)?);
        }
        let model = Self::new(layers)?;
        if model.input_dim() != manifest.input_dim || model.class_count() != manifest.class_count {
            return Err(Error::Shape("manifest dimensions disagree with layers".into()));
        }
        Ok(model)
    }
}

pub const MODEL_MANIFEST: &str = "model.json";

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    input_dim: usize,
    class_count: usize,
    layers: Vec<LayerManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerManifest {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weight_file: String,
    bias_file: Option<String>,
}

/// `-Σ y_i log softmax(z)_i`.
pub fn cross_entropy(logits: &Tensor, y: &AugmentedLabel) -> Result<f64> {
    if logits.len() != y.len() {
        return Err(Error::Shape(format!(
            "logits of length {} against label of length {}",
            logits.len(),
            y.len()
        )));
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(-z
        .iter()
        .zip(y.values())
        .filter(|(_, &yi)| yi != 0.0)
        .map(|(zi, yi)| yi * (zi - log_sum))
        .sum::<f64>())
}

fn cross_entropy_from_probs(p: &[f64], y: &[f64]) -> f64 {
    -p.iter()
        .zip(y)
        .filter(|(_, &yi)| yi != 0.0)
        .map(|(pi, yi)| yi * pi.ln())
        .sum::<f64>()
}
