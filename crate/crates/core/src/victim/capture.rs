use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Tensor};

use super::label::AugmentedLabel;
use super::model::{ForwardPass, MlpModel};

/// Per-layer gradients of one training example.
///
/// `weight_grads` and `bias_grads` are what a federated client uploads.
/// `z_grads`, `loss` and `prediction` are kept for verification and for
/// the zero-gradient corner case; the attack code only reads `z_grads` in
/// tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCapture {
    pub weight_grads: Vec<Tensor>,
    pub bias_grads: Vec<Option<Tensor>>,
    /// ∂L/∂z for every layer's pre-activation output.
    pub z_grads: Vec<Tensor>,
    pub loss: f64,
    /// Arg-max class of the forward pass that produced the gradients.
    pub prediction: usize,
}

impl GradientCapture {
    pub fn layer_count(&self) -> usize {
        self.weight_grads.len()
    }

    pub fn last_weight_grad(&self) -> &Tensor {
        self.weight_grads.last().expect("at least one layer")
    }

    pub fn last_weight_grad_mut(&mut self) -> &mut Tensor {
        self.weight_grads.last_mut().expect("at least one layer")
    }

    pub fn last_bias_grad(&self) -> Option<&Tensor> {
        self.bias_grads.last().and_then(Option::as_ref)
    }

    /// Element-wise sum over the rows of the last-layer weight gradient.
    /// Zero for an exact capture because the entries of `p - y` cancel.
    pub fn last_row_sum(&self) -> Vec<f64> {
        let g = self.last_weight_grad();
        let mut sum = vec![0.0; g.cols()];
        for r in 0..g.rows() {
            for (s, v) in sum.iter_mut().zip(g.row(r)) {
                *s += v;
            }
        }
        sum
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut has_bias = Vec::with_capacity(self.layer_count());
        for (i, (w, b)) in self.weight_grads.iter().zip(&self.bias_grads).enumerate() {
            write_tensor(dir.join(format!("grad_w{i}.gtn")), w)?;
            write_tensor(dir.join(format!("grad_z{i}.gtn")), &self.z_grads[i])?;
            if let Some(b) = b {
                write_tensor(dir.join(format!("grad_b{i}.gtn")), b)?;
            }
            has_bias.push(b.is_some());
        }
        let meta = CaptureMeta {
            layers: self.layer_count(),
            has_bias,
            loss: self.loss,
            prediction: self.prediction,
        };
        write_json(&dir.join("capture.json"), &meta)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: CaptureMeta = read_json(&dir.join("capture.json"))?;
        let mut cap = GradientCapture {
            weight_grads: Vec::with_capacity(meta.layers),
            bias_grads: Vec::with_capacity(meta.layers),
            z_grads: Vec::with_capacity(meta.layers),
            loss: meta.loss,
            prediction: meta.prediction,
        };
        for i in 0..meta.layers {
            cap.weight_grads.push(read_tensor(dir.join(format!("grad_w{i}.gtn")))?);
            cap.z_grads.push(read_tensor(dir.join(format!("grad_z{i}.gtn")))?);
            let bias = meta.has_bias.get(i).copied().unwrap_or(false);
            cap.bias_grads.push(if bias {
                Some(read_tensor(dir.join(format!("grad_b{i}.gtn")))?)
            } else {
                None
            });
        }
        Ok(cap)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CaptureMeta {
    layers: usize,
    has_bias: Vec<bool>,
    loss: f64,
    prediction: usize,
}

/// One attacked training example with its ground truth, used to score the
/// attack.
#[derive(Debug, Clone)]
pub struct Instance {
    pub input: Tensor,
    pub label: AugmentedLabel,
    pub pass: ForwardPass,
    pub capture: GradientCapture,
}

impl Instance {
    pub fn new(model: &MlpModel, input: Tensor, label: AugmentedLabel) -> Result<Self> {
        let pass = model.forward(&input)?;
        let capture = model.backward_from(&pass, &label)?;
        Ok(Self {
            input,
            label,
            pass,
            capture,
        })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        crate::tensor::softmax_slice(self.pass.logits().data())
    }

    /// Input of the classifier layer, the feature the attack recovers.
    pub fn last_input(&self) -> &Tensor {
        self.pass.last_input()
    }

    /// `1 / (p_r - y_r)` for the row the attack pivots on (largest L1 norm).
    pub fn oracle_lambda(&self) -> f64 {
        let r = max_l1_row(self.capture.last_weight_grad());
        let p = self.probabilities();
        1.0 / (p[r] - self.label.values()[r])
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.capture.save(dir)?;
        write_tensor(dir.join("input.gtn"), &self.input)?;
        write_json(&dir.join("label.json"), &self.label)
    }

    pub fn load(dir: impl AsRef<Path>, model: &MlpModel) -> Result<Self> {
        let dir = dir.as_ref();
        let input = read_tensor(dir.join("input.gtn"))?;
        let label: AugmentedLabel = read_json(&dir.join("label.json"))?;
        let pass = model.forward(&input)?;
        let capture = GradientCapture::load(dir)?;
        Ok(Self {
            input,
            label,
            pass,
            capture,
        })
    }
}

/// Row with the largest absolute sum; ties go to the lowest index.
pub fn max_l1_row(g: &Tensor) -> usize {
    let norms: Vec<f64> = (0..g.rows())
        .map(|r| g.row(r).iter().map(|v| v.abs()).sum())
        .collect();
    crate::tensor::argmax(&norms)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
