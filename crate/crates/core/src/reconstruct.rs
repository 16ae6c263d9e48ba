//! Analytical input reconstruction through fully-connected layers.
//!
//! For a layer `z = W x`, every row of `∂L/∂W` is `(∂L/∂z)_i · xᵀ`, so one
//! row divided by a non-zero `(∂L/∂z)_i` returns the layer input. Given the
//! recovered classifier feature and label, `∂L/∂z` of the last layer is
//! `p - ŷ`; `Wᵀ ∂L/∂z` masked by the ReLU pattern of the recovered input is
//! `∂L/∂z` of the layer below, and the recursion walks down to the input.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::recovery::RecoveryResult;
use crate::tensor::{matvec_transposed, softmax_slice, Tensor};
use crate::victim::{Activation, GradientCapture, MlpModel};

#[derive(Debug, Clone)]
pub struct LayerInversionState {
    pub layer: usize,
    /// Recovered input of this layer.
    pub input: Tensor,
    /// ∂L/∂z of this layer used for the inversion.
    pub z_grad: Tensor,
    pub pivot: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub input: Tensor,
    /// Per-layer states ordered by layer index.
    pub layers: Vec<LayerInversionState>,
}

/// Largest-magnitude entry of `z_grad`; `None` when all entries are zero.
pub fn pivot(z_grad: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in z_grad.iter().enumerate() {
        if *v != 0.0 && best.is_none_or(|b| v.abs() > z_grad[b].abs()) {
            best = Some(i);
        }
    }
    best
}

/// Layer input from one weight-gradient row, pivoting on the largest
/// `|z_grad_i|`.
pub fn invert_layer(weight_grad: &Tensor, z_grad: &Tensor) -> Result<Tensor> {
    let i = pivot(z_grad.data()).ok_or(Error::DeadLayer)?;
    invert_layer_at(weight_grad, z_grad, i)
}

/// Layer input from weight-gradient row `i`.
pub fn invert_layer_at(weight_grad: &Tensor, z_grad: &Tensor, i: usize) -> Result<Tensor> {
    if weight_grad.ndim() != 2 || weight_grad.rows() != z_grad.len() {
        return Err(Error::Shape(format!(
            "weight gradient {:?} against output gradient of length {}",
            weight_grad.shape(),
            z_grad.len()
        )));
    }
    let d = z_grad.data()[i];
    if d == 0.0 {
        return Err(Error::DeadLayer);
    }
    Ok(Tensor::vector(weight_grad.row(i).iter().map(|v| v / d).collect()))
}

/// ∂L/∂z of the layer that produced `input` through `activation`.
pub fn propagate_zgrad(weight: &Tensor, z_grad: &Tensor, input: &Tensor, activation: Activation) -> Result<Tensor> {
    let dx = matvec_transposed(weight, z_grad.data())?;
    if dx.len() != input.len() {
        return Err(Error::Shape(format!(
            "propagated gradient of length {} against input of length {}",
            dx.len(),
            input.len()
        )));
    }
    Ok(Tensor::vector(match activation {
        Activation::Identity => dx,
        Activation::Relu => dx
            .iter()
            .zip(input.data())
            .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
            .collect(),
    }))
}

/// Walks from the recovered classifier feature down to the network input.
///
/// Only weight gradients are read from `capture`. A dead layer stops the
/// walk with [`Error::PartialReconstruction`], which carries every input
/// recovered so far.
pub fn reconstruct_input(model: &MlpModel, capture: &GradientCapture, recovered: &RecoveryResult) -> Result<Reconstruction> {
    let layers = model.layers();
    let last = layers.len() - 1;
    if capture.layer_count() != layers.len() {
        return Err(Error::Shape(format!(
            "capture has {} layers, model has {}",
            capture.layer_count(),
            layers.len()
        )));
    }
    if recovered.feature.len() != layers[last].in_dim() {
        return Err(Error::Shape("recovered feature does not fit the last layer".into()));
    }
    let logits = layers[last].affine(recovered.feature.data())?;
    let p = softmax_slice(&logits);
    let z_last = Tensor::vector(p.iter().zip(recovered.label.data()).map(|(p, y)| p - y).collect());
    let mut states = vec![LayerInversionState {
        layer: last,
        input: recovered.feature.clone(),
        pivot: pivot(z_last.data()).unwrap_or(0),
        z_grad: z_last,
    }];
    for l in (0..last).rev() {
        let above = states.last().expect("seeded");
        let z_grad = propagate_zgrad(&layers[l + 1].weight, &above.z_grad, &above.input, layers[l].activation)?;
        let Some(i) = pivot(z_grad.data()) else {
            let mut recovered: Vec<Tensor> = states.iter().rev().map(|s| s.input.clone()).collect();
            recovered.shrink_to_fit();
            return Err(Error::PartialReconstruction {
                dead_layer: l,
                deepest_recovered: l + 1,
                recovered,
            });
        };
        let input = invert_layer_at(&capture.weight_grads[l], &z_grad, i)?;
        states.push(LayerInversionState {
            layer: l,
            input,
            z_grad,
            pivot: i,
        });
    }
    states.reverse();
    Ok(Reconstruction {
        input: states[0].input.clone(),
        layers: states,
    })
}

/// Layer inputs from weight-gradient rows divided by bias-gradient entries,
/// for every layer that has a bias.
pub fn bias_attack(capture: &GradientCapture) -> Vec<Option<Result<Tensor>>> {
    capture
        .weight_grads
        .iter()
        .zip(&capture.bias_grads)
        .map(|(w, b)| b.as_ref().map(|b| invert_layer(w, b)))
        .collect()
}

/// Writes an 8-bit binary PGM (one channel) or PPM (three channels) for an
/// image stored channel-first as `[channels, height, width]`. Values are
/// clamped to `[0, 1]`, scaled by 255 and rounded.
pub fn write_image(path: impl AsRef<Path>, image: &Tensor, channels: usize, height: usize, width: usize) -> Result<()> {
    let path = path.as_ref();
    if image.len() != channels * height * width || !(channels == 1 || channels == 3) {
        return Err(Error::Shape(format!(
            "cannot write {} values as a {channels}x{height}x{width} image",
            image.len()
        )));
    }
    let to_byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let plane = height * width;
    let mut bytes = Vec::with_capacity(image.len());
    for p in 0..plane {
        for c in 0..channels {
            bytes.push(to_byte(image.data()[c * plane + p]));
        }
    }
    let magic = if channels == 1 { "P5" } else { "P6" };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "{magic}\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
