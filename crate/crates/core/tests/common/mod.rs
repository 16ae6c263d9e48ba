#![allow(dead_code)]

use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn random_input(n: usize, rng: &mut RngHandle) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.uniform(0.0, 1.0)).collect())
}

/// Random `[input, hidden.., classes]` ReLU network.
pub fn random_model(dims: &[usize], bias: bool, rng: &mut RngHandle) -> MlpModel {
    MlpModel::random(dims, bias, Activation::Relu, rng).unwrap()
}

pub fn smoothing_instance(model: &MlpModel, rng: &mut RngHandle) -> Instance {
    let c = model.class_count();
    let eps = rng.uniform(0.0, 0.5);
    let label = AugmentedLabel::smoothing(rng.index(c), eps, c).unwrap();
    Instance::new(model, random_input(model.input_dim(), rng), label).unwrap()
}

pub fn mixup_instance(model: &MlpModel, rng: &mut RngHandle) -> Instance {
    let c = model.class_count();
    let a = rng.index(c);
    let b = (a + 1 + rng.index(c - 1)) % c;
    let coef = rng.uniform_open(0.0, 1.0);
    let label = AugmentedLabel::mixup(a, b, coef, c).unwrap();
    Instance::new(model, random_input(model.input_dim(), rng), label).unwrap()
}

/// Independent softmax: plain exp / sum after a max shift, computed with
/// an explicit loop.
pub fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Cross-entropy loss of the model on (x, y) recomputed from scratch.
pub fn loss_oracle(model: &MlpModel, x: &[f64], y: &[f64]) -> f64 {
    let mut h = x.to_vec();
    for layer in model.layers() {
        let w = &layer.weight;
        let mut z = vec![0.0; w.rows()];
        for i in 0..w.rows() {
            let mut s = 0.0;
            for j in 0..w.cols() {
                s += w.at(i, j) * h[j];
            }
            if let Some(b) = &layer.bias {
                s += b.data()[i];
            }
            z[i] = s;
        }
        h = z.iter().map(|&v| layer.activation.apply(v)).collect();
    }
    let p = softmax_oracle(&h);
    -y.iter().zip(&p).map(|(yi, pi)| yi * pi.ln()).sum::<f64>()
}
