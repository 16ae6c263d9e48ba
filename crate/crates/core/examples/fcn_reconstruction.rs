//! Analytic input reconstruction through an unbiased 4-layer FCN, starting
//! from the recovered soft label.
//!
//! cargo run --example fcn_reconstruction [out_dir]

use softlabel::metrics::{psnr, ssim};
use softlabel::reconstruct::{reconstruct_input, write_image};
use softlabel::recovery::{recover, RecoveryConfig};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let (h, w) = (24, 24);
    let mut rng = RngHandle::new(5);
    let model = MlpModel::random(&[h * w, 128, 64, 32, 10], false, Activation::Relu, &mut rng)?;
    // a smooth synthetic image: two gradients and a bright disc
    let img: Vec<f64> = (0..h * w)
        .map(|k| {
            let (r, c) = ((k / w) as f64, (k % w) as f64);
            let disc = if (r - 9.0).powi(2) + (c - 14.0).powi(2) < 25.0 { 0.4 } else { 0.0 };
            (0.3 * r / h as f64 + 0.3 * c / w as f64 + disc).min(1.0)
        })
        .collect();
    let inst = Instance::new(&model, Tensor::vector(img), AugmentedLabel::smoothing(4, 0.15, 10)?)?;

    let recovered = recover(&inst.capture, &model, &RecoveryConfig::default(), &mut rng)?;
    let rec = reconstruct_input(&model, &inst.capture, &recovered)?;
    let (a, b) = (rec.input.clone().reshaped(vec![h, w])?, inst.input.clone().reshaped(vec![h, w])?);
    println!("max |err| {:.3e}  PSNR {:.2} dB  SSIM {:.6}", rec.input.max_abs_diff(&inst.input), psnr(&a, &b, 1.0)?, ssim(&a, &b)?);
    for layer in &rec.layers {
        println!("  layer {} pivot {}", layer.layer, layer.pivot);
    }
    if let Some(dir) = std::env::args().nth(1) {
        write_image(std::path::Path::new(&dir).join("reconstructed.pgm"), &rec.input, 1, h, w)?;
    }
    assert!(rec.input.max_abs_diff(&inst.input) < 1e-8);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
