//! Sample the λ-loss landscape of one instance, write it as CSV and show
//! where its minimum sits relative to λ*.
//!
//! cargo run --example loss_landscape > trace.csv

use softlabel::recovery::{build_context, loss_landscape, RecoveryConfig};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let mut rng = RngHandle::new(3);
    let model = MlpModel::random(&[8, 10], false, Activation::Relu, &mut rng)?;
    let x = Tensor::vector((0..8).map(|_| rng.uniform(0.0, 1.0)).collect());
    let inst = Instance::new(&model, x, AugmentedLabel::smoothing(0, 0.2, 10)?)?;
    let ctx = build_context(&inst.capture, model.last_layer(), &RecoveryConfig::default())?;

    let points = loss_landscape(&ctx, -8.0, 8.0, 1601)?;
    println!("lambda,scaled_loss");
    for p in points.iter().step_by(100) {
        println!("{:.3},{:.6e}", p.lambda, p.loss);
    }
    let best = points.iter().min_by(|a, b| a.loss.total_cmp(&b.loss)).unwrap();
    eprintln!("grid minimum at {:.3}, oracle {:.6}", best.lambda, inst.oracle_lambda());
    assert!((best.lambda - inst.oracle_lambda()).abs() <= 0.01 + 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
