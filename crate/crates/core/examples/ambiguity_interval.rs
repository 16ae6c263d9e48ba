//! Validity is not enough: a whole interval of λ yields pseudo labels that
//! are proper distributions yet differ from the truth. The variance loss
//! is what singles out λ*.
//!
//! cargo run --example ambiguity_interval

use softlabel::recovery::{ambiguity_intervals, build_context, RecoveryConfig};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let mut rng = RngHandle::new(12);
    let model = MlpModel::random(&[16, 10], false, Activation::Relu, &mut rng)?;
    let x = Tensor::vector((0..16).map(|_| rng.uniform(0.0, 1.0)).collect());
    let inst = Instance::new(&model, x, AugmentedLabel::smoothing(5, 0.35, 10)?)?;
    let ctx = build_context(&inst.capture, model.last_layer(), &RecoveryConfig::default())?;

    let runs = ambiguity_intervals(&ctx, inst.label.values(), -20.0, 20.0, 4001, 0.05)?;
    println!("λ* = {:.4}", inst.oracle_lambda());
    for (lo, hi) in &runs {
        let mid = 0.5 * (lo + hi);
        println!("valid but wrong on [{lo:.2}, {hi:.2}], e.g. loss {:.3e} at {mid:.2}", ctx.loss_at(mid));
    }
    assert!(runs.iter().any(|(lo, hi)| hi > lo));
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
