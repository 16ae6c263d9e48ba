//! Recover a label-smoothed target and the last-layer feature from one
//! client's gradients.
//!
//! cargo run --example recover_smoothing

use softlabel::recovery::{recover, RecoveryConfig};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let mut rng = RngHandle::new(2024);
    let model = MlpModel::random(&[32, 16, 10], false, Activation::Relu, &mut rng)?;
    let x = Tensor::vector((0..32).map(|_| rng.uniform(0.0, 1.0)).collect());
    let label = AugmentedLabel::smoothing(3, 0.3, 10)?;
    let inst = Instance::new(&model, x, label)?;

    // the attacker only sees the model and the captured gradients
    let result = recover(&inst.capture, &model, &RecoveryConfig::default(), &mut rng)?;

    println!("status   {}", result.status.as_str());
    println!("lambda   {:?} (oracle {:.12})", result.lambda, inst.oracle_lambda());
    let shown: Vec<String> = result.label.data().iter().map(|v| format!("{v:.6}")).collect();
    println!("label    [{}]", shown.join(", "));
    println!("feature  max |err| = {:.3e}", result.feature.max_abs_diff(inst.last_input()));
    assert!(result.is_success());
    assert!(result.feature.max_abs_diff(inst.last_input()) < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
