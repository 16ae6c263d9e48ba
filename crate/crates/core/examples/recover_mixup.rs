//! Mixup: recover the two mixed classes and the mixing coefficient.
//!
//! cargo run --example recover_mixup

use softlabel::recovery::{extract_mixup, recover, RecoveryConfig};
use softlabel::victim::{mix_inputs, Activation, AugmentedLabel, Instance, LabelKind, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let mut rng = RngHandle::new(7);
    let model = MlpModel::random(&[48, 10], false, Activation::Relu, &mut rng)?;
    let mut image = || Tensor::vector((0..48).map(|_| rng.uniform(0.0, 1.0)).collect());
    let (xa, xb) = (image(), image());
    let a = 0.37;
    let inst = Instance::new(&model, mix_inputs(&xa, &xb, a)?, AugmentedLabel::mixup(2, 6, a, 10)?)?;

    let config = RecoveryConfig::for_exclusion(LabelKind::Mixup.exclusion_size());
    let result = recover(&inst.capture, &model, &config, &mut rng)?;
    let est = extract_mixup(&result.label)?;
    println!("status {}  classes ({}, {})  coefficient {:.6}", result.status.as_str(), est.class_a, est.class_b, est.coefficient);
    assert_eq!((est.class_a, est.class_b), (6, 2)); // larger share first
    assert!((est.coefficient - (1.0 - a)).abs() < 1e-3);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
