//! One-hot labels: the variance search agrees with the iDLG sign rule, and
//! both give up on the saturated corner where only two opposite rows are
//! left.
//!
//! cargo run --example onehot_vs_idlg

use softlabel::recovery::{idlg_baseline, recover, IdlgOutcome, RecoveryConfig, RecoveryStatus};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

pub fn run_example() -> softlabel::Result<()> {
    let mut rng = RngHandle::new(99);
    let model = MlpModel::random(&[20, 6], false, Activation::Relu, &mut rng)?;
    let mut agree = 0;
    for k in 0..20 {
        let x = Tensor::vector((0..20).map(|_| rng.uniform(0.0, 1.0)).collect());
        let inst = Instance::new(&model, x, AugmentedLabel::one_hot(k % 6, 6)?)?;
        let ours = recover(&inst.capture, &model, &RecoveryConfig::default(), &mut rng)?;
        if idlg_baseline(&inst.capture) == IdlgOutcome::Class(ours.label.argmax()) {
            agree += 1;
        }
    }
    println!("generic victim: {agree}/20 agree");
    assert_eq!(agree, 20);

    // a huge weight scale pushes every logit gap past exp underflow
    let w = Tensor::matrix(2, 2, vec![1e4, 0.0, 0.0, -1e4])?;
    let saturated = MlpModel::new(vec![softlabel::victim::LayerSpec::new(w, None, Activation::Identity)?])?;
    let inst = Instance::new(&saturated, Tensor::vector(vec![1.0, 0.5]), AugmentedLabel::one_hot(1, 2)?)?;
    let ours = recover(&inst.capture, &saturated, &RecoveryConfig::default(), &mut rng)?;
    println!("saturated wrong prediction: {} / iDLG {:?}", ours.status.as_str(), idlg_baseline(&inst.capture));
    assert_eq!(ours.status, RecoveryStatus::DegenerateOneHotAmbiguous);
    assert_eq!(idlg_baseline(&inst.capture), IdlgOutcome::Ambiguous);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
