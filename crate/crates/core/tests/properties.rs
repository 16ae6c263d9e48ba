use proptest::prelude::*;
use softlabel::recovery::{build_context, pseudo_label, recover, RecoveryConfig};
use softlabel::tensor::{read_tensor, write_tensor};
use softlabel::victim::{Activation, AugmentedLabel, Instance, MlpModel};
use softlabel::{RngHandle, Tensor};

fn setup(seed: u64, input: usize, classes: usize, eps: f64) -> (MlpModel, Instance) {
    let mut rng = RngHandle::new(seed);
    let model = MlpModel::random(&[input, classes], rng.index(2) == 0, Activation::Relu, &mut rng).unwrap();
    let x = Tensor::vector((0..input).map(|_| rng.uniform(0.0, 1.0)).collect());
    let label = AugmentedLabel::smoothing(rng.index(classes), eps, classes).unwrap();
    let inst = Instance::new(&model, x, label).unwrap();
    (model, inst)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_columns_sum_to_zero(seed in any::<u64>(), input in 2usize..40, classes in 2usize..20, eps in 0.0f64..0.9) {
        let (_, inst) = setup(seed, input, classes, eps);
        let g = inst.capture.last_weight_grad();
        for k in 0..g.cols() {
            let s: f64 = (0..g.rows()).map(|i| g.at(i, k)).sum();
            let scale: f64 = (0..g.rows()).map(|i| g.at(i, k).abs()).sum::<f64>().max(1e-300);
            prop_assert!(s.abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn pseudo_labels_always_sum_to_one(seed in any::<u64>(), classes in 3usize..15, lambda in -200.0f64..200.0) {
        prop_assume!(lambda.abs() > 1e-3);
        let (model, inst) = setup(seed, 12, classes, 0.3);
        let ctx = build_context(&inst.capture, model.last_layer(), &RecoveryConfig::default()).unwrap();
        let y = pseudo_label(&ctx, lambda).unwrap();
        prop_assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-9 * (1.0 + 1.0 / lambda.abs()));
    }

    #[test]
    fn smoothing_labels_are_distributions(class in 0usize..10, eps in 0.0f64..1.0) {
        let y = AugmentedLabel::smoothing(class, eps, 10).unwrap();
        prop_assert!((y.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(y.values().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(y.top_class(), class);
    }

    #[test]
    fn mixup_labels_hold_two_classes(a in 0usize..10, shift in 1usize..10, coef in 0.01f64..0.99) {
        let b = (a + shift) % 10;
        let y = AugmentedLabel::mixup(a, b, coef, 10).unwrap();
        prop_assert_eq!(y.values().iter().filter(|v| **v > 0.0).count(), 2);
        prop_assert!((y.values()[a] - coef).abs() < 1e-15);
        prop_assert!((y.values()[b] - (1.0 - coef)).abs() < 1e-15);
    }

    #[test]
    fn tensors_round_trip_bit_exact(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal() * 1e3).collect();
        let t = Tensor::matrix(rows, cols, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.gtn");
        write_tensor(&p, &t).unwrap();
        prop_assert_eq!(read_tensor(&p).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn successful_recovery_reproduces_the_capture(seed in any::<u64>(), input in 8usize..48, eps in 0.05f64..0.5) {
        let (model, inst) = setup(seed, input, 10, eps);
        let r = recover(&inst.capture, &model, &RecoveryConfig::default(), &mut RngHandle::new(seed)).unwrap();
        if r.is_success() {
            // the recovered (feature, label) pair regenerates the observed gradient
            let single = MlpModel::new(vec![model.last_layer().clone()]).unwrap();
            let p = softlabel::tensor::softmax(single.forward(&r.feature).unwrap().logits()).unwrap();
            let g = inst.capture.last_weight_grad();
            let scale = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..g.rows() {
                let d = p.data()[i] - r.label.data()[i];
                for k in 0..g.cols() {
                    prop_assert!((d * r.feature.data()[k] - g.at(i, k)).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
