mod common;

use common::{mixup_instance, random_input, random_model, smoothing_instance, softmax_oracle};
use softlabel::experiment::{generate, ExperimentConfig};
use softlabel::recovery::{
    ambiguity_intervals, build_context, extract_mixup, idlg_baseline, label_loss, loss_derivative, pseudo_label,
    recover, search_gradient, search_pso, IdlgOutcome, LossKind, RecoveryConfig, RecoveryStatus,
};
use softlabel::victim::{max_l1_row, Activation, AugmentedLabel, GradientCapture, Instance, LabelKind, LayerSpec, MlpModel};
use softlabel::{Error, RngHandle, Tensor};

fn cfg() -> RecoveryConfig {
    RecoveryConfig::default()
}

/// Gradient built straight from the rank-one formula (p - y) xᵀ.
fn synthetic_capture(p: &[f64], y: &[f64], x: &[f64]) -> GradientCapture {
    let d: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
    GradientCapture {
        weight_grads: vec![Tensor::outer(&d, x)],
        bias_grads: vec![None],
        z_grads: vec![Tensor::vector(d)],
        loss: 0.0,
        prediction: 0,
    }
}

fn single_layer(w: Tensor) -> MlpModel {
    MlpModel::new(vec![LayerSpec::new(w, None, Activation::Identity).unwrap()]).unwrap()
}

#[test]
fn ratios_equal_elementwise_division() {
    let mut rng = RngHandle::new(10);
    let model = random_model(&[12, 8, 6], false, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
    let g = inst.capture.last_weight_grad();
    let r = ctx.row();
    assert_eq!(r, max_l1_row(g));
    assert_eq!(ctx.ratios()[r], 1.0);
    for i in 0..g.rows() {
        for k in 0..g.cols() {
            if g.at(r, k) != 0.0 {
                assert!((ctx.ratios()[i] - g.at(i, k) / g.at(r, k)).abs() < 1e-10);
            }
        }
    }
    assert!(ctx.ratios().iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn ratios_from_known_rank_one_structure() {
    let p = [0.1, 0.2, 0.3, 0.4];
    let y = [0.05, 0.05, 0.85, 0.05];
    let x = [0.3, 1.2, 0.7];
    let cap = synthetic_capture(&p, &y, &x);
    let model = single_layer(Tensor::zeros(&[4, 3]));
    let ctx = build_context(&cap, model.last_layer(), &cfg()).unwrap();
    let r = ctx.row();
    assert_eq!(r, 2);
    for i in 0..4 {
        let want = (p[i] - y[i]) / (p[r] - y[r]);
        assert!((ctx.ratios()[i] - want).abs() < 1e-10);
    }
}

#[test]
fn zero_gradient_has_no_context() {
    let cap = synthetic_capture(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 2.0]);
    let model = single_layer(Tensor::zeros(&[2, 2]));
    assert!(matches!(build_context(&cap, model.last_layer(), &cfg()), Err(Error::Domain(_))));
}

#[test]
fn pseudo_label_sums_to_one_and_its_slope_to_zero() {
    let mut rng = RngHandle::new(11);
    for _ in 0..200 {
        let model = random_model(&[10, 7], rng.index(2) == 0, &mut rng);
        let inst = smoothing_instance(&model, &mut rng);
        let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
        let lambda = rng.uniform(-50.0, 50.0);
        let sum: f64 = pseudo_label(&ctx, lambda).unwrap().data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let slope: f64 = ctx.pseudo_label_slope(lambda).unwrap().data().iter().sum();
        assert!(slope.abs() < 1e-9);
    }
}

#[test]
fn pseudo_label_at_oracle_is_the_label() {
    let mut rng = RngHandle::new(12);
    let model = random_model(&[20, 10, 10], false, &mut rng);
    for _ in 0..50 {
        let inst = smoothing_instance(&model, &mut rng);
        let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
        let y = pseudo_label(&ctx, inst.oracle_lambda()).unwrap();
        assert!(y.max_abs_diff(&inst.label.to_tensor()) < 1e-8);
        if let softlabel::victim::Augmentation::Smoothing { class, epsilon } = inst.label.augmentation {
            for (i, v) in y.data().iter().enumerate() {
                if i != class {
                    assert!((v - epsilon / 10.0).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn pseudo_label_matches_independent_formula() {
    let mut rng = RngHandle::new(13);
    let model = random_model(&[9, 6], true, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
    let g = inst.capture.last_weight_grad();
    let r = ctx.row();
    let layer = model.last_layer();
    for lambda in [-3.0, -0.5, 0.7, 2.0, 11.0] {
        let mut z = vec![0.0; 6];
        for i in 0..6 {
            for k in 0..9 {
                z[i] += layer.weight.at(i, k) * lambda * g.at(r, k);
            }
            z[i] += layer.bias.as_ref().unwrap().data()[i];
        }
        let p = softmax_oracle(&z);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let want: Vec<f64> = (0..6)
            .map(|i| p[i] - dot(g.row(i), g.row(r)) / dot(g.row(r), g.row(r)) / lambda)
            .collect();
        let got = pseudo_label(&ctx, lambda).unwrap();
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(matches!(pseudo_label(&ctx, 0.0), Err(Error::Domain(_))));
    assert!(loss_derivative(&ctx, 0.0).is_err());
}

#[test]
fn variance_loss_vanishes_at_ground_truth() {
    let mut rng = RngHandle::new(14);
    let model = random_model(&[16, 10], false, &mut rng);
    for k in 0..40 {
        let (inst, size) = if k % 2 == 0 {
            (smoothing_instance(&model, &mut rng), 1)
        } else {
            (mixup_instance(&model, &mut rng), 2)
        };
        let loss = label_loss(inst.label.values(), LossKind::Variance, size, 1000.0);
        assert!(loss <= 1e-12 * 1000.0);
    }
}

fn fd_check(lambda: f64, ctx: &softlabel::recovery::PseudoLabelContext) -> f64 {
    let h = 1e-6 * lambda.abs().max(1.0);
    let fd = (ctx.loss_at(lambda + h) - ctx.loss_at(lambda - h)) / (2.0 * h);
    let an = loss_derivative(ctx, lambda).unwrap();
    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8)
}

#[test]
fn loss_derivative_matches_finite_differences() {
    let mut rng = RngHandle::new(15);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for kind in [LossKind::Variance, LossKind::SquareSum] {
        while checked < 100 {
            let model = random_model(&[12, 8], false, &mut rng);
            let inst = smoothing_instance(&model, &mut rng);
            let config = RecoveryConfig { loss: kind, ..cfg() };
            let ctx = build_context(&inst.capture, model.last_layer(), &config).unwrap();
            let lambda = rng.uniform(0.5, 20.0) * if rng.index(2) == 0 { 1.0 } else { -1.0 };
            // the exclusion set may switch inside the stencil; skip those points
            let here = softlabel::recovery::exclusion_set(ctx.pseudo_label(lambda).unwrap().data(), 1);
            let h = 1e-6 * lambda.abs().max(1.0);
            let ok = [lambda - h, lambda + h].iter().all(|&l| {
                softlabel::recovery::exclusion_set(ctx.pseudo_label(l).unwrap().data(), 1) == here
            });
            if !ok {
                continue;
            }
            worst = worst.max(fd_check(lambda, &ctx));
            checked += 1;
        }
        checked = 0;
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn derivative_vanishes_at_a_bisected_minimum() {
    let mut rng = RngHandle::new(16);
    let model = random_model(&[8, 10], false, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
    // bracket a sign change of the derivative on the side of λ*
    let side = inst.oracle_lambda().signum();
    let grid: Vec<f64> = (1..2000).map(|k| side * (0.25 + 0.05 * k as f64)).collect();
    let d = |l: f64| loss_derivative(&ctx, l).unwrap();
    let pair = grid
        .windows(2)
        .map(|w| if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) })
        .find(|&(a, b)| d(a) < 0.0 && d(b) > 0.0)
        .expect("a local minimum");
    let pair = [pair.0, pair.1];
    let (mut lo, mut hi) = (pair[0], pair[1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!(d(0.5 * (lo + hi)).abs() < 1e-6);
}

#[test]
fn gradient_search_finds_oracle_on_untrained_victim() {
    let mut rng = RngHandle::new(17);
    let model = random_model(&[8, 10], false, &mut rng);
    for _ in 0..20 {
        let inst = smoothing_instance(&model, &mut rng);
        let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
        let r = search_gradient(&ctx, &cfg());
        assert_eq!(r.status, RecoveryStatus::Success);
        assert!((r.lambda.unwrap() - inst.oracle_lambda()).abs() < 1e-4);
    }
}

#[test]
fn oracle_beyond_bound_is_reported() {
    // p_r - y_r = -1/150 on the top row, so λ* = -150 with bound 100
    let y = [0.7, 0.1, 0.1, 0.1];
    let p = [0.7 - 1.0 / 150.0, 0.1 + 0.2 / 150.0, 0.1 + 0.3 / 150.0, 0.1 + 0.5 / 150.0];
    let x = [0.4, 0.9, 0.2, 0.6];
    // weights chosen so that softmax(W λ* g_r) reproduces p
    let lambda = -150.0;
    let d: Vec<f64> = p.iter().zip(&y).map(|(a, b)| a - b).collect();
    let g: Vec<f64> = x.iter().map(|v| d[0] * v).collect();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    let mut w = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        for k in 0..4 {
            w.data_mut()[i * 4 + k] = p[i].ln() * g[k] / (lambda * gg);
        }
    }
    let model = single_layer(w);
    let cap = synthetic_capture(&p, &y, &x);
    let ctx = build_context(&cap, model.last_layer(), &cfg()).unwrap();
    let at_oracle = ctx.pseudo_label(lambda).unwrap();
    assert!(at_oracle.max_abs_diff(&Tensor::vector(y.to_vec())) < 1e-9);
    let r = search_gradient(&ctx, &cfg());
    assert_eq!(r.status, RecoveryStatus::BoundExceeded);
}

#[test]
fn infinite_threshold_accepts_the_first_point() {
    let mut rng = RngHandle::new(18);
    let model = random_model(&[8, 10], false, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let config = RecoveryConfig {
        threshold: f64::INFINITY,
        refine: false,
        record_trace: true,
        ..cfg()
    };
    let ctx = build_context(&inst.capture, model.last_layer(), &config).unwrap();
    let r = search_gradient(&ctx, &config);
    assert_eq!(r.status, RecoveryStatus::Success);
    assert_eq!(r.lambda, Some(config.initial));
    assert_eq!(r.trace.unwrap().len(), 1);
}

/// First trained instance whose gradient search stalls in a local minimum
/// while λ* lies inside the bound.
fn stalled_instance() -> (MlpModel, Instance) {
    let mut config = ExperimentConfig {
        instances: 60,
        seed: 0,
        ..ExperimentConfig::default()
    };
    config.victim.dims = vec![32, 64, 10];
    config.victim.train_epochs = 100;
    let g = generate(&config).unwrap();
    let rc = config.recovery_config();
    let inst = g
        .instances
        .into_iter()
        .find(|inst| {
            let ctx = build_context(&inst.capture, g.model.last_layer(), &rc).unwrap();
            let r = search_gradient(&ctx, &rc);
            let oracle = inst.oracle_lambda();
            r.status == RecoveryStatus::Failed
                && oracle > 2.0
                && oracle < 50.0
                && r.lambda.unwrap() > 0.0
                && r.lambda.unwrap() < oracle
        })
        .expect("a trained instance with a local minimum before λ*");
    (g.model, inst)
}

#[test]
fn swarm_escapes_the_local_minimum_of_a_trained_victim() {
    let (model, inst) = stalled_instance();
    let config = RecoveryConfig {
        record_trace: true,
        ..cfg()
    };
    let ctx = build_context(&inst.capture, model.last_layer(), &config).unwrap();
    let stuck = search_gradient(&ctx, &config);
    let a = search_pso(&ctx, &config, &mut RngHandle::new(4));
    assert_eq!(a.status, RecoveryStatus::Success);
    assert!((a.lambda.unwrap() - inst.oracle_lambda()).abs() < 1e-3);
    assert!(stuck.loss > a.loss);
    let b = search_pso(&ctx, &config, &mut RngHandle::new(4));
    assert_eq!(a.lambda, b.lambda);
    assert_eq!(a.trace, b.trace);
    // and recover() falls through to the swarm by itself
    let full = recover(&inst.capture, &model, &cfg(), &mut RngHandle::new(9)).unwrap();
    assert_eq!(full.status, RecoveryStatus::Success);
}

#[test]
fn swarm_with_unreachable_threshold_fails() {
    let mut rng = RngHandle::new(19);
    let model = random_model(&[8, 10], false, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let config = RecoveryConfig {
        threshold: 0.0,
        noise_tolerance: 0.0,
        pop: 20,
        max_iter: 5,
        ..cfg()
    };
    let ctx = build_context(&inst.capture, model.last_layer(), &config).unwrap();
    assert_eq!(search_pso(&ctx, &config, &mut rng).status, RecoveryStatus::Failed);
}

#[test]
fn zero_gradient_returns_the_prediction() {
    let model = single_layer(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let mut cap = synthetic_capture(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 1.0]);
    cap.prediction = 1;
    let r = recover(&cap, &model, &cfg(), &mut RngHandle::new(0)).unwrap();
    assert_eq!(r.status, RecoveryStatus::DegenerateOneHotResolved);
    assert_eq!(r.label.data(), &[0.0, 1.0]);
}

#[test]
fn two_opposite_rows_are_ambiguous() {
    // perfect-confidence wrong prediction: p = e_0, y = e_2
    let cap = synthetic_capture(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.5, 0.25]);
    let model = single_layer(Tensor::zeros(&[3, 2]));
    let r = recover(&cap, &model, &cfg(), &mut RngHandle::new(0)).unwrap();
    assert_eq!(r.status, RecoveryStatus::DegenerateOneHotAmbiguous);
    assert_eq!(r.candidates.len(), 2);
    assert_eq!(r.candidates[0].data(), &[1.0, 0.0, 0.0]);
    assert_eq!(r.candidates[1].data(), &[0.0, 0.0, 1.0]);
    assert_eq!(idlg_baseline(&cap), IdlgOutcome::Ambiguous);
}

#[test]
fn untrained_smoothing_batch_recovers_labels_and_features() {
    let mut rng = RngHandle::new(20);
    let model = random_model(&[24, 16, 10], false, &mut rng);
    let mut ok = 0;
    for _ in 0..1000 {
        let inst = smoothing_instance(&model, &mut rng);
        let r = recover(&inst.capture, &model, &cfg(), &mut rng).unwrap();
        let lr: f64 = r.label.data().iter().zip(inst.label.values()).map(|(a, b)| (a - b).abs()).sum();
        if r.is_success() && lr < 1e-3 {
            ok += 1;
            assert!(r.feature.max_abs_diff(inst.last_input()) < 1e-6);
            let sum: f64 = r.label.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
    assert!(ok >= 990, "{ok}/1000");
}

#[test]
fn feature_is_independent_of_coe() {
    let mut rng = RngHandle::new(21);
    let model = random_model(&[16, 10], false, &mut rng);
    for _ in 0..10 {
        let inst = smoothing_instance(&model, &mut rng);
        for coe in [1.0, 2.0, 4.0, 8.0] {
            let config = RecoveryConfig { coe, ..cfg() };
            let r = recover(&inst.capture, &model, &config, &mut RngHandle::new(1)).unwrap();
            assert!(r.is_success());
            assert!(r.feature.max_abs_diff(inst.last_input()) < 1e-6, "coe {coe}");
        }
    }
}

#[test]
fn idlg_matches_one_hot_truth_on_generic_net() {
    let mut rng = RngHandle::new(22);
    let model = random_model(&[10, 8, 7], false, &mut rng);
    for k in 0..30 {
        let inst = Instance::new(&model, random_input(10, &mut rng), AugmentedLabel::one_hot(k % 7, 7).unwrap()).unwrap();
        assert_eq!(idlg_baseline(&inst.capture), IdlgOutcome::Class(k % 7));
    }
}

#[test]
fn idlg_picks_a_class_but_misses_the_soft_label() {
    // y_top = 0.6 with p_top small: p_top - y_top < 0, so the sign rule
    // still fires, but a one-hot answer is not the smoothed label
    let p = [0.05, 0.3, 0.3, 0.35];
    let y = [0.6, 0.1333333333333333, 0.1333333333333333, 0.1333333333333334];
    let cap = synthetic_capture(&p, &y, &[0.4, 0.8, 0.1]);
    let IdlgOutcome::Class(c) = idlg_baseline(&cap) else {
        panic!("sign rule should select a class");
    };
    assert_eq!(c, 0);
    let mut one_hot = [0.0; 4];
    one_hot[c] = 1.0;
    let lr: f64 = one_hot.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
    assert!(lr > 0.5);
}

#[test]
fn mixup_coefficient_is_recovered() {
    let mut rng = RngHandle::new(23);
    let model = random_model(&[30, 10], false, &mut rng);
    let x = random_input(30, &mut rng);
    let inst = Instance::new(&model, x, AugmentedLabel::mixup(4, 1, 0.37, 10).unwrap()).unwrap();
    let config = RecoveryConfig::for_exclusion(LabelKind::Mixup.exclusion_size());
    let r = recover(&inst.capture, &model, &config, &mut rng).unwrap();
    let est = extract_mixup(&r.label).unwrap();
    assert_eq!((est.class_a, est.class_b), (1, 4));
    assert!((est.coefficient - 0.63).abs() < 1e-3);
}

#[test]
fn smoothing_instance_has_a_valid_but_wrong_interval() {
    let mut rng = RngHandle::new(24);
    let model = random_model(&[16, 10], false, &mut rng);
    let inst = smoothing_instance(&model, &mut rng);
    let ctx = build_context(&inst.capture, model.last_layer(), &cfg()).unwrap();
    let runs = ambiguity_intervals(&ctx, inst.label.values(), -50.0, 50.0, 10001, 0.05).unwrap();
    assert!(runs.iter().any(|(a, b)| b > a));
    for (a, b) in runs {
        for l in [a, 0.5 * (a + b), b] {
            let y = ctx.pseudo_label(l).unwrap();
            assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
