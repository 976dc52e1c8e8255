use novelnet_core::losses::{cross_entropy, membership_loss, MembershipParams};
use novelnet_core::nn::{
    backward, finite_difference_grad, forward, init_params, max_relative_error, predict, seeded_rng, LayerSpec,
    NetworkSpec, ParamSet,
};
use novelnet_core::trainer::{compute_gradients, DualBranchModel, LabeledBatch, TrainingConfig, TrainingMode};
use novelnet_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-5;
// Central differences carry ~1e-10 absolute round-off; entries smaller than
// this are compared on that absolute scale instead of relatively.
const FLOOR: f64 = 1e-4;

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn perturbed_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = init_params(spec, rng.random()).unwrap();
    for (_, t) in p.iter_mut() {
        for v in t.data_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

fn conv(in_channels: usize, filters: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels,
        filters,
        kernel,
        stride,
    }
}

fn dense(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense { inputs, outputs }
}

/// Random architecture drawn from templates that together cover every
/// layer kind, strides 1 and 2, and kernels 1 to 3.
fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    match rng.random_range(0..4) {
        0 => {
            let (a, b, c) = (rng.random_range(2..6), rng.random_range(2..6), rng.random_range(2..5));
            NetworkSpec::new(vec![a], vec![dense(a, b), LayerSpec::Relu, dense(b, c)]).unwrap()
        }
        1 => {
            let (ch, k, f) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..4));
            let stride = rng.random_range(1..3);
            let size = k + stride * rng.random_range(1..3);
            NetworkSpec::new(
                vec![ch, size, size + 1],
                vec![
                    conv(ch, f, k, stride),
                    LayerSpec::Relu,
                    LayerSpec::GlobalAveragePool,
                    dense(f, 3),
                ],
            )
            .unwrap()
        }
        2 => {
            let ch = rng.random_range(1..3);
            NetworkSpec::new(
                vec![ch, 6, 5],
                vec![
                    conv(ch, 3, 2, 1),
                    LayerSpec::Relu,
                    conv(3, 2, 2, 2),
                    LayerSpec::Relu,
                    LayerSpec::GlobalAveragePool,
                ],
            )
            .unwrap()
        }
        _ => {
            let ch = rng.random_range(1..3);
            NetworkSpec::new(
                vec![ch, 4, 4],
                vec![conv(ch, 2, 3, 1), LayerSpec::GlobalAveragePool, dense(2, 2)],
            )
            .unwrap()
        }
    }
}

fn projected_loss(spec: &NetworkSpec, p: &ParamSet, x: &Tensor, r: &Tensor) -> f64 {
    let y = predict(spec, p, x).unwrap();
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn layer_stack_gradients_match_finite_differences() {
    let mut rng = seeded_rng(2024, 0);
    let mut kinds = [false; 4];
    for trial in 0..24 {
        let spec = random_spec(&mut rng);
        for l in &spec.layers {
            kinds[match l {
                LayerSpec::Dense { .. } => 0,
                LayerSpec::Conv2d { .. } => 1,
                LayerSpec::Relu => 2,
                LayerSpec::GlobalAveragePool => 3,
            }] = true;
        }
        let params = perturbed_params(&spec, &mut rng);
        let mut shape = vec![3];
        shape.extend(&spec.input_shape);
        let x = normal(&mut rng, &shape);
        let (y, cache) = forward(&spec, &params, &x).unwrap();
        let r = normal(&mut rng, y.shape());
        let analytic = backward(&spec, &params, &cache, &r).unwrap();

        let numeric = finite_difference_grad(|p| Ok(projected_loss(&spec, p, &x, &r)), &params, EPS).unwrap();
        let err = max_relative_error(&analytic.params, &numeric, FLOOR);
        assert!(
            err < TOL,
            "trial {trial}: parameter gradient error {err:e} for {spec:?}"
        );

        let mut xp = ParamSet::new();
        xp.insert("x", x.clone());
        let numeric_x = finite_difference_grad(
            |p| Ok(projected_loss(&spec, &params, p.get("x").unwrap(), &r)),
            &xp,
            EPS,
        )
        .unwrap();
        let mut ax = ParamSet::new();
        ax.insert("x", analytic.input);
        let err = max_relative_error(&ax, &numeric_x, FLOOR);
        assert!(err < TOL, "trial {trial}: input gradient error {err:e}");
    }
    assert_eq!(kinds, [true; 4], "every layer kind exercised");
}

fn logits_param(f: &[f64]) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert("f", Tensor::new(vec![1, f.len()], f.to_vec()).unwrap());
    p
}

#[test]
fn membership_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(7, 1);
    let mut checked = 0;
    for &c in &[2usize, 5, 10] {
        for &lambda in &[1.0, 5.0] {
            let params = MembershipParams::new(lambda).unwrap();
            for _ in 0..10 {
                let f: Vec<f64> = (0..c).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let y = rng.random_range(0..c);
                let analytic = membership_loss(&Tensor::new(vec![1, c], f.clone()).unwrap(), &[y], params).unwrap();
                let numeric = finite_difference_grad(
                    |p| Ok(membership_loss(p.get("f").unwrap(), &[y], params)?.value),
                    &logits_param(&f),
                    EPS,
                )
                .unwrap();
                let mut a = ParamSet::new();
                a.insert("f", analytic.grad);
                let err = max_relative_error(&a, &numeric, 1e-6);
                assert!(err < TOL, "c={c} lambda={lambda} f={f:?} y={y}: {err:e}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 50);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(8, 1);
    for _ in 0..30 {
        let c = rng.random_range(2..8);
        let f: Vec<f64> = (0..c).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let y = rng.random_range(0..c);
        let analytic = cross_entropy(&Tensor::new(vec![1, c], f.clone()).unwrap(), &[y]).unwrap();
        let numeric = finite_difference_grad(
            |p| Ok(cross_entropy(p.get("f").unwrap(), &[y])?.value),
            &logits_param(&f),
            EPS,
        )
        .unwrap();
        let mut a = ParamSet::new();
        a.insert("f", analytic.grad);
        let err = max_relative_error(&a, &numeric, FLOOR);
        assert!(err < TOL, "f={f:?} y={y}: {err:e}");
    }
}

/// Whole dual-branch model (2-conv backbone, both heads, all loss terms)
/// against central differences of the cumulative loss.
#[test]
fn dual_branch_cumulative_loss_gradient() {
    let mut rng = seeded_rng(31, 2);
    let backbone = NetworkSpec::conv_backbone([2, 5, 5], 3, 4, 2).unwrap();
    let mut model = DualBranchModel::build(backbone, 3, 4, 9).unwrap();
    for net in [
        &mut model.backbone,
        &mut model.known_head,
        model.reference_head.as_mut().unwrap(),
    ] {
        for (_, t) in net.params.iter_mut() {
            for v in t.data_mut() {
                *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let xk = normal(&mut rng, &[4, 2, 5, 5]);
    let xr = normal(&mut rng, &[3, 2, 5, 5]);
    let yk = [0, 2, 1, 2];
    let yr = [3, 0, 1];

    for mode in [TrainingMode::DualFull, TrainingMode::CeMembership, TrainingMode::DualCe] {
        let cfg = TrainingConfig {
            mode,
            alpha1: 0.7,
            alpha2: 1.3,
            ..TrainingConfig::default()
        };
        let reference = mode
            .has_reference_branch()
            .then_some(LabeledBatch { x: &xr, labels: &yr });
        let (grads, _) = compute_gradients(&model, LabeledBatch { x: &xk, labels: &yk }, reference, &cfg).unwrap();

        let loss_with = |m: &DualBranchModel| {
            compute_gradients(m, LabeledBatch { x: &xk, labels: &yk }, reference, &cfg).map(|(_, s)| s.cumulative)
        };
        let num_backbone = finite_difference_grad(
            |p| {
                let mut m = model.clone();
                m.backbone.params = p.clone();
                loss_with(&m)
            },
            &model.backbone.params,
            EPS,
        )
        .unwrap();
        let num_known = finite_difference_grad(
            |p| {
                let mut m = model.clone();
                m.known_head.params = p.clone();
                loss_with(&m)
            },
            &model.known_head.params,
            EPS,
        )
        .unwrap();
        let e1 = max_relative_error(&grads.backbone, &num_backbone, FLOOR);
        let e2 = max_relative_error(&grads.known_head, &num_known, FLOOR);
        assert!(e1 < TOL && e2 < TOL, "{mode}: backbone {e1:e}, known head {e2:e}");

        if let Some(g) = &grads.reference_head {
            let head = model.reference_head.as_ref().unwrap();
            let num_ref = finite_difference_grad(
                |p| {
                    let mut m = model.clone();
                    m.reference_head.as_mut().unwrap().params = p.clone();
                    loss_with(&m)
                },
                &head.params,
                EPS,
            )
            .unwrap();
            let e3 = max_relative_error(g, &num_ref, FLOOR);
            assert!(e3 < TOL, "{mode}: reference head {e3:e}");
        }
    }
}
