use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300))
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let i = g.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
    let v = g.constant(Tensor::from_rows(&[[5.0], [7.0]]).unwrap());
    let out = g.matmul(i, v).unwrap();
    assert_eq!(g.value(out).data(), &[5.0, 7.0]);
    assert_eq!(g.shape(out), &[2, 1]);
}

#[test]
fn softmax_of_equal_scores_is_uniform() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
    let y = g.softmax(x);
    for p in g.value(y).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_masked_row_is_one_hot() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![f64::NEG_INFINITY, 0.3, f64::NEG_INFINITY]));
    let y = g.softmax(x);
    assert_eq!(g.value(y).data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn layer_norm_hand_case() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![2.0, 4.0, 6.0]));
    let gain = g.constant(Tensor::vector(vec![1.0; 3]));
    let bias = g.constant(Tensor::vector(vec![0.0; 3]));
    let y = g.layer_norm(x, gain, bias, 0.0).unwrap();
    let s = 1.5f64.sqrt();
    assert!(close(g.value(y).data(), &[-s, 0.0, s], 1e-15) || {
        let d = g.value(y).data();
        (d[0] + s).abs() < 1e-15 && d[1].abs() < 1e-15 && (d[2] - s).abs() < 1e-15
    });
}

#[test]
fn backward_of_mean_square() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![3.0]).requiring_grad());
    let s = g.square(x);
    let l = g.mean(s);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);
}

#[test]
fn backward_of_sin_at_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![0.0]).requiring_grad());
    let l = g.sin(x);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0]);
}

#[test]
fn gradients_accumulate_over_reuse() {
    // loss = mean(x * x + x) = x² + x at a scalar; d/dx = 2x + 1
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.5]).requiring_grad());
    let xx = g.mul(x, x).unwrap();
    let s = g.add(xx, x).unwrap();
    let l = g.mean(s);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0]);
    // every tracked node reachable from the loss carries a gradient
    for v in [xx, s, l] {
        assert!(g.grad(v).is_some());
    }
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0, 2.0]).requiring_grad());
    let y = g.square(x);
    assert!(matches!(g.backward(y), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn disconnected_loss_is_rejected() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let l = g.mean(c);
    assert_eq!(g.backward(l), Err(AutodiffError::DisconnectedGraph));
}

#[test]
fn unknown_primitive_name() {
    assert!(matches!(
        "conv2d".parse::<Primitive>(),
        Err(AutodiffError::UnknownPrimitive(_))
    ));
    for p in Primitive::ALL {
        assert_eq!(p.name().parse::<Primitive>().unwrap(), p);
    }
}

#[test]
fn shape_errors() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    let c = g.constant(Tensor::zeros(vec![4]));
    assert!(matches!(g.matmul(a, b), Err(AutodiffError::ShapeMismatch(_))));
    assert!(matches!(g.add(a, c), Err(AutodiffError::ShapeMismatch(_))));
    assert!(matches!(g.concat(&[a, c], 0), Err(AutodiffError::ShapeMismatch(_))));
    assert!(matches!(g.slice(a, 1, 2, 5), Err(AutodiffError::ShapeMismatch(_))));
    assert!(matches!(
        g.forward_primitive(Primitive::Scale, &[a], &Attrs::default()),
        Err(AutodiffError::MissingAttribute { .. })
    ));
}

/// Straightforward reference evaluation of each primitive, compared with the
/// graph's forward value.
#[test]
fn forward_matches_reference_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
    let b = rand_tensor(&mut rng, &[4, 2], -2.0, 2.0);
    let c = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
    let row = rand_tensor(&mut rng, &[4], -2.0, 2.0);
    let mut g = Graph::new();
    let (va, vb, vc, vr) = (
        g.constant(a.clone()),
        g.constant(b.clone()),
        g.constant(c.clone()),
        g.constant(row.clone()),
    );
    let ad = a.data();
    let at = |r: usize, k: usize| ad[r * 4 + k];

    let mm = g.matmul(va, vb).unwrap();
    let mut expect = vec![0.0; 6];
    for r in 0..3 {
        for j in 0..2 {
            for k in 0..4 {
                expect[r * 2 + j] += at(r, k) * b.data()[k * 2 + j];
            }
        }
    }
    assert!(close(g.value(mm).data(), &expect, 1e-12));

    let sum = g.add(va, vr).unwrap();
    let e: Vec<f64> = (0..12).map(|i| ad[i] + row.data()[i % 4]).collect();
    assert!(close(g.value(sum).data(), &e, 1e-12));

    let diff = g.sub(va, vc).unwrap();
    let e: Vec<f64> = (0..12).map(|i| ad[i] - c.data()[i]).collect();
    assert!(close(g.value(diff).data(), &e, 1e-12));

    let prod = g.mul(va, vc).unwrap();
    let e: Vec<f64> = (0..12).map(|i| ad[i] * c.data()[i]).collect();
    assert!(close(g.value(prod).data(), &e, 1e-12));

    let cat = g.concat(&[va, vc], 1).unwrap();
    assert_eq!(g.shape(cat), &[3, 8]);
    assert_eq!(g.value(cat).row(1)[..4], a.row(1)[..]);
    assert_eq!(g.value(cat).row(1)[4..], c.row(1)[..]);
    let cat0 = g.concat(&[va, vc], 0).unwrap();
    assert_eq!(g.shape(cat0), &[6, 4]);
    assert_eq!(g.value(cat0).row(4), c.row(1));

    let sl = g.slice(va, 1, 1, 3).unwrap();
    assert_eq!(g.value(sl).data(), &[at(0, 1), at(0, 2), at(1, 1), at(1, 2), at(2, 1), at(2, 2)]);

    let tr = g.transpose(va).unwrap();
    assert_eq!(g.shape(tr), &[4, 3]);
    assert_eq!(g.value(tr).at(3, 1), at(1, 3));

    type Unary = fn(&mut Graph, Var) -> Var;
    let cases: [(Unary, fn(f64) -> f64); 6] = [
        (Graph::sin, f64::sin),
        (Graph::tanh, f64::tanh),
        (Graph::sigmoid, |z| 1.0 / (1.0 + (-z).exp())),
        (Graph::relu, |z| if z > 0.0 { z } else { 0.0 }),
        (Graph::exp, f64::exp),
        (Graph::square, |z| z * z),
    ];
    for (op, reference) in cases {
        let out = op(&mut g, va);
        let e: Vec<f64> = ad.iter().map(|&z| reference(z)).collect();
        assert!(close(g.value(out).data(), &e, 1e-12));
    }

    let sm = g.softmax(va);
    for r in 0..3 {
        let z: f64 = (0..4).map(|k| at(r, k).exp()).sum();
        let e: Vec<f64> = (0..4).map(|k| at(r, k).exp() / z).collect();
        assert!(close(g.value(sm).row(r), &e, 1e-12));
    }

    let gain = g.constant(row.clone());
    let bias = g.constant(Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]));
    let ln = g.layer_norm(va, gain, bias, 1e-5).unwrap();
    for r in 0..3 {
        let mu = (0..4).map(|k| at(r, k)).sum::<f64>() / 4.0;
        let var = (0..4).map(|k| (at(r, k) - mu).powi(2)).sum::<f64>() / 4.0;
        let e: Vec<f64> = (0..4)
            .map(|k| (at(r, k) - mu) / (var + 1e-5).sqrt() * row.data()[k] + [0.1, -0.2, 0.3, 0.0][k])
            .collect();
        assert!(close(g.value(ln).row(r), &e, 1e-12));
    }

    let m = g.mean(va);
    assert!(close(g.value(m).data(), &[ad.iter().sum::<f64>() / 12.0], 1e-12));
    let sc = g.scale(va, -2.5);
    let e: Vec<f64> = ad.iter().map(|z| z * -2.5).collect();
    assert!(close(g.value(sc).data(), &e, 1e-12));
}

/// Sum of products with a fixed random weight tensor turns any output into a
/// scalar whose gradient exercises every output element.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(y).to_vec();
    let w = g.constant(rand_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = g.mul(y, w)?;
    Ok(g.mean(p))
}

#[test]
fn every_primitive_passes_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let tol = 1e-4;
    for prim in Primitive::ALL {
        let (inputs, attrs): (Vec<Tensor>, Attrs) = match prim {
            Primitive::MatMul => (
                vec![rand_tensor(&mut rng, &[3, 4], -1.0, 1.0), rand_tensor(&mut rng, &[4, 2], -1.0, 1.0)],
                Attrs::default(),
            ),
            Primitive::Add | Primitive::Sub | Primitive::Mul => (
                vec![rand_tensor(&mut rng, &[3, 4], -1.0, 1.0), rand_tensor(&mut rng, &[4], -1.0, 1.0)],
                Attrs::default(),
            ),
            Primitive::Concat => (
                vec![rand_tensor(&mut rng, &[2, 3], -1.0, 1.0), rand_tensor(&mut rng, &[2, 2], -1.0, 1.0)],
                Attrs::axis(1),
            ),
            Primitive::Slice => (vec![rand_tensor(&mut rng, &[4, 5], -1.0, 1.0)], Attrs::slice(1, 1, 4)),
            Primitive::Scale => (vec![rand_tensor(&mut rng, &[3, 3], -1.0, 1.0)], Attrs::scale(0.7)),
            Primitive::LayerNorm => (
                vec![
                    rand_tensor(&mut rng, &[3, 5], -2.0, 2.0),
                    rand_tensor(&mut rng, &[5], 0.5, 1.5),
                    rand_tensor(&mut rng, &[5], -0.5, 0.5),
                ],
                Attrs::eps(1e-5),
            ),
            Primitive::Dropout => (vec![rand_tensor(&mut rng, &[3, 3], -1.0, 1.0)], Attrs::rate(0.3)),
            Primitive::Relu => {
                // keep clear of the kink at zero
                let t = rand_tensor(&mut rng, &[3, 4], 0.05, 1.0);
                let signs: Vec<f64> = t
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| if i % 2 == 0 { *x } else { -x })
                    .collect();
                (vec![Tensor::new(vec![3, 4], signs).unwrap()], Attrs::default())
            }
            _ => (vec![rand_tensor(&mut rng, &[3, 4], -1.5, 1.5)], Attrs::default()),
        };
        let err = grad_check(
            |g, vars| {
                let y = g.forward_primitive(prim, vars, &attrs)?;
                weighted_sum(g, y, 99)
            },
            &inputs,
            h,
        )
        .unwrap();
        assert!(err < tol, "{prim}: relative error {err}");
    }
}

#[test]
fn grad_check_on_quadratic_and_constant() {
    let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
    let err = grad_check(
        |g, v| {
            let s = g.square(v[0]);
            Ok(g.mean(s))
        },
        &[x.clone()],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let err = grad_check(
        |g, _| Ok(g.constant(Tensor::scalar(4.0))),
        &[x],
        1e-5,
    )
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn dropout_eval_is_identity() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let y = g.dropout(x, 0.5).unwrap();
    assert_eq!(x, y);
}

#[test]
fn dropout_keeps_expected_fraction() {
    let n = 100_000;
    let p = 0.3;
    let mut g = Graph::training(2024);
    let x = g.constant(Tensor::vector(vec![1.0; n]));
    let y = g.dropout(x, p).unwrap();
    let out = g.value(y).data();
    let kept = out.iter().filter(|v| **v != 0.0).count() as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((kept - n as f64 * (1.0 - p)).abs() < 3.0 * sigma, "kept {kept}");
    for v in out.iter().filter(|v| **v != 0.0) {
        assert!((v - 1.0 / (1.0 - p)).abs() < 1e-15);
    }
}

#[test]
fn backward_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::training(17);
        let a = g.leaf(rand_tensor(&mut rng, &[5, 6], -1.0, 1.0).requiring_grad());
        let b = g.leaf(rand_tensor(&mut rng, &[6, 3], -1.0, 1.0).requiring_grad());
        let m = g.matmul(a, b).unwrap();
        let d = g.dropout(m, 0.2).unwrap();
        let t = g.tanh(d);
        let s = g.softmax(t);
        let q = g.square(s);
        let l = g.mean(q);
        g.backward(l).unwrap();
        (g.grad(a).unwrap().to_vec(), g.grad(b).unwrap().to_vec())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert_eq!(a1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), a2.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(b1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b2.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn shape_invariant_holds(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rand_tensor(&mut rng, &[rows, cols], -1.0, 1.0);
        let mut g = Graph::new();
        let v = g.constant(t);
        let tr = g.transpose(v).unwrap();
        let back = g.transpose(tr).unwrap();
        prop_assert_eq!(g.value(back).data(), g.value(v).data());
        let n: usize = g.shape(tr).iter().product();
        prop_assert_eq!(n, g.value(tr).numel());
    }

    #[test]
    fn slice_then_concat_restores(rows in 1usize..5, cols in 2usize..7, cut in 1usize..6) {
        let cut = cut.min(cols - 1);
        let mut rng = ChaCha8Rng::seed_from_u64((rows * 31 + cols) as u64);
        let t = rand_tensor(&mut rng, &[rows, cols], -1.0, 1.0);
        let mut g = Graph::new();
        let v = g.constant(t);
        let l = g.slice(v, 1, 0, cut).unwrap();
        let r = g.slice(v, 1, cut, cols).unwrap();
        let c = g.concat(&[l, r], 1).unwrap();
        prop_assert_eq!(g.value(c).data(), g.value(v).data());
    }
}
