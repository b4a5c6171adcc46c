mod common;

use common::{fd_check_block, normal, rng, spectral_vs_svd};
use flexplore::nn::{
    gumbel_softmax, mlp_forward, spectral_norm, Activation, Matrix, Mlp, MlpSpec, Tape, LEAKY_SLOPE,
};
use proptest::prelude::*;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[test]
fn two_layer_forward_matches_straight_line_evaluation() {
    let mut r = rng(3);
    let spec = MlpSpec::new(3, vec![5], 2, Activation::LeakyReLU);
    let net = Mlp::new("net", spec.clone(), &mut r).unwrap();
    let (w1, b1) = (&net.params.layers[0].weight, &net.params.layers[0].bias);
    let (w2, b2) = (&net.params.layers[1].weight, &net.params.layers[1].bias);
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| 2.0 * normal(&mut r)).collect();
        let mut h = [0.0; 5];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut acc = b1.get(0, j);
            for (i, xi) in x.iter().enumerate() {
                acc += w1.get(j, i) * xi;
            }
            *hj = leaky(acc);
        }
        let got = mlp_forward(&spec, &net.params, &x).unwrap();
        for o in 0..2 {
            let mut acc = b2.get(0, o);
            for (j, hj) in h.iter().enumerate() {
                acc += w2.get(o, j) * hj;
            }
            assert!((got[o] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn random_net_gradients_match_finite_differences() {
    let acts = [Activation::LeakyReLU, Activation::Tanh, Activation::ReLU, Activation::Identity];
    let mut r = rng(21);
    for i in 0..10 {
        let spec = MlpSpec::new(4, vec![6, 5], 3, acts[i % acts.len()]);
        let net = Mlp::new("net", spec.clone(), &mut r).unwrap();
        let x = Matrix::from_vec(7, 4, (0..28).map(|_| normal(&mut r)).collect()).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (out, vars) = net.forward_tape(&mut tape, xv, true).unwrap();
        let sq = tape.square(out);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        let mut block = net.params.clone();
        block.zero_grad();
        block.accumulate_grads(&g, &vars).unwrap();
        let analytic: Vec<f64> = (0..block.num_params()).map(|j| block.grad(j)).collect();
        let stats = fd_check_block(&net.params, &analytic, &mut r, |b| {
            let m = Mlp::from_params(spec.clone(), b.clone()).unwrap();
            m.forward_batch(&x).unwrap().data().iter().map(|v| v * v).sum()
        });
        assert!(stats.passed(), "net {i}: {stats:?}");
    }
}

#[test]
fn squared_norm_gradient_is_analytic() {
    let mut tape = Tape::new();
    let w = tape.leaf(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
    let x = tape.constant(Matrix::row_vector(&[1.0, 0.0]));
    let zero = tape.constant(Matrix::row_vector(&[0.0, 0.0]));
    let y = tape.affine(x, w, zero).unwrap();
    let sq = tape.square(y);
    let loss = tape.sum(sq);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(w).unwrap().data(), &[2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn unused_parameter_has_exactly_zero_gradient() {
    let mut r = rng(4);
    let spec = MlpSpec::new(2, vec![3], 1, Activation::Tanh);
    let net = Mlp::new("net", spec, &mut r).unwrap();
    let mut tape = Tape::new();
    // Input column 1 is always zero, so weights reading it never matter.
    let x = tape.constant(Matrix::from_rows(&[[0.3, 0.0], [-1.2, 0.0]]).unwrap());
    let (out, vars) = net.forward_tape(&mut tape, x, true).unwrap();
    let loss = tape.sum(out);
    let g = tape.backward(loss).unwrap();
    let dw = g.get(vars.layers[0].0).unwrap();
    for j in 0..3 {
        assert_eq!(dw.get(j, 1), 0.0);
        assert_ne!(dw.get(j, 0), 0.0);
    }
}

#[test]
fn spectral_norm_matches_svd() {
    assert!(spectral_vs_svd(100, 200, 3) < 1e-6);
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn spectral_norm_is_between_column_norm_and_frobenius(m in matrix_strategy(), iters in 1usize..30) {
        let est = spectral_norm(&m, iters);
        let max_col = (0..m.cols())
            .map(|c| (0..m.rows()).map(|r| m.get(r, c).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        prop_assert!(est <= m.frobenius_norm() * (1.0 + 1e-12) + 1e-12);
        prop_assert!(est >= max_col * (1.0 - 1e-12) - 1e-12);
        prop_assert!(spectral_norm(&m, iters + 5) >= est * (1.0 - 1e-12) - 1e-12);
    }

    #[test]
    fn gumbel_softmax_stays_on_simplex(
        logits in prop::collection::vec(-30.0f64..30.0, 1..10),
        temp in 0.01f64..10.0,
        seed in any::<u64>(),
    ) {
        let p = gumbel_softmax(&logits, temp, &mut rng(seed)).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }
}
