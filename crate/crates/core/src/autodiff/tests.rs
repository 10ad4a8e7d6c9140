use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central finite difference of `f` with respect to element `k` of `x`.
fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

#[test]
fn product_rule() {
    let mut tape = Tape::new();
    let x = tape.scalar(2.0);
    let y = tape.scalar(3.0);
    let f = tape.mul(x, y).unwrap();
    let g = tape.grad(f, &[x, y]).unwrap();
    assert_eq!(g[0].item(), 3.0);
    assert_eq!(g[1].item(), 2.0);
}

#[test]
fn tanh_slope_at_origin() {
    let mut tape = Tape::new();
    let x = tape.scalar(0.0);
    let f = tape.tanh(x).unwrap();
    assert_eq!(tape.grad(f, &[x]).unwrap()[0].item(), 1.0);
}

#[test]
fn square_second_derivative() {
    let mut tape = Tape::new();
    let x = tape.scalar(1.7);
    let f = tape.mul(x, x).unwrap();
    let df = tape.grad_as_expression(f, x).unwrap();
    assert_eq!(tape.scalar_value(df), 3.4);
    let d2f = tape.grad(df, &[x]).unwrap();
    assert_eq!(d2f[0].item(), 2.0);
}

#[test]
fn linear_model_expression_gradient() {
    let mut tape = Tape::new();
    let w = tape.scalar(0.7);
    let x = tape.scalar(-1.3);
    let f = tape.mul(w, x).unwrap();
    let df_dx = tape.grad_as_expression(f, x).unwrap();
    assert_eq!(tape.scalar_value(df_dx), 0.7);
    assert_eq!(tape.grad(df_dx, &[w]).unwrap()[0].item(), 1.0);
}

#[test]
fn grad_rejects_non_scalar_and_foreign_vars() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(tape.grad(v, &[v]), Err(crate::Error::NonScalarOutput { .. })));

    let mut other = Tape::new();
    let z = other.scalar(1.0);
    assert!(matches!(tape.grad(z, &[v]), Err(crate::Error::ForeignVar)));
    assert!(matches!(tape.add(v, z), Err(crate::Error::ForeignVar)));
}

#[test]
fn reciprocal_of_zero_is_a_domain_error() {
    let mut tape = Tape::new();
    let z = tape.scalar(0.0);
    assert!(matches!(tape.recip(z), Err(crate::Error::Domain { op: "reciprocal" })));
}

#[test]
fn relu_kink_has_zero_derivative() {
    let mut tape = Tape::new();
    let x = tape.scalar(0.0);
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.grad(r, &[x]).unwrap()[0].item(), 0.0);
}

#[test]
fn unrelated_input_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.scalar(1.0);
    let w = tape.leaf(Tensor::zeros(2, 3));
    let f = tape.tanh(x).unwrap();
    let g = tape.grad(f, &[w]).unwrap();
    assert_eq!(g[0], Tensor::zeros(2, 3));
    let e = tape.grad_as_expression(f, w).unwrap();
    assert_eq!(tape.value(e), &Tensor::zeros(2, 3));
}

/// Builds `sum(sigmoid(W2 tanh(W1 x + b1) + b2))` with parameters taken from a
/// flat vector, returning the output and the parameter vars.
fn two_layer(tape: &mut Tape, params: &[f64], x: &[f64], hidden: usize) -> (Var, Vec<Var>) {
    let n = x.len();
    let mut it = params.iter().copied();
    let mut take = |r: usize, c: usize| Tensor::new(r, c, it.by_ref().take(r * c).collect());
    let w1 = tape.leaf(take(hidden, n));
    let b1 = tape.leaf(take(hidden, 1));
    let w2 = tape.leaf(take(2, hidden));
    let b2 = tape.leaf(take(2, 1));
    let xv = tape.leaf(Tensor::vector(x.to_vec()));
    let z1 = tape.matvec(w1, xv).unwrap();
    let z1 = tape.add(z1, b1).unwrap();
    let h = tape.tanh(z1).unwrap();
    let z2 = tape.matvec(w2, h).unwrap();
    let z2 = tape.add(z2, b2).unwrap();
    let o = tape.sigmoid(z2).unwrap();
    let out = tape.sum(o).unwrap();
    (out, vec![w1, b1, w2, b2, xv])
}

#[test]
fn two_layer_network_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hidden = 5;
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n_params = hidden * 3 + hidden + 2 * hidden + 2;
    let params: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut tape = Tape::new();
    let (out, vars) = two_layer(&mut tape, &params, &x, hidden);
    let grads = tape.grad(out, &vars[..4]).unwrap();
    let flat: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();

    let f = |p: &[f64]| {
        let mut t = Tape::new();
        let (o, _) = two_layer(&mut t, p, &x, hidden);
        t.scalar_value(o)
    };
    for k in 0..n_params {
        let fd = central_diff(&f, &params, k, 1e-5);
        assert!(rel_err(flat[k], fd) < 1e-6, "param {k}: {} vs {fd}", flat[k]);
    }
}

#[test]
fn penalized_input_gradient_matches_finite_differences() {
    // Loss = mean(relu(-d out / d x)) + out, differentiated w.r.t. W1.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hidden = 4;
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n_params = hidden * 3 + hidden + 2 * hidden + 2;
    let params: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.5..1.5)).collect();

    let loss = |tape: &mut Tape, p: &[f64]| {
        let (out, vars) = two_layer(tape, p, &x, hidden);
        let dx = tape.grad_as_expression(out, vars[4]).unwrap();
        let neg = tape.neg(dx).unwrap();
        let pen = tape.relu(neg).unwrap();
        let pen = tape.mean(pen).unwrap();
        let total = tape.add(pen, out).unwrap();
        (total, vars, pen)
    };
    let mut tape = Tape::new();
    let (total, vars, pen) = loss(&mut tape, &params);
    // The penalty must be active for the check to mean anything.
    assert!(tape.scalar_value(pen) > 0.0);
    let grads = tape.grad(total, &vars[..4]).unwrap();
    let flat: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();

    let f = |p: &[f64]| {
        let mut t = Tape::new();
        let (o, _, _) = loss(&mut t, p);
        t.scalar_value(o)
    };
    for k in 0..n_params {
        let fd = central_diff(&f, &params, k, 1e-5);
        assert!(rel_err(flat[k], fd) < 1e-4 || (flat[k] - fd).abs() < 1e-9, "param {k}: {} vs {fd}", flat[k]);
    }
}

#[test]
fn expression_value_equals_numeric_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hidden = 6;
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n_params = hidden * 3 + hidden + 2 * hidden + 2;
    let params: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut tape = Tape::new();
    let (out, vars) = two_layer(&mut tape, &params, &x, hidden);
    let numeric = tape.grad(out, &[vars[4], vars[0]]).unwrap();
    let dx = tape.grad_as_expression(out, vars[4]).unwrap();
    let dw = tape.grad_as_expression(out, vars[0]).unwrap();
    for (a, b) in tape.value(dx).data().iter().zip(numeric[0].data()) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }
    for (a, b) in tape.value(dw).data().iter().zip(numeric[1].data()) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }
}

#[test]
fn replay_reproduces_values() {
    let params: Vec<f64> = (0..26).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = [0.3, -0.2, 0.9];
    let mut tape = Tape::new();
    let (out, vars) = two_layer(&mut tape, &params, &x, 4);
    let before = tape.scalar_value(out);
    tape.set_leaf(vars[4], Tensor::vector(vec![0.0, 0.0, 0.0])).unwrap();
    tape.replay().unwrap();
    assert_ne!(tape.scalar_value(out), before);
    tape.set_leaf(vars[4], Tensor::vector(x.to_vec())).unwrap();
    tape.replay().unwrap();
    assert_eq!(tape.scalar_value(out), before);
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Recip,
    Neg,
}

fn apply_unary(tape: &mut Tape, op: Unary, x: Var) -> Var {
    match op {
        Unary::Tanh => tape.tanh(x),
        Unary::Sigmoid => tape.sigmoid(x),
        Unary::Relu => tape.relu(x),
        Unary::Recip => tape.recip(x),
        Unary::Neg => tape.neg(x),
    }
    .unwrap()
}

proptest! {
    #[test]
    fn unary_partials_match_finite_differences(
        x in prop_oneof![-3.0f64..-0.05, 0.05f64..3.0],
        op in prop_oneof![
            Just(Unary::Tanh), Just(Unary::Sigmoid), Just(Unary::Relu), Just(Unary::Recip), Just(Unary::Neg)
        ],
    ) {
        let mut tape = Tape::new();
        let xv = tape.scalar(x);
        let y = apply_unary(&mut tape, op, xv);
        let g = tape.grad(y, &[xv]).unwrap()[0].item();
        let f = |p: &[f64]| {
            let mut t = Tape::new();
            let v = t.scalar(p[0]);
            let y = apply_unary(&mut t, op, v);
            t.scalar_value(y)
        };
        let fd = central_diff(&f, &[x], 0, 1e-6);
        prop_assert!(rel_err(g, fd) < 1e-6 || (g - fd).abs() < 1e-10, "{op:?} at {x}: {g} vs {fd}");
    }

    #[test]
    fn binary_partials_match_finite_differences(
        a in -2.0f64..2.0, b in -2.0f64..2.0, which in 0usize..4,
    ) {
        prop_assume!((a - b).abs() > 1e-3);
        let build = |t: &mut Tape, a: f64, b: f64| {
            let (x, y) = (t.scalar(a), t.scalar(b));
            let out = match which {
                0 => t.add(x, y),
                1 => t.sub(x, y),
                2 => t.mul(x, y),
                _ => t.max(x, y),
            }.unwrap();
            (out, x, y)
        };
        let mut tape = Tape::new();
        let (out, x, y) = build(&mut tape, a, b);
        let g = tape.grad(out, &[x, y]).unwrap();
        let f = |p: &[f64]| { let mut t = Tape::new(); let (o, _, _) = build(&mut t, p[0], p[1]); t.scalar_value(o) };
        for k in 0..2 {
            let fd = central_diff(&f, &[a, b], k, 1e-6);
            prop_assert!((g[k].item() - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p1: Vec<f64> = (0..26).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p2: Vec<f64> = (0..26).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let (f, vf) = two_layer(&mut tape, &p1, &x, 4);
        let (g, vg) = two_layer(&mut tape, &p2, &x, 4);
        // Tie both networks to the same input leaf via a shared sum.
        let af = tape.scale(f, alpha).unwrap();
        let bg = tape.scale(g, beta).unwrap();
        let h = tape.add(af, bg).unwrap();
        let gh = tape.grad(h, &[vf[0], vg[0]]).unwrap();
        let gf = tape.grad(f, &[vf[0]]).unwrap();
        let gg = tape.grad(g, &[vg[0]]).unwrap();
        for (l, r) in gh[0].data().iter().zip(gf[0].data()) {
            prop_assert!((l - alpha * r).abs() < 1e-12);
        }
        for (l, r) in gh[1].data().iter().zip(gg[0].data()) {
            prop_assert!((l - beta * r).abs() < 1e-12);
        }
    }
}
