use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radcal_core::diff::{grad_check, DiffError, Tape, Tensor, Var};
use radcal_core::geometry::euler_to_matrix;
use radcal_core::model::{encode_on_tape, forward_on_tape, init_weights, Encoding};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

#[test]
fn product_rule() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(2.0));
    let y = t.leaf(Tensor::scalar(3.0));
    let z = t.mul(x, y);
    t.backward(z).unwrap();
    assert_eq!(t.grad(x).unwrap().item(), 3.0);
    assert_eq!(t.grad(y).unwrap().item(), 2.0);
}

#[test]
fn abs_subgradients() {
    for (x0, g) in [(-1.5, -1.0), (0.0, 0.0), (2.0, 1.0)] {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(x0));
        let y = t.abs(x);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), g, "x = {x0}");
    }
}

#[test]
fn hinge_is_quiet_at_the_boundary() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(0.3));
    let y = t.max_const(x, 0.3);
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap().item(), 0.0);
}

#[test]
fn backward_accumulates_until_reset() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(1.5));
    let y = t.mul(x, x);
    t.backward(y).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap().item(), 6.0);
    t.zero_grad();
    assert!(t.grad(x).is_none());
    assert_eq!(t.grad_or_zeros(x).item(), 0.0);
}

#[test]
fn non_scalar_loss_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::row(&[1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(DiffError::InvalidArgument(_))));
}

#[test]
fn poison_names_the_primitive() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(-1.0));
    let y = t.sqrt(x);
    assert_eq!(t.poisoned(), Some("sqrt"));
    assert_eq!(t.backward(y), Err(DiffError::Poisoned { op: "sqrt" }));
}

#[test]
fn recorded_values_equal_plain_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, 4, 3, -2.0, 2.0);
    let b = random(&mut rng, 3, 5, -2.0, 2.0);
    let mut t = Tape::new();
    let va = t.leaf(a.clone());
    let vb = t.leaf(b.clone());
    let m = t.matmul(va, vb);
    assert_eq!(t.value(m), &a.matmul(&b));
    let s = t.sin(va);
    assert!(t.value(s).data().iter().zip(a.data()).all(|(y, x)| y.to_bits() == libm::sin(*x).to_bits()));
    let q = t.atan2(va, va);
    assert!(t.value(q).data().iter().zip(a.data()).all(|(y, x)| y.to_bits() == libm::atan2(*x, *x).to_bits()));
}

#[test]
fn sum_of_squares_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = [random(&mut rng, 3, 4, -3.0, 3.0)];
    let r = grad_check(
        |t: &mut Tape, v: &[Var]| {
            let sq = t.mul(v[0], v[0]);
            t.sum(sq)
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(r.max_relative_error < 1e-8, "{}", r.max_relative_error);
}

/// Every primitive used by the losses, chained into one scalar, away from
/// kinks so central differences are valid.
#[test]
fn primitive_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let maps: Arc<[[[f64; 3]; 3]]> = (0..4).map(|k| euler_to_matrix(&[10.0 * k as f64, 20.0, -5.0])).collect();
    let point = [
        random(&mut rng, 4, 3, 0.5, 1.5),
        random(&mut rng, 3, 3, -1.0, 1.0),
        random(&mut rng, 1, 3, 0.2, 0.8),
    ];
    let f = |t: &mut Tape, v: &[Var]| {
        let (x, w, b) = (v[0], v[1], v[2]);
        let h = t.affine(x, w, b, false);
        let h = t.add(h, x);
        let s = t.sin(h);
        let c = t.cos(x);
        let p = t.mul(s, c);
        let d = t.div(p, x);
        let rl = t.row_linear(d, maps.clone());
        let n = t.row_norm(rl);
        let sq = t.sqrt(n);
        let y = t.column(x, 1);
        let z = t.column(x, 0);
        let a = t.atan2(y, z);
        let k = t.skew(b);
        let kk = t.matmul(k, w);
        let kt = t.transpose(kk);
        let ks = t.sum_cols(kt);
        let e = t.positional_encoding(b, 2, true);
        let e = t.sum(e);
        let cat = t.hcat(&[sq, a]);
        let cat = t.scale(cat, 0.7);
        let cat = t.offset(cat, 0.1);
        let ng = t.neg(cat);
        let ab = t.abs(ng);
        let hinge = t.max_const(ab, 0.05);
        let m = t.mean(hinge);
        let ks = t.sum(ks);
        let rest = t.add(ks, e);
        let total = t.sub(m, rest);
        let nonlin = t.relu(total);
        let lin = t.mul(total, total);
        t.add(nonlin, lin)
    };
    let r = grad_check(f, &point, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-6, "{} at {:?}", r.max_relative_error, r.worst);
}

#[test]
fn encoded_mlp_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let enc = Encoding::sinusoidal(6).unwrap();
    let weights = init_weights(11, enc);
    let positions = random(&mut rng, 3, 3, -0.3, 0.3);
    let mut raw = random(&mut rng, 3, 3, -1.0, 1.0);
    for r in 0..3 {
        let n = raw.row_slice(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in 0..3 {
            raw.set(r, c, raw.get(r, c) / n);
        }
    }
    let mut point = vec![positions, raw];
    point.extend(weights.tensors().into_iter().cloned());
    let f = |t: &mut Tape, v: &[Var]| {
        let vars = radcal_core::model::MlpVars {
            encoding: enc,
            layers: v[2..].chunks(2).map(|p| (p[0], p[1])).collect(),
        };
        let features = encode_on_tape(t, v[0], v[1], &enc);
        let out = forward_on_tape(t, &vars, features);
        let sq = t.mul(out, out);
        t.sum(sq)
    };
    let r = grad_check(f, &point, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{} at {:?}", r.max_relative_error, r.worst);
}

#[test]
fn gradients_are_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = random(&mut rng, 2, 3, -1.0, 1.0);
    let build = |t: &mut Tape, x: Var| {
        let f = t.sin(x);
        let f = t.sum(f);
        let g = t.row_norm(x);
        let g = t.sum(g);
        (f, g)
    };
    let grad_of = |a: f64, b: f64| {
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let (f, g) = build(&mut t, x);
        let fa = t.scale(f, a);
        let gb = t.scale(g, b);
        let l = t.add(fa, gb);
        t.backward(l).unwrap();
        t.grad(x).unwrap().clone()
    };
    let (a, b) = (2.0, -0.5);
    let combined = grad_of(a, b);
    let gf = grad_of(1.0, 0.0);
    let gg = grad_of(0.0, 1.0);
    for k in 0..combined.len() {
        let expect = a * gf.data()[k] + b * gg.data()[k];
        assert!((combined.data()[k] - expect).abs() <= 1e-15 * expect.abs().max(1.0));
    }
}

#[test]
fn determinism() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random(&mut rng, 16, 16, -1.0, 1.0);
        let x = random(&mut rng, 8, 16, -1.0, 1.0);
        let mut t = Tape::new();
        let vw = t.leaf(w);
        let vx = t.leaf(x);
        let h = t.matmul(vx, vw);
        let h = t.relu(h);
        let l = t.mean(h);
        t.backward(l).unwrap();
        (t.value(l).item().to_bits(), t.grad(vw).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn frozen_branches_continue_the_base_piece() {
    let record = |t: &mut Tape, x0: f64| {
        let x = t.leaf(Tensor::row(&[x0, -x0]));
        let r = t.relu(x);
        let a = t.abs(x);
        let m = t.max_const(x, 0.5);
        let s = t.add(r, a);
        let s = t.add(s, m);
        t.sum(s)
    };
    let mut base = Tape::new();
    let out = record(&mut base, 1.0);
    assert_eq!(base.value(out).item(), 1.0 + 2.0 + 1.5);
    let pattern = base.branch_pattern();
    assert_eq!(pattern, vec![1, -1, 1, -1, 1, -1]);
    // Same pattern replayed: identical value.
    let mut same = Tape::with_frozen_branches(pattern.clone());
    let v = record(&mut same, 1.0);
    assert_eq!(same.value(v).item(), base.value(out).item());
    // Across every kink: x = -1 evaluated on the x = 1 piece is linear.
    let mut frozen = Tape::with_frozen_branches(pattern);
    let v = record(&mut frozen, -1.0);
    // relu: [-1, 0]; abs: [x, -x] = [-1, -1]; max: [x, c] = [-1, 0.5]
    assert_eq!(frozen.value(v).item(), -1.0 - 2.0 - 0.5);
}

#[test]
fn grad_check_reports_kink_crossings() {
    let point = [Tensor::row(&[2e-6, -0.7])];
    let r = grad_check(
        |t: &mut Tape, v: &[Var]| {
            let a = t.abs(v[0]);
            t.sum(a)
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert_eq!(r.kinked, 1);
    assert!(r.max_relative_error < 1e-9);
}
