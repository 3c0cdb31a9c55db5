//! Tape correctness: value oracles, finite-difference gradient checks for
//! every primitive, broadcasting rules, and error paths.

use std::rc::Rc;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use choir_core::error::Error;
use choir_core::rng::stream;
use choir_core::{Tape, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

fn randn(n: usize, label: &str) -> Vec<f64> {
    let mut rng = stream(label, &[17]);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random values bounded away from zero (for relu kinks / divisors).
fn randn_off_zero(n: usize, label: &str, min_mag: f64) -> Vec<f64> {
    let mut rng = stream(label, &[29]);
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(min_mag..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Reduce an arbitrary-shaped value to a scalar with fixed random weights
/// so every output coordinate contributes to the loss.
fn weighted(tape: &mut Tape<f64>, v: Var, label: &str) -> Var {
    let n = tape.value(v).len();
    let shape = tape.shape(v).to_vec();
    let w = tape.leaf(shape, randn(n, label), false).unwrap();
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p).unwrap()
}

fn eval(x: &[f64], shape: &[usize], build: &dyn Fn(&mut Tape<f64>, Var) -> Var) -> f64 {
    let mut tape = Tape::new();
    let v = tape.leaf(shape.to_vec(), x.to_vec(), false).unwrap();
    let loss = build(&mut tape, v);
    tape.scalar_value(loss)
}

/// Central-difference check of d(loss)/d(x) for a builder closure.
fn fd_check(x0: &[f64], shape: &[usize], build: &dyn Fn(&mut Tape<f64>, Var) -> Var) {
    let mut tape = Tape::new();
    let x = tape.leaf(shape.to_vec(), x0.to_vec(), true).unwrap();
    let loss = build(&mut tape, x);
    tape.backward(loss).unwrap();
    let g = tape.grad(x).expect("input gradient").to_vec();
    let eps = 1e-6;
    for i in 0..x0.len() {
        let mut xp = x0.to_vec();
        xp[i] += eps;
        let mut xm = x0.to_vec();
        xm[i] -= eps;
        let fd = (eval(&xp, shape, build) - eval(&xm, shape, build)) / (2.0 * eps);
        let denom = g[i].abs().max(fd.abs()).max(1e-6);
        assert!(
            ((g[i] - fd) / denom).abs() < 1e-5,
            "coordinate {i}: analytic {} vs finite-difference {fd}",
            g[i]
        );
    }
}

// ---- value oracles ----

#[test]
fn matmul_matches_hand_computed_product() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], false)
        .unwrap();
    let b = tape
        .leaf(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0], false)
        .unwrap();
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.shape(c), &[2, 2]);
    assert_eq!(tape.value(c), &[58.0, 64.0, 139.0, 154.0]);
}

#[test]
fn matmul_times_adjugate_inverse_is_identity() {
    // Independent inverse via the adjugate formula.
    let a = [[2.0, -1.0, 0.5], [0.3, 1.7, -0.2], [-0.4, 0.9, 2.2]];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            // Cyclic cofactor form absorbs the (-1)^(i+j) sign.
            inv[j][i] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    let mut tape = Tape::<f64>::new();
    let av = tape
        .leaf(vec![3, 3], a.concat().to_vec(), false)
        .unwrap();
    let iv = tape
        .leaf(vec![3, 3], inv.concat().to_vec(), false)
        .unwrap();
    let prod = tape.matmul(av, iv).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(tape.value(prod)[i * 3 + j], expect, epsilon = 1e-12);
        }
    }
}

#[test]
fn matmul_broadcasts_batch_dimensions() {
    // [2,2,3] x [3,2] -> [2,2,2]; batch entry checked against the
    // unbatched product.
    let a = randn(12, "bmm-a");
    let b = randn(6, "bmm-b");
    let mut tape = Tape::<f64>::new();
    let av = tape.leaf(vec![2, 2, 3], a.clone(), false).unwrap();
    let bv = tape.leaf(vec![3, 2], b.clone(), false).unwrap();
    let c = tape.matmul(av, bv).unwrap();
    assert_eq!(tape.shape(c), &[2, 2, 2]);
    for batch in 0..2 {
        let a1 = tape
            .leaf(vec![2, 3], a[batch * 6..(batch + 1) * 6].to_vec(), false)
            .unwrap();
        let b1 = tape.leaf(vec![3, 2], b.clone(), false).unwrap();
        let c1 = tape.matmul(a1, b1).unwrap();
        let got = &tape.value(c)[batch * 4..(batch + 1) * 4];
        for (x, y) in got.iter().zip(tape.value(c1)) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }
}

#[test]
fn broadcast_add_stretches_both_operands() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2, 1], vec![1.0, 2.0], false).unwrap();
    let b = tape.leaf(vec![3], vec![10.0, 20.0, 30.0], false).unwrap();
    let c = tape.add(a, b).unwrap();
    assert_eq!(tape.shape(c), &[2, 3]);
    assert_eq!(tape.value(c), &[11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
}

#[test]
fn reductions_match_hand_computed_values() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![2, 3], vec![1.0, 5.0, 2.0, -1.0, 0.0, 4.0], false)
        .unwrap();
    let s0 = tape.sum(a, 0).unwrap();
    assert_eq!(tape.value(s0), &[0.0, 5.0, 6.0]);
    let m1 = tape.mean(a, 1).unwrap();
    assert_relative_eq!(tape.value(m1)[0], 8.0 / 3.0);
    assert_relative_eq!(tape.value(m1)[1], 1.0);
    let x1 = tape.max(a, 1).unwrap();
    assert_eq!(tape.value(x1), &[5.0, 4.0]);
    let total = tape.sum_all(a).unwrap();
    assert_relative_eq!(tape.scalar_value(total), 11.0);
}

#[test]
fn max_tie_routes_gradient_to_lowest_index() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![4], vec![2.0, 7.0, 7.0, 1.0], true)
        .unwrap();
    let m = tape.max(a, 0).unwrap();
    let loss = tape.sum_all(m).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn softmax_of_known_logits() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![2, 2], vec![0.0, 1.0, 3.0, 3.0], false)
        .unwrap();
    let s = tape.softmax(a, 1).unwrap();
    let e = 1.0 / (1.0 + (1.0f64).exp());
    assert_relative_eq!(tape.value(s)[0], e, epsilon = 1e-12);
    assert_relative_eq!(tape.value(s)[1], 1.0 - e, epsilon = 1e-12);
    assert_relative_eq!(tape.value(s)[2], 0.5, epsilon = 1e-12);
    assert_relative_eq!(tape.value(s)[3], 0.5, epsilon = 1e-12);
}

#[test]
fn cross3_matches_basis_identities() {
    let mut tape = Tape::<f64>::new();
    let x = tape
        .leaf(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], false)
        .unwrap();
    let y = tape
        .leaf(vec![2, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0], false)
        .unwrap();
    let z = tape.cross3(x, y).unwrap();
    // e1 x e2 = e3, e2 x e3 = e1.
    assert_eq!(tape.value(z), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn gather_and_slice_and_swap_produce_expected_layouts() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], false)
        .unwrap();
    let g = tape.gather_rows(a, Rc::new(vec![2, 0, 2])).unwrap();
    assert_eq!(tape.value(g), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    let s = tape.slice(a, 0, 1, 2).unwrap();
    assert_eq!(tape.value(s), &[3.0, 4.0, 5.0, 6.0]);
    let t = tape.swap_axes(a, 0, 1).unwrap();
    assert_eq!(tape.shape(t), &[2, 3]);
    assert_eq!(tape.value(t), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    let c = tape.concat(a, a, 1).unwrap();
    assert_eq!(tape.shape(c), &[3, 4]);
    assert_eq!(tape.value(c)[..4], [1.0, 2.0, 1.0, 2.0]);
}

#[test]
fn neighbor_mean_averages_indexed_rows() {
    let mut tape = Tape::<f64>::new();
    let a = tape
        .leaf(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], false)
        .unwrap();
    let nm = tape
        .neighbor_mean(a, Rc::new(vec![1, 2, 0, 0, 1, 1]), 2)
        .unwrap();
    assert_eq!(tape.value(nm), &[4.0, 5.0, 1.0, 2.0, 3.0, 4.0]);
}

// ---- finite-difference gradient checks ----

#[test]
fn grad_elementwise_binary_ops() {
    let a = randn(6, "bin-a");
    let b = randn_off_zero(3, "bin-b", 0.3);
    for op in ["add", "sub", "mul", "div"] {
        let b = b.clone();
        let apply = move |t: &mut Tape<f64>, x: Var, y: Var| match op {
            "add" => t.add(x, y).unwrap(),
            "sub" => t.sub(x, y).unwrap(),
            "mul" => t.mul(x, y).unwrap(),
            _ => t.div(x, y).unwrap(),
        };
        // Gradient with respect to the left (broadcast [2,3] op [3]).
        fd_check(&a, &[2, 3], &|t, x| {
            let y = t.leaf(vec![3], b.clone(), false).unwrap();
            let o = apply(t, x, y);
            weighted(t, o, "w-bin-left")
        });
        // Gradient with respect to the right (the broadcast operand).
        let a = a.clone();
        if op != "div" {
            fd_check(&b, &[3], &|t, y| {
                let x = t.leaf(vec![2, 3], a.clone(), false).unwrap();
                let o = apply(t, x, y);
                weighted(t, o, "w-bin-right")
            });
        } else {
            // Keep the divisor away from zero during bumping.
            fd_check(&b, &[3], &|t, y| {
                let x = t.leaf(vec![2, 3], a.clone(), false).unwrap();
                let o = t.div(x, y).unwrap();
                weighted(t, o, "w-bin-right")
            });
        }
    }
}

#[test]
fn grad_unary_ops() {
    let a = randn_off_zero(8, "un-a", 0.05);
    fd_check(&a, &[2, 4], &|t, x| {
        let o = t.neg(x);
        weighted(t, o, "w-neg")
    });
    fd_check(&a, &[2, 4], &|t, x| {
        let o = t.relu(x);
        weighted(t, o, "w-relu")
    });
    fd_check(&a, &[2, 4], &|t, x| {
        let o = t.scale(x, -1.7);
        weighted(t, o, "w-scale")
    });
    fd_check(&a, &[2, 4], &|t, x| {
        let o = t.add_scalar(x, 0.9);
        weighted(t, o, "w-addc")
    });
    let pos: Vec<f64> = a.iter().map(|v| v.abs() + 0.5).collect();
    fd_check(&pos, &[2, 4], &|t, x| {
        let o = t.sqrt(x).unwrap();
        weighted(t, o, "w-sqrt")
    });
}

#[test]
fn grad_matmul_both_sides_with_batching() {
    let a = randn(12, "mm-a");
    let b = randn(8, "mm-b");
    fd_check(&a, &[2, 2, 3], &|t, x| {
        let y = t.leaf(vec![3, 4], randn(12, "mm-c"), false).unwrap();
        let o = t.matmul(x, y).unwrap();
        weighted(t, o, "w-mm-a")
    });
    fd_check(&b, &[4, 2], &|t, y| {
        let x = t.leaf(vec![2, 3, 4], randn(24, "mm-d"), false).unwrap();
        let o = t.matmul(x, y).unwrap();
        weighted(t, o, "w-mm-b")
    });
}

#[test]
fn grad_reductions_and_softmax() {
    let a = randn(24, "red-a");
    for axis in 0..3 {
        fd_check(&a, &[2, 3, 4], &|t, x| {
            let o = t.sum(x, axis).unwrap();
            weighted(t, o, "w-sum")
        });
        fd_check(&a, &[2, 3, 4], &|t, x| {
            let o = t.mean(x, axis).unwrap();
            weighted(t, o, "w-mean")
        });
        fd_check(&a, &[2, 3, 4], &|t, x| {
            let o = t.max(x, axis).unwrap();
            weighted(t, o, "w-max")
        });
        fd_check(&a, &[2, 3, 4], &|t, x| {
            let o = t.softmax(x, axis).unwrap();
            weighted(t, o, "w-softmax")
        });
    }
}

#[test]
fn grad_structural_ops() {
    let a = randn(12, "st-a");
    fd_check(&a, &[4, 3], &|t, x| {
        let o = t.gather_rows(x, Rc::new(vec![3, 0, 1, 1, 2])).unwrap();
        weighted(t, o, "w-gather")
    });
    fd_check(&a, &[4, 3], &|t, x| {
        let o = t
            .neighbor_mean(x, Rc::new(vec![1, 2, 0, 3, 3, 0, 0, 1]), 2)
            .unwrap();
        weighted(t, o, "w-nm")
    });
    fd_check(&a, &[2, 3, 2], &|t, x| {
        let y = t.leaf(vec![2, 1, 2], randn(4, "st-b"), false).unwrap();
        let o = t.concat(x, y, 1).unwrap();
        weighted(t, o, "w-concat-a")
    });
    let b = randn(4, "st-c");
    fd_check(&b, &[2, 1, 2], &|t, y| {
        let x = t.leaf(vec![2, 3, 2], randn(12, "st-d"), false).unwrap();
        let o = t.concat(x, y, 1).unwrap();
        weighted(t, o, "w-concat-b")
    });
    fd_check(&a, &[4, 3], &|t, x| {
        let o = t.reshape(x, vec![2, 6]).unwrap();
        weighted(t, o, "w-reshape")
    });
    fd_check(&a, &[2, 3, 2], &|t, x| {
        let o = t.swap_axes(x, 0, 2).unwrap();
        weighted(t, o, "w-swap")
    });
    fd_check(&a, &[2, 3, 2], &|t, x| {
        let o = t.slice(x, 1, 1, 2).unwrap();
        weighted(t, o, "w-slice")
    });
}

#[test]
fn grad_cross3_both_sides() {
    let a = randn(6, "cr-a");
    let b = randn(6, "cr-b");
    fd_check(&a, &[2, 3], &|t, x| {
        let y = t.leaf(vec![2, 3], b.clone(), false).unwrap();
        let o = t.cross3(x, y).unwrap();
        weighted(t, o, "w-cross-a")
    });
    fd_check(&b, &[2, 3], &|t, y| {
        let x = t.leaf(vec![2, 3], a.clone(), false).unwrap();
        let o = t.cross3(x, y).unwrap();
        weighted(t, o, "w-cross-b")
    });
}

#[test]
fn grad_composite_expression() {
    // relu(A B + c) followed by softmax and a mean, composing several rules.
    let a = randn(12, "cp-a");
    fd_check(&a, &[3, 4], &|t, x| {
        let w = t.leaf(vec![4, 5], randn(20, "cp-w"), false).unwrap();
        let h = t.matmul(x, w).unwrap();
        let h = t.add_scalar(h, 0.1);
        let h = t.relu(h);
        let s = t.softmax(h, 1).unwrap();
        let m = t.mean(s, 0).unwrap();
        weighted(t, m, "w-composite")
    });
}

#[test]
fn gradient_accumulates_when_value_used_twice() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(vec![2], vec![3.0, -2.0], true).unwrap();
    let y = tape.mul(x, x).unwrap(); // x^2
    let z = tape.add(y, x).unwrap(); // x^2 + x
    let loss = tape.sum_all(z).unwrap();
    tape.backward(loss).unwrap();
    // d/dx (x^2 + x) = 2x + 1
    assert_eq!(tape.grad(x).unwrap(), &[7.0, -3.0]);
}

// ---- error paths ----

#[test]
fn mismatched_shapes_are_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2, 3], vec![0.0; 6], false).unwrap();
    let b = tape.leaf(vec![4], vec![0.0; 4], false).unwrap();
    assert!(matches!(
        tape.add(a, b),
        Err(Error::ShapeMismatch { op: "add", .. })
    ));
    let c = tape.leaf(vec![4, 2], vec![0.0; 8], false).unwrap();
    assert!(matches!(
        tape.matmul(a, c),
        Err(Error::ShapeMismatch { op: "matmul", .. })
    ));
    assert!(matches!(
        tape.concat(a, b, 0),
        Err(Error::ShapeMismatch { op: "concat", .. })
    ));
}

#[test]
fn division_by_zero_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2], vec![1.0, 2.0], false).unwrap();
    let b = tape.leaf(vec![2], vec![1.0, 0.0], false).unwrap();
    assert!(matches!(tape.div(a, b), Err(Error::DivisionByZero)));
}

#[test]
fn sqrt_of_negative_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2], vec![1.0, -0.1], false).unwrap();
    assert!(matches!(tape.sqrt(a), Err(Error::NonFinite { .. })));
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2], vec![1.0, 2.0], true).unwrap();
    assert!(matches!(
        tape.backward(a),
        Err(Error::NonScalarLoss { .. })
    ));
}

#[test]
fn invalid_axis_and_bad_reshape_are_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2, 3], vec![0.0; 6], false).unwrap();
    assert!(matches!(
        tape.sum(a, 2),
        Err(Error::InvalidAxis { op: "sum", axis: 2, rank: 2 })
    ));
    assert!(matches!(
        tape.reshape(a, vec![4, 2]),
        Err(Error::BadShape { op: "reshape", .. })
    ));
    assert!(matches!(
        tape.slice(a, 1, 2, 2),
        Err(Error::BadShape { op: "slice", .. })
    ));
}

#[test]
fn gather_index_out_of_range_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(vec![2, 3], vec![0.0; 6], false).unwrap();
    assert!(matches!(
        tape.gather_rows(a, Rc::new(vec![0, 2])),
        Err(Error::IndexOutOfRange { op: "gather", index: 2, bound: 2 })
    ));
}

#[test]
fn leaf_shape_must_match_data() {
    let mut tape = Tape::<f64>::new();
    assert!(matches!(
        tape.leaf(vec![2, 2], vec![0.0; 3], false),
        Err(Error::BadShape { op: "leaf", .. })
    ));
    assert!(Tensor::<f64>::new(vec![0, 2], vec![]).is_err());
}

// ---- property tests ----

fn small_tensor() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    proptest::collection::vec(1usize..4, 1..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        proptest::collection::vec(-10.0f64..10.0, n..=n).prop_map(move |data| (shape.clone(), data))
    })
}

proptest! {
    #[test]
    fn swap_axes_twice_is_identity((shape, data) in small_tensor(), ax in 0usize..3) {
        let rank = shape.len();
        let (ax0, ax1) = (ax % rank, (ax + 1) % rank);
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape, data.clone(), false).unwrap();
        let s1 = tape.swap_axes(a, ax0, ax1).unwrap();
        let s2 = tape.swap_axes(s1, ax0, ax1).unwrap();
        prop_assert_eq!(tape.value(s2), &data[..]);
    }

    #[test]
    fn softmax_rows_sum_to_one((shape, data) in small_tensor(), ax in 0usize..3) {
        let axis = ax % shape.len();
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape, data, false).unwrap();
        let s = tape.softmax(a, axis).unwrap();
        let sums = tape.sum(s, axis).unwrap();
        for v in tape.value(sums) {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
        for v in tape.value(s) {
            prop_assert!(*v >= 0.0 && *v <= 1.0);
        }
    }

    #[test]
    fn sum_axis_then_all_equals_sum_all((shape, data) in small_tensor(), ax in 0usize..3) {
        let axis = ax % shape.len();
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape, data, false).unwrap();
        let partial = tape.sum(a, axis).unwrap();
        let s1 = tape.sum_all(partial).unwrap();
        let s2 = tape.sum_all(a).unwrap();
        prop_assert!((tape.scalar_value(s1) - tape.scalar_value(s2)).abs() < 1e-9);
    }

    #[test]
    fn grad_of_sum_all_is_ones((shape, data) in small_tensor()) {
        let n = data.len();
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape, data, true).unwrap();
        let s = tape.sum_all(a).unwrap();
        tape.backward(s).unwrap();
        prop_assert_eq!(tape.grad(a).unwrap(), &vec![1.0; n][..]);
    }

    #[test]
    fn relu_decomposition_recovers_abs((shape, data) in small_tensor()) {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape, data.clone(), false).unwrap();
        let pos = tape.relu(a);
        let na = tape.neg(a);
        let neg = tape.relu(na);
        let abs = tape.add(pos, neg).unwrap();
        for (v, x) in tape.value(abs).iter().zip(&data) {
            prop_assert!((v - x.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn max_bounds_every_element((shape, data) in small_tensor(), ax in 0usize..3) {
        let axis = ax % shape.len();
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(shape.clone(), data.clone(), false).unwrap();
        let m = tape.max(a, axis).unwrap();
        let max_all = tape.value(m).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let data_max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((max_all - data_max).abs() < 1e-15);
    }
}
