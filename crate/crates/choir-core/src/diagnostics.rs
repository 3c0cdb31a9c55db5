//! Self-check suites: equivariance and invariance of every layer and of
//! the composed model, finite-difference gradient checks, and rotation
//! averaging against an independent manifold-optimization oracle.
//!
//! Each suite returns a list of named checks with the worst observed
//! error; the CLI `selfcheck` command prints them and fails if any check
//! fails.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hypothesizer::HypothesizerConfig;
use crate::pointcloud::knn::knn;
use crate::pointcloud::synthetic::random_ball_cloud;
use crate::pointcloud::PointCloud;
use crate::residual::{CharacteristicOrientationPredictor, KnnMode, PredictorConfig, ResidualConfig};
use crate::rng;
use crate::scalar::Precision;
use crate::so3::mat::{self, Mat3};
use crate::so3::{angle_between, chordal_mean, sample_uniform, Rotation};
use crate::tensor::{Tape, Var};
use crate::training::pair_loss_on_tape;
use crate::vnn::{
    edge_conv_block, gram_schmidt_rows_tape, invariant_product, vn_linear, vn_mean_pool,
    vn_nonlinearity, Aggregation,
};

/// One named check with its worst observed error.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn against_tol(name: &str, worst: f64, tol: f64) -> Check {
        Check {
            name: name.to_string(),
            passed: worst.is_finite() && worst <= tol,
            detail: format!("max err {worst:.3e} (tol {tol:.1e})"),
        }
    }
}

/// A group of related checks.
#[derive(Debug, Clone)]
pub struct Suite {
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl Suite {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Small architecture used by the gradient checks and fast tests.
pub fn tiny_config() -> PredictorConfig {
    PredictorConfig {
        hypothesizer: HypothesizerConfig {
            widths: vec![4, 6],
            k: 4,
            aggregation: Aggregation::Mean,
        },
        residual: ResidualConfig {
            hidden: 8,
            blocks: 1,
            k_att: 4,
            pos_hidden: 4,
        },
        knn_mode: KnnMode::Adaptive,
        use_residual: true,
    }
}

/// Run every suite with one base seed.
pub fn run_all(seed: u64) -> Result<Vec<Suite>> {
    Ok(vec![
        equivariance_suite(seed)?,
        invariance_suite(seed)?,
        gradcheck_suite(seed)?,
        rotation_mean_suite(seed)?,
    ])
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Rotate every length-3 lane of a flat buffer: `v' = v R`.
fn rotate_lanes(data: &[f64], r: &Rotation<f64>) -> Vec<f64> {
    debug_assert_eq!(data.len() % 3, 0);
    let mut out = Vec::with_capacity(data.len());
    for ch in data.chunks_exact(3) {
        out.extend_from_slice(&mat::rowvec_mul([ch[0], ch[1], ch[2]], r.matrix()));
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

const LAYER_TOL: f64 = 1e-9;
const ANGLE_TOL: f64 = 1e-6;
const MODEL_TRIALS: usize = 100;

/// Equivariance of each vector-neuron layer (exact, elementwise) and of
/// the hypothesizer and composed model (angular, over random rotations).
pub fn equivariance_suite(seed: u64) -> Result<Suite> {
    let mut rng = rng::stream("diag-equivariance", &[seed]);
    let mut checks = Vec::new();

    // vn_linear: W (x R) = (W x) R.
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let w = randn(&mut rng, 6 * 4);
        let x = randn(&mut rng, 5 * 4 * 3);
        let run = |x_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let wv = tape.leaf(vec![6, 4], w.clone(), false)?;
            let xv = tape.leaf(vec![5, 4, 3], x_data.to_vec(), false)?;
            let y = vn_linear(&mut tape, wv, xv)?;
            Ok(tape.value(y).to_vec())
        };
        let base = run(&x)?;
        let rot = run(&rotate_lanes(&x, &r))?;
        worst = worst.max(max_abs_diff(&rot, &rotate_lanes(&base, &r)));
    }
    checks.push(Check::against_tol("vn-linear", worst, LAYER_TOL));

    // vn_nonlinearity under a shared rotation of both inputs.
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let x = randn(&mut rng, 5 * 4 * 3);
        let d = randn(&mut rng, 5 * 4 * 3);
        let run = |x_data: &[f64], d_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let xv = tape.leaf(vec![5, 4, 3], x_data.to_vec(), false)?;
            let dv = tape.leaf(vec![5, 4, 3], d_data.to_vec(), false)?;
            let y = vn_nonlinearity(&mut tape, xv, dv)?;
            Ok(tape.value(y).to_vec())
        };
        let base = run(&x, &d)?;
        let rot = run(&rotate_lanes(&x, &r), &rotate_lanes(&d, &r))?;
        worst = worst.max(max_abs_diff(&rot, &rotate_lanes(&base, &r)));
    }
    checks.push(Check::against_tol("vn-nonlinearity", worst, LAYER_TOL));

    // vn_mean_pool.
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let x = randn(&mut rng, 5 * 4 * 3);
        let run = |x_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let xv = tape.leaf(vec![5, 4, 3], x_data.to_vec(), false)?;
            let y = vn_mean_pool(&mut tape, xv)?;
            Ok(tape.value(y).to_vec())
        };
        let base = run(&x)?;
        let rot = run(&rotate_lanes(&x, &r))?;
        worst = worst.max(max_abs_diff(&rot, &rotate_lanes(&base, &r)));
    }
    checks.push(Check::against_tol("vn-mean-pool", worst, LAYER_TOL));

    // Edge convolution with mean aggregation, shared neighbor graph.
    let mut worst = 0.0_f64;
    for t in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let cloud = random_ball_cloud::<f64>(16, seed.wrapping_add(t));
        let graph = knn(&cloud, 4, Precision::Double)?;
        let w_lin = randn(&mut rng, 4 * 2);
        let w_dir = randn(&mut rng, 4 * 2);
        let x: Vec<f64> = cloud.points.iter().flatten().copied().collect();
        let run = |x_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let wl = tape.leaf(vec![4, 2], w_lin.clone(), false)?;
            let wd = tape.leaf(vec![4, 2], w_dir.clone(), false)?;
            let xv = tape.leaf(vec![16, 1, 3], x_data.to_vec(), false)?;
            let y = edge_conv_block(&mut tape, wl, wd, xv, &graph, Aggregation::Mean)?;
            Ok(tape.value(y).to_vec())
        };
        let base = run(&x)?;
        let rot = run(&rotate_lanes(&x, &r))?;
        worst = worst.max(max_abs_diff(&rot, &rotate_lanes(&base, &r)));
    }
    checks.push(Check::against_tol("edge-conv-mean", worst, LAYER_TOL));

    // Gram-Schmidt head rows: rows(uv R) = rows(uv) R.
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let uv = randn(&mut rng, 6);
        let run = |uv_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let v = tape.leaf(vec![2, 3], uv_data.to_vec(), false)?;
            let rows = gram_schmidt_rows_tape(&mut tape, v)?;
            Ok(tape.value(rows).to_vec())
        };
        let base = run(&uv)?;
        let rot = run(&rotate_lanes(&uv, &r))?;
        worst = worst.max(max_abs_diff(&rot, &rotate_lanes(&base, &r)));
    }
    checks.push(Check::against_tol("gram-schmidt-rows", worst, LAYER_TOL));

    // Composed model on full-size architecture: H(P R) = H(P) R and
    // f(P R) = f(P) R, measured as angles. Graphs are frozen from the
    // base pose so the comparison isolates the network map itself.
    let model = CharacteristicOrientationPredictor::<f64>::new(PredictorConfig::default(), seed)?;
    let mut worst_h = 0.0_f64;
    let mut worst_f = 0.0_f64;
    for t in 0..MODEL_TRIALS {
        let cloud = random_ball_cloud::<f64>(64, seed.wrapping_add(1000 + t as u64));
        let r = sample_uniform::<f64, _>(&mut rng);
        let graphs = model.compute_graphs(&cloud)?;
        let base = model.predict(&cloud, Some(&graphs))?;
        let rot = model.predict(&cloud.apply_rotation(&r), Some(&graphs))?;
        worst_h = worst_h.max(angle_between(&rot.hypothesis, &base.hypothesis.compose(&r)));
        worst_f = worst_f.max(angle_between(&rot.orientation, &base.orientation.compose(&r)));
    }
    checks.push(Check::against_tol(
        "hypothesizer-equivariance",
        worst_h,
        ANGLE_TOL,
    ));
    checks.push(Check::against_tol("model-equivariance", worst_f, ANGLE_TOL));

    Ok(Suite {
        name: "equivariance",
        checks,
    })
}

/// Invariance of the Gram products, the canonicalized points, and the
/// residual rotation under rotations of the input.
pub fn invariance_suite(seed: u64) -> Result<Suite> {
    let mut rng = rng::stream("diag-invariance", &[seed]);
    let mut checks = Vec::new();

    // Gram product of two rotated feature stacks is unchanged.
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = sample_uniform::<f64, _>(&mut rng);
        let a = randn(&mut rng, 5 * 4 * 3);
        let b = randn(&mut rng, 4 * 3);
        let run = |a_data: &[f64], b_data: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let av = tape.leaf(vec![5, 4, 3], a_data.to_vec(), false)?;
            let bv = tape.leaf(vec![4, 3], b_data.to_vec(), false)?;
            let y = invariant_product(&mut tape, av, bv)?;
            Ok(tape.value(y).to_vec())
        };
        let base = run(&a, &b)?;
        let rot = run(&rotate_lanes(&a, &r), &rotate_lanes(&b, &r))?;
        worst = worst.max(max_abs_diff(&rot, &base));
    }
    checks.push(Check::against_tol("gram-product", worst, LAYER_TOL));

    // Forward-pass invariants: canonicalized points and the flattened
    // invariant features coincide for P and P R.
    let model = CharacteristicOrientationPredictor::<f64>::new(PredictorConfig::default(), seed)?;
    let mut worst_canon = 0.0_f64;
    let mut worst_inv = 0.0_f64;
    for t in 0..20 {
        let cloud = random_ball_cloud::<f64>(64, seed.wrapping_add(2000 + t));
        let r = sample_uniform::<f64, _>(&mut rng);
        let graphs = model.compute_graphs(&cloud)?;
        let run = |c: &PointCloud<f64>| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut tape = Tape::new();
            let vars = model.params.leaf_all(&mut tape);
            let fwd = model.forward_on_tape(&mut tape, &vars, c, Some(&graphs))?;
            let inv = fwd.invariant.ok_or_else(|| Error::Config {
                message: "residual stage disabled in invariance check".into(),
            })?;
            Ok((tape.value(fwd.canon).to_vec(), tape.value(inv).to_vec()))
        };
        let (canon_base, inv_base) = run(&cloud)?;
        let (canon_rot, inv_rot) = run(&cloud.apply_rotation(&r))?;
        worst_canon = worst_canon.max(max_abs_diff(&canon_rot, &canon_base));
        worst_inv = worst_inv.max(max_abs_diff(&inv_rot, &inv_base));
    }
    checks.push(Check::against_tol(
        "canonicalization-coincidence",
        worst_canon,
        LAYER_TOL,
    ));
    checks.push(Check::against_tol(
        "invariant-features",
        worst_inv,
        LAYER_TOL,
    ));

    // Residual rotation is invariant: G(P R) = G(P), frozen graphs.
    let mut worst_g = 0.0_f64;
    for t in 0..MODEL_TRIALS {
        let cloud = random_ball_cloud::<f64>(64, seed.wrapping_add(3000 + t as u64));
        let r = sample_uniform::<f64, _>(&mut rng);
        let graphs = model.compute_graphs(&cloud)?;
        let base = model.predict(&cloud, Some(&graphs))?;
        let rot = model.predict(&cloud.apply_rotation(&r), Some(&graphs))?;
        worst_g = worst_g.max(angle_between(&rot.residual, &base.residual));
    }
    checks.push(Check::against_tol("residual-invariance", worst_g, ANGLE_TOL));

    Ok(Suite {
        name: "invariance",
        checks,
    })
}

const GRAD_TOL: f64 = 1e-3;
const GRAD_COORDS: usize = 20;
/// Relative-error floor: errors are measured against
/// `max(|analytic|, |fd|, GRAD_FLOOR)`.
const GRAD_FLOOR: f64 = 1e-2;

/// Central finite difference of `eval` along one coordinate of `data`.
/// Tries a second, larger step when the first disagrees, which filters
/// false alarms from relu kinks crossed by the probe step.
fn fd_rel_err(
    data: &mut [f64],
    idx: usize,
    analytic: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for &h in &[1e-5, 1e-4] {
        let orig = data[idx];
        data[idx] = orig + h;
        let up = eval(data)?;
        data[idx] = orig - h;
        let down = eval(data)?;
        data[idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(GRAD_FLOOR);
        best = best.min(rel);
        if best <= GRAD_TOL {
            break;
        }
    }
    Ok(best)
}

/// Analytic gradients versus finite differences for each differentiable
/// layer and for the composed model under the pair loss.
pub fn gradcheck_suite(seed: u64) -> Result<Suite> {
    let mut rng = rng::stream("diag-gradcheck", &[seed]);
    let mut checks = Vec::new();

    // --- vn_linear: gradients with respect to weights and features. ---
    {
        let w = randn(&mut rng, 6 * 4);
        let x = randn(&mut rng, 5 * 4 * 3);
        let weights = randn(&mut rng, 5 * 6 * 3);
        let build = |w_data: &[f64], x_data: &[f64]| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let mut tape = Tape::new();
            let wv = tape.leaf(vec![6, 4], w_data.to_vec(), true)?;
            let xv = tape.leaf(vec![5, 4, 3], x_data.to_vec(), true)?;
            let y = vn_linear(&mut tape, wv, xv)?;
            let mask = tape.leaf(vec![5, 6, 3], weights.clone(), false)?;
            let prod = tape.mul(y, mask)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss)[0];
            tape.backward(loss)?;
            let gw = tape.grad(wv).map(|g| g.to_vec()).unwrap_or_default();
            let gx = tape.grad(xv).map(|g| g.to_vec()).unwrap_or_default();
            Ok((value, gw, gx))
        };
        let (_, gw, gx) = build(&w, &x)?;
        let mut worst = 0.0_f64;
        let mut wbuf = w.clone();
        let mut xbuf = x.clone();
        for i in 0..wbuf.len() {
            let e = fd_rel_err(&mut wbuf, i, gw[i], &mut |d| Ok(build(d, &x)?.0))?;
            worst = worst.max(e);
        }
        for i in 0..xbuf.len() {
            let e = fd_rel_err(&mut xbuf, i, gx[i], &mut |d| Ok(build(&w, d)?.0))?;
            worst = worst.max(e);
        }
        checks.push(Check::against_tol("grad-vn-linear", worst, GRAD_TOL));
    }

    // --- vn_nonlinearity: gradients with respect to both inputs. ---
    {
        let x = randn(&mut rng, 5 * 4 * 3);
        let d = randn(&mut rng, 5 * 4 * 3);
        let weights = randn(&mut rng, 5 * 4 * 3);
        let build = |x_data: &[f64], d_data: &[f64]| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let mut tape = Tape::new();
            let xv = tape.leaf(vec![5, 4, 3], x_data.to_vec(), true)?;
            let dv = tape.leaf(vec![5, 4, 3], d_data.to_vec(), true)?;
            let y = vn_nonlinearity(&mut tape, xv, dv)?;
            let mask = tape.leaf(vec![5, 4, 3], weights.clone(), false)?;
            let prod = tape.mul(y, mask)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss)[0];
            tape.backward(loss)?;
            let gx = tape.grad(xv).map(|g| g.to_vec()).unwrap_or_default();
            let gd = tape.grad(dv).map(|g| g.to_vec()).unwrap_or_default();
            Ok((value, gx, gd))
        };
        let (_, gx, gd) = build(&x, &d)?;
        let mut worst = 0.0_f64;
        let mut xbuf = x.clone();
        let mut dbuf = d.clone();
        for i in 0..xbuf.len() {
            let e = fd_rel_err(&mut xbuf, i, gx[i], &mut |v| Ok(build(v, &d)?.0))?;
            worst = worst.max(e);
        }
        for i in 0..dbuf.len() {
            let e = fd_rel_err(&mut dbuf, i, gd[i], &mut |v| Ok(build(&x, v)?.0))?;
            worst = worst.max(e);
        }
        checks.push(Check::against_tol("grad-vn-nonlinearity", worst, GRAD_TOL));
    }

    // --- Edge convolution (mean aggregation). ---
    {
        let cloud = random_ball_cloud::<f64>(12, seed.wrapping_add(4000));
        let graph = knn(&cloud, 4, Precision::Double)?;
        let w_lin = randn(&mut rng, 4 * 2);
        let w_dir = randn(&mut rng, 4 * 2);
        let x: Vec<f64> = cloud.points.iter().flatten().copied().collect();
        let weights = randn(&mut rng, 12 * 4 * 3);
        let build = |wl_data: &[f64],
                     wd_data: &[f64],
                     x_data: &[f64]|
         -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
            let mut tape = Tape::new();
            let wl = tape.leaf(vec![4, 2], wl_data.to_vec(), true)?;
            let wd = tape.leaf(vec![4, 2], wd_data.to_vec(), true)?;
            let xv = tape.leaf(vec![12, 1, 3], x_data.to_vec(), true)?;
            let y = edge_conv_block(&mut tape, wl, wd, xv, &graph, Aggregation::Mean)?;
            let mask = tape.leaf(vec![12, 4, 3], weights.clone(), false)?;
            let prod = tape.mul(y, mask)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss)[0];
            tape.backward(loss)?;
            let g = |v: Var, t: &Tape<f64>| t.grad(v).map(|g| g.to_vec()).unwrap_or_default();
            Ok((value, g(wl, &tape), g(wd, &tape), g(xv, &tape)))
        };
        let (_, gl, gd, gx) = build(&w_lin, &w_dir, &x)?;
        let mut worst = 0.0_f64;
        let mut buf = w_lin.clone();
        for i in 0..buf.len() {
            let e = fd_rel_err(&mut buf, i, gl[i], &mut |v| Ok(build(v, &w_dir, &x)?.0))?;
            worst = worst.max(e);
        }
        let mut buf = w_dir.clone();
        for i in 0..buf.len() {
            let e = fd_rel_err(&mut buf, i, gd[i], &mut |v| Ok(build(&w_lin, v, &x)?.0))?;
            worst = worst.max(e);
        }
        let mut buf = x.clone();
        for i in 0..buf.len() {
            let e = fd_rel_err(&mut buf, i, gx[i], &mut |v| Ok(build(&w_lin, &w_dir, v)?.0))?;
            worst = worst.max(e);
        }
        checks.push(Check::against_tol("grad-edge-conv", worst, GRAD_TOL));
    }

    // --- Gram-Schmidt head rows. ---
    {
        let uv = randn(&mut rng, 6);
        let weights = randn(&mut rng, 9);
        let build = |uv_data: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut tape = Tape::new();
            let v = tape.leaf(vec![2, 3], uv_data.to_vec(), true)?;
            let rows = gram_schmidt_rows_tape(&mut tape, v)?;
            let mask = tape.leaf(vec![3, 3], weights.clone(), false)?;
            let prod = tape.mul(rows, mask)?;
            let loss = tape.sum_all(prod)?;
            let value = tape.value(loss)[0];
            tape.backward(loss)?;
            Ok((value, tape.grad(v).map(|g| g.to_vec()).unwrap_or_default()))
        };
        let (_, g) = build(&uv)?;
        let mut worst = 0.0_f64;
        let mut buf = uv.clone();
        for i in 0..buf.len() {
            let e = fd_rel_err(&mut buf, i, g[i], &mut |v| Ok(build(v)?.0))?;
            worst = worst.max(e);
        }
        checks.push(Check::against_tol("grad-gram-schmidt", worst, GRAD_TOL));
    }

    // --- Composed model under the Siamese pair loss. Neighbor graphs are
    // pinned so finite differences probe the smooth part of the model. ---
    {
        let mut model =
            CharacteristicOrientationPredictor::<f64>::new(tiny_config(), seed.wrapping_add(1))?;
        let cloud = random_ball_cloud::<f64>(24, seed.wrapping_add(5000));
        let r1 = sample_uniform::<f64, _>(&mut rng);
        let r2 = sample_uniform::<f64, _>(&mut rng);
        let view1 = cloud.apply_rotation(&r1);
        let view2 = cloud.apply_rotation(&r2);
        let g1 = model.compute_graphs(&view1)?;
        let g2 = model.compute_graphs(&view2)?;

        let loss_of = |m: &CharacteristicOrientationPredictor<f64>| -> Result<f64> {
            let mut tape = Tape::new();
            let vars = m.params.leaf_all(&mut tape);
            let f1 = m.forward_on_tape(&mut tape, &vars, &view1, Some(&g1))?;
            let f2 = m.forward_on_tape(&mut tape, &vars, &view2, Some(&g2))?;
            let loss = pair_loss_on_tape(&mut tape, f1.rows, f2.rows, &r1, &r2)?;
            Ok(tape.value(loss)[0])
        };

        // Analytic gradients for every parameter tensor in one pass.
        let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
        {
            let mut tape = Tape::new();
            let vars = model.params.leaf_all(&mut tape);
            let f1 = model.forward_on_tape(&mut tape, &vars, &view1, Some(&g1))?;
            let f2 = model.forward_on_tape(&mut tape, &vars, &view2, Some(&g2))?;
            let loss = pair_loss_on_tape(&mut tape, f1.rows, f2.rows, &r1, &r2)?;
            tape.backward(loss)?;
            for (name, tensor) in model.params.iter() {
                let v = vars[name];
                let g = tape
                    .grad(v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; tensor.data.len()]);
                analytic.push((name.to_string(), g));
            }
        }

        for (name, grads) in &analytic {
            let numel = grads.len();
            let mut coords: Vec<usize> = (0..numel).collect();
            // Partial shuffle: probe up to GRAD_COORDS random coordinates.
            for i in 0..coords.len().min(GRAD_COORDS) {
                let j = rng.gen_range(i..coords.len());
                coords.swap(i, j);
            }
            coords.truncate(GRAD_COORDS.min(numel));
            let mut worst = 0.0_f64;
            for &idx in &coords {
                let analytic_g = grads[idx];
                let mut best = f64::INFINITY;
                for &h in &[1e-5, 1e-4] {
                    let orig = {
                        let t = model.params.get_mut(name).expect("parameter exists");
                        let orig = t.data[idx];
                        t.data[idx] = orig + h;
                        orig
                    };
                    let up = loss_of(&model)?;
                    model.params.get_mut(name).expect("parameter exists").data[idx] = orig - h;
                    let down = loss_of(&model)?;
                    model.params.get_mut(name).expect("parameter exists").data[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let rel =
                        (analytic_g - fd).abs() / analytic_g.abs().max(fd.abs()).max(GRAD_FLOOR);
                    best = best.min(rel);
                    if best <= GRAD_TOL {
                        break;
                    }
                }
                worst = worst.max(best);
            }
            checks.push(Check::against_tol(
                &format!("grad-model:{name}"),
                worst,
                GRAD_TOL,
            ));
        }
    }

    Ok(Suite {
        name: "gradcheck",
        checks,
    })
}

const MEAN_SETS: usize = 50;
/// 0.1 degrees, in radians.
const MEAN_TOL: f64 = 0.1 * std::f64::consts::PI / 180.0;

/// Chordal rotation averaging versus an independent gradient-ascent
/// oracle on the rotation group, plus determinant sanity.
pub fn rotation_mean_suite(seed: u64) -> Result<Suite> {
    let mut rng = rng::stream("diag-rotation-mean", &[seed]);
    let mut worst_angle = 0.0_f64;
    let mut worst_det = 0.0_f64;
    let mut any_degenerate = false;
    for set in 0..MEAN_SETS {
        let count = 2 + set % 4;
        let rs: Vec<Rotation<f64>> = (0..count).map(|_| sample_uniform(&mut rng)).collect();
        let mean = chordal_mean(&rs)?;
        any_degenerate |= mean.degenerate;
        let oracle = chordal_mean_gd_oracle(&rs, 24, seed.wrapping_add(set as u64))?;
        worst_angle = worst_angle.max(angle_between(&mean.rotation, &oracle));
        worst_det = worst_det.max((mat::det3(mean.rotation.matrix()) - 1.0).abs());
    }
    let checks = vec![
        Check::against_tol("mean-vs-oracle-angle", worst_angle, MEAN_TOL),
        Check::against_tol("mean-determinant", worst_det, 1e-9),
        Check {
            name: "mean-nondegenerate".into(),
            passed: !any_degenerate,
            detail: format!("degenerate flag seen: {any_degenerate}"),
        },
    ];
    Ok(Suite {
        name: "rotation-mean",
        checks,
    })
}

fn skew_part(a: &Mat3<f64>) -> Mat3<f64> {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = 0.5 * (a[i][j] - a[j][i]);
        }
    }
    out
}

fn exp_skew(w: &Mat3<f64>) -> Mat3<f64> {
    let theta = (w[2][1] * w[2][1] + w[0][2] * w[0][2] + w[1][0] * w[1][0]).sqrt();
    let (c1, c2) = if theta < 1e-12 {
        (1.0, 0.5)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let w2 = mat::matmul3(w, w);
    let mut out = mat::identity::<f64>();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += c1 * w[i][j] + c2 * w2[i][j];
        }
    }
    out
}

/// Independent rotation-averaging oracle: maximize `tr(M^T R)` over the
/// rotation group by Riemannian gradient ascent with random restarts,
/// where `M` is the arithmetic mean of the inputs. Shares no code with
/// the SVD-based chordal mean.
pub fn chordal_mean_gd_oracle(
    rs: &[Rotation<f64>],
    restarts: usize,
    seed: u64,
) -> Result<Rotation<f64>> {
    if rs.is_empty() {
        return Err(Error::EmptyInput {
            op: "chordal_mean_gd_oracle",
        });
    }
    let mut rng = rng::stream("chordal-oracle", &[seed]);
    let scale = 1.0 / rs.len() as f64;
    let mut m = [[0.0_f64; 3]; 3];
    for r in rs {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += scale * r.matrix()[i][j];
            }
        }
    }
    let objective = |r: &Mat3<f64>| mat::trace3(&mat::matmul3(&mat::transpose3(&m), r));
    let mut best: Option<(f64, Mat3<f64>)> = None;
    for _ in 0..restarts.max(1) {
        let mut r = *sample_uniform::<f64, _>(&mut rng).matrix();
        let mut obj = objective(&r);
        for _ in 0..500 {
            let omega = skew_part(&mat::matmul3(&mat::transpose3(&r), &m));
            if mat::frobenius_sq(&omega).sqrt() < 1e-14 {
                break;
            }
            // Take the best step over a geometric grid so progress near
            // the optimum is not throttled by an overlong step.
            let mut chosen: Option<(f64, Mat3<f64>)> = None;
            let mut tau = 2.0_f64;
            while tau > 1e-8 {
                let mut step = omega;
                for row in &mut step {
                    for v in row.iter_mut() {
                        *v *= tau;
                    }
                }
                let cand = mat::matmul3(&r, &exp_skew(&step));
                let cand_obj = objective(&cand);
                if chosen.is_none_or(|(b, _)| cand_obj > b) {
                    chosen = Some((cand_obj, cand));
                }
                tau *= 0.5;
            }
            let (cand_obj, cand) = chosen.expect("grid is nonempty");
            if cand_obj <= obj {
                break;
            }
            r = cand;
            obj = cand_obj;
        }
        if best.is_none_or(|(b, _)| obj > b) {
            best = Some((obj, r));
        }
    }
    Ok(Rotation::from_matrix_unchecked(
        best.expect("at least one restart").1,
    ))
}
