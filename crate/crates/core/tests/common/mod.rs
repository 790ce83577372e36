//! Oracles shared by the property suite and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use kafcm::baselines::Mlp;
use kafcm::datagen::{gen_mackey_glass, Dataset, MackeyGlassParams, Provenance};
use kafcm::edge::silu;
use kafcm::training::{loss_total, model_gradient, model_loss, predict_all};
use kafcm::{BaseKind, BoundingOp, Dynamics, EdgeFunction, KaFcm, KnotGrid, StandardFcm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences of `f` around `x`, compared with `grad`: each entry
/// must agree to relative error 1e-4 or absolute error 1e-7.
pub fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> Result<(), String> {
    assert_eq!(x.len(), grad.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + FD_STEP;
        let up = f(&p);
        p[i] = x[i] - FD_STEP;
        let down = f(&p);
        p[i] = x[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        let abs = (fd - grad[i]).abs();
        let rel = abs / fd.abs().max(grad[i].abs());
        if abs > 1e-7 && rel > 1e-4 {
            return Err(format!("component {i}: analytic {} vs numeric {fd}", grad[i]));
        }
    }
    Ok(())
}

/// Like [`fd_check`] for piecewise-smooth functions. Near a kink the central
/// difference averages two slopes, so the analytic value may instead match
/// either one-sided difference. Away from kinks those differ from the true
/// derivative only by O(step) curvature terms.
pub fn fd_check_piecewise(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> Result<(), String> {
    assert_eq!(x.len(), grad.len());
    let close = |a: f64, b: f64, abs_tol: f64| {
        let abs = (a - b).abs();
        abs <= abs_tol || abs / a.abs().max(b.abs()) <= 1e-4
    };
    let center = f(x);
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + FD_STEP;
        let up = f(&p);
        p[i] = x[i] - FD_STEP;
        let down = f(&p);
        p[i] = x[i];
        let right = (up - center) / FD_STEP;
        let left = (center - down) / FD_STEP;
        let central = (up - down) / (2.0 * FD_STEP);
        let g = grad[i];
        if !(close(central, g, 1e-7) || close(left, g, 1e-6) || close(right, g, 1e-6)) {
            return Err(format!(
                "component {i}: analytic {g} vs numeric {central} (left {left}, right {right})"
            ));
        }
    }
    Ok(())
}

pub fn random_grid(r: &mut ChaCha8Rng) -> KnotGrid {
    let lo = r.gen_range(-3.0..0.0);
    let hi = lo + r.gen_range(0.5..4.0);
    KnotGrid::uniform(lo, hi, r.gen_range(1..=12), r.gen_range(1..=4)).unwrap()
}

pub fn random_bounding(r: &mut ChaCha8Rng) -> BoundingOp {
    [BoundingOp::SmoothClip, BoundingOp::Tanh, BoundingOp::Identity][r.gen_range(0..3)]
}

pub fn random_edge(r: &mut ChaCha8Rng, grid: Arc<KnotGrid>) -> EdgeFunction {
    let k = grid.basis_count();
    let alpha = (0..k).map(|_| r.gen_range(-1.0..1.0)).collect();
    EdgeFunction::new(grid, BaseKind::Silu, r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5), alpha)
}

/// Largest partition-of-unity violation over 1000 random in-domain points.
pub fn partition_of_unity_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let grid = random_grid(&mut r);
    (0..1000)
        .map(|_| {
            let x = r.gen_range(grid.domain_lo()..=grid.domain_hi());
            (grid.basis_vector(x).iter().sum::<f64>() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Edge parameter and input gradients against finite differences.
pub fn edge_gradient_instance(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let grid = Arc::new(random_grid(&mut r));
    let edge = random_edge(&mut r, grid.clone());
    let span = grid.domain_hi() - grid.domain_lo();
    let x = r.gen_range(grid.domain_lo() - 0.2 * span..grid.domain_hi() + 0.2 * span);
    let upstream = r.gen_range(-2.0..2.0);
    let g = edge.grad(x, upstream);

    let mut params = Vec::new();
    edge.write_params(&mut params);
    let mut analytic = vec![g.d_w_base, g.d_w_spline];
    analytic.extend(&g.d_alpha);
    fd_check(
        |p| {
            let mut e = edge.clone();
            e.read_params(p);
            upstream * e.eval(x)
        },
        &params,
        &analytic,
    )?;
    // Degree-1 splines have kinks at the knots, so the input derivative is
    // only checked for smooth bases.
    if grid.degree() >= 2 {
        fd_check(|p| upstream * edge.eval(p[0]), &[x], &[g.d_input])?;
    }
    Ok(())
}

pub fn random_dataset(r: &mut ChaCha8Rng, n_in: usize, n_out: usize, rows: usize, lo: f64, hi: f64) -> Dataset {
    let inputs = (0..rows)
        .map(|_| (0..n_in).map(|_| r.gen_range(lo..hi)).collect())
        .collect();
    let targets = (0..rows)
        .map(|_| (0..n_out).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    Dataset::new(inputs, targets, Provenance::External { name: "random".into() }).unwrap()
}

/// Random spline map: autonomous dense or feed-forward, random bounding.
pub fn random_model(r: &mut ChaCha8Rng) -> KaFcm {
    let grid = random_grid(r);
    let bounding = random_bounding(r);
    let seed = r.gen();
    let mut m = if r.gen_bool(0.5) {
        let n = r.gen_range(2..=4);
        KaFcm::dense(n, grid, BaseKind::Silu, bounding, seed)
    } else {
        let (n_in, n_out) = (r.gen_range(1..=3), r.gen_range(1..=2));
        KaFcm::feed_forward(n_in, n_out, grid, BaseKind::Silu, bounding, seed)
    };
    // Spread the parameters beyond their initial ranges.
    let p: Vec<f64> = m.params().iter().map(|_| r.gen_range(-1.0..1.0)).collect();
    m.set_params(&p);
    m
}

pub fn model_dataset(r: &mut ChaCha8Rng, m: &KaFcm) -> Dataset {
    let layout = m.layout();
    let g = m.grid();
    let span = g.domain_hi() - g.domain_lo();
    let rows = r.gen_range(3..=12);
    random_dataset(
        r,
        layout.inputs.len(),
        layout.outputs.len(),
        rows,
        g.domain_lo() - 0.1 * span,
        g.domain_hi() + 0.1 * span,
    )
}

/// Model gradient (with a random L1 weight) against finite differences of
/// the uncached forward loss.
pub fn model_gradient_instance(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m = random_model(&mut r);
    let data = model_dataset(&mut r, &m);
    let lambda = if r.gen_bool(0.5) { r.gen_range(0.0..0.1) } else { 0.0 };
    let grad = model_gradient(&m, &data, lambda).map_err(|e| e.to_string())?.flat();
    fd_check(
        |p| {
            let mut mm = m.clone();
            mm.set_params(p);
            model_loss(&mm, &data, lambda).unwrap()
        },
        &m.params(),
        &grad,
    )
}

pub fn mlp_gradient_instance(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (n_in, n_out) = (r.gen_range(1..=4), r.gen_range(1..=2));
    let mlp = Mlp::init(n_in, n_out, r.gen());
    let rows = r.gen_range(2..=6);
    let data = random_dataset(&mut r, n_in, n_out, rows, -1.0, 1.0);
    let (_, grad) = mlp.loss_and_gradient(&data).map_err(|e| e.to_string())?;
    // ReLU hidden units make the loss piecewise smooth.
    fd_check_piecewise(
        |p| {
            let mut m = mlp.clone();
            m.set_params(p);
            let pred = m.predict_all(&data).unwrap();
            kafcm::training::loss_rec(&pred, &data.targets).unwrap()
        },
        &mlp.params(),
        &grad,
    )
}

/// Largest componentwise gap between a scalar-weight map and the spline map
/// built from it with identity bases and zero coefficients, over 100 states.
pub fn reduction_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..=8);
    let bounding = random_bounding(&mut r);
    let mut fcm = StandardFcm::zeros(n, bounding);
    let mut ka = KaFcm::empty(n, KnotGrid::uniform(-1.0, 1.0, 5, 3).unwrap(), BaseKind::Identity, bounding);
    let grid = ka.grid().clone();
    for i in 0..n {
        for j in 0..n {
            let w = r.gen_range(-1.0..1.0);
            fcm.set_weight(i, j, w);
            let k = grid.basis_count();
            ka.set_edge(i, j, EdgeFunction::new(grid.clone(), BaseKind::Identity, w, 1.0, vec![0.0; k]));
        }
    }
    (0..100)
        .map(|_| {
            let s: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let a = ka.step(&s).unwrap();
            let b = fcm.step(&s).unwrap();
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest deviation from 1 over the first delay interval when the history
/// and initial value sit on the equilibrium `x = 1`.
pub fn mackey_fixed_point_deviation() -> f64 {
    let params = MackeyGlassParams {
        x0: 1.0,
        washout: 0,
        total_steps: 18,
        ..Default::default()
    };
    gen_mackey_glass(&params)
        .unwrap()
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Minimizer of SiLU by ternary search on `[-5, 0]`.
pub fn silu_argmin() -> f64 {
    let (mut lo, mut hi) = (-5.0f64, 0.0f64);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if silu(a) < silu(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// `loss_total(lambda) == loss_total(0) + lambda * sum |alpha|`, bit for bit.
pub fn additivity_holds(seed: u64) -> bool {
    let mut r = rng(seed);
    let m = random_model(&mut r);
    let data = model_dataset(&mut r, &m);
    let lambda = r.gen_range(0.0..1.0);
    let pred = predict_all(&m, &data).unwrap();
    let with = loss_total(&m, &pred, &data.targets, lambda).unwrap();
    let without = loss_total(&m, &pred, &data.targets, 0.0).unwrap();
    with == without + lambda * m.l1_norm()
}
