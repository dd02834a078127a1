use effcov::fisher::{integrated_bound, local_fisher};
use effcov::matcore::SymMatrix;
use effcov::model::BlockModel;
use nalgebra::DMatrix;

fn scalar_path(m: usize, sigma2: impl Fn(f64) -> f64) -> BlockModel {
    let sigma = (0..m)
        .map(|k| SymMatrix::from_rows(&[vec![sigma2(k as f64 / m as f64)]]).unwrap())
        .collect();
    BlockModel::from_parts(sigma, vec![vec![1.0]; m], 100_000_000, 4.0).unwrap()
}

fn bound_11(m: usize) -> f64 {
    integrated_bound(&scalar_path(m, |t| 1.0 + t), None).unwrap()[(0, 0)]
}

// Local bound for d = 1 is 8ξσ³.
fn local(t: f64) -> f64 {
    8.0 * (1.0 + t).powf(1.5)
}

#[test]
fn constant_path_gives_the_local_bound() {
    let s = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
    let xi = [1.0, 1.7];
    let m = 7;
    let model = BlockModel::from_parts(vec![s.clone(); m], vec![xi.iter().map(|x| x * x).collect(); m], 1_000_000, 4.0)
        .unwrap();
    let got = integrated_bound(&model, None).unwrap();
    let want = local_fisher(0.0, &s, &xi).unwrap().bound();
    assert!((got - want).abs().max() < 1e-12);
}

#[test]
fn scalar_bm_bound_is_eight_sigma_cubed() {
    let got = integrated_bound(&scalar_path(3, |_| 2.25), None).unwrap();
    assert!((got[(0, 0)] - 8.0 * 3.375).abs() < 1e-12);
}

#[test]
fn linear_path_matches_fine_quadrature_of_the_block_integrand() {
    let m = 1000;
    let q = 1_000_000;
    let quad: f64 = (0..q)
        .map(|i| {
            let t = (i as f64 + 0.5) / q as f64;
            local((t * m as f64).floor() / m as f64)
        })
        .sum::<f64>()
        / q as f64;
    assert!((bound_11(m) - quad).abs() < 1e-4);
}

#[test]
fn linear_path_converges_at_first_order() {
    let exact = 8.0 * (2f64.powf(2.5) - 1.0) / 2.5;
    let jump = local(1.0) - local(0.0);
    let (e500, e1000) = (bound_11(500) - exact, bound_11(1000) - exact);
    assert!((e500 / e1000 - 2.0).abs() < 0.01);
    // Left-endpoint sums undershoot by (f(1) − f(0))/(2m) to first order.
    assert!((e1000 + jump / 2000.0).abs() < 1e-5);
}

#[test]
fn identity_gradient_equals_no_gradient() {
    let model = scalar_path(10, |t| 1.0 + t * t);
    let id = |_k: usize| DMatrix::<f64>::identity(1, 1);
    let a = integrated_bound(&model, Some(&id)).unwrap();
    let b = integrated_bound(&model, None).unwrap();
    assert!((a - &b).abs().max() < 1e-12);
    let twice = |_k: usize| DMatrix::<f64>::from_element(1, 1, 2.0);
    let c = integrated_bound(&model, Some(&twice)).unwrap();
    assert!((c[(0, 0)] - 4.0 * b[(0, 0)]).abs() < 1e-10);
}

#[test]
fn gradient_with_wrong_width_is_rejected() {
    let model = scalar_path(4, |_| 1.0);
    let bad = |_k: usize| DMatrix::<f64>::identity(1, 2);
    assert!(integrated_bound(&model, Some(&bad)).is_err());
}
