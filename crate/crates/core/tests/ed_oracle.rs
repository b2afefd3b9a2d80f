use std::f64::consts::PI;

use chebmps::exact::*;
use chebmps::filter::predicted_delta_cos_full;
use chebmps::hamiltonian::{build_field_only, build_ising, build_xyz};
use chebmps::pauli::bloch_state;
use chebmps::C64;
use ndarray::Array1;
use proptest::prelude::*;

fn y_plus(n: usize) -> StateVector {
    StateVector::from_product(&vec![bloch_state(PI / 2.0, PI / 2.0); n]).unwrap()
}

fn diff_norm(a: &StateVector, b: &StateVector) -> f64 {
    a.amps().iter().zip(b.amps()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn dense_eigenvectors_satisfy_eigen_equation() {
    let m = build_xyz(8, 1.1, -1.0, 0.9, 1.2).unwrap();
    let (e, vecs) = dense_eigensystem(&m).unwrap();
    for k in [0, 17, 255] {
        let v = StateVector::new(8, vecs.column(k).to_vec()).unwrap();
        let hv = matvec(&m, &v).unwrap();
        for (a, b) in hv.amps().iter().zip(v.amps()) {
            assert!((a - b * e[k]).norm() < 1e-10);
        }
    }
}

#[test]
fn y_plus_energy_and_variance() {
    let m = build_ising(12, 1.0, -1.05, 0.5).unwrap();
    let v = y_plus(12);
    assert!(v.dot(&matvec(&m, &v).unwrap()).unwrap().norm() < 1e-12);
    let m = build_ising(20, 1.0, -1.05, 0.5).unwrap();
    assert!((exact_variance(&y_plus(20), &m).unwrap() - 46.05).abs() < 1e-8);
}

#[test]
fn zero_order_filter_is_identity() {
    let m = build_ising(8, 1.0, -1.05, 0.5).unwrap();
    let v = StateVector::random(8, 3).unwrap();
    let out = exact_cheby_filter(&v, &m, 0, 0.0, 0.5).unwrap();
    assert!((out.fidelity(&v).unwrap() - 1.0).abs() < 1e-14);
    let out = cosine_filter_exact(&v, &m, 0, 0.0).unwrap();
    assert!((out.fidelity(&v).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn propagation_matches_eigendecomposition() {
    let m = build_ising(8, 1.0, -1.05, 0.5).unwrap();
    let (e, vecs) = dense_eigensystem(&m).unwrap();
    let v = StateVector::random(8, 9).unwrap();
    let theta = 0.73;
    let got = propagate(&v, &m, theta, 0.2).unwrap();
    let coeffs = chebmps::linalg::adjoint(&vecs).dot(&Array1::from(v.amps().to_vec()));
    let phased = Array1::from_shape_fn(e.len(), |k| coeffs[k] * C64::from_polar(1.0, theta * (e[k] - 0.2)));
    let want = vecs.dot(&phased);
    for (a, b) in got.amps().iter().zip(want.iter()) {
        assert!((a - b).norm() < 1e-10);
    }
    assert!((exact_evolution_overlap(&v, &m, 0).unwrap() - 1.0).norm() < 1e-12);
}

#[test]
fn gaussian_overlap_law() {
    let n = 16;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let p = y_plus(n);
    let sigma = exact_variance(&p, &m).unwrap().sqrt();
    let mut checked = 0;
    for k in 1..=6 {
        let got = -exact_evolution_overlap(&p, &m, k).unwrap().norm_sqr().ln();
        let want = (2.0 * k as f64 * sigma / n as f64).powi(2);
        if want >= 0.05 {
            assert!(((got - want) / want).abs() < 0.2, "k = {k}: {got} vs {want}");
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn cosine_filter_width() {
    let n = 10;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let p = y_plus(n);
    let order = n * n;
    let out = cosine_filter_exact(&p, &m, order, 0.0).unwrap();
    let got = exact_variance(&out, &m).unwrap().sqrt();
    // eigenbasis oracle: reweight the local density of states by cos^2M(E/N)
    let dos = local_dos_check(&p, &m, 10).unwrap();
    let (mut w, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for (e, wt) in dos.energies.iter().zip(&dos.weights) {
        let f = (e / n as f64).cos().powi(2 * order as i32) * wt;
        w += f;
        e1 += f * e;
        e2 += f * e * e;
    }
    let oracle = (e2 / w - (e1 / w).powi(2)).sqrt();
    assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    // the Gaussian prediction holds only up to the spectral graininess of a
    // short chain (17% here, 11% at N = 12)
    let want = predicted_delta_cos_full(n, order, dos.sigma);
    assert!(((got - want) / want).abs() < 0.2, "{got} vs {want}");
}

#[test]
fn binomial_window_truncation() {
    let n = 10;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let p = y_plus(n);
    let order = 100;
    let full = cosine_filter_exact(&p, &m, order, 0.0).unwrap();
    let cut = cosine_filter_binomial(&p, &m, order, 0.0, 2.0).unwrap();
    let err = diff_norm(&full, &cut);
    assert!(err < 1e-3, "{err}");
    // the whole window reproduces the product form
    let all = cosine_filter_binomial(&p, &m, order, 0.0, 10.0).unwrap();
    assert!(diff_norm(&full, &all) < 1e-9);
}

#[test]
fn local_density_of_states() {
    let n = 10;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let p = y_plus(n);
    let dos = local_dos_check(&p, &m, 40).unwrap();
    assert!(dos.ks < 0.08, "{}", dos.ks);
    assert!((dos.mean - exact_energy(&p, &m).unwrap()).abs() < 1e-10);
    assert!((dos.sigma.powi(2) - exact_variance(&p, &m).unwrap()).abs() < 1e-8);
    let hist_total: f64 = dos.histogram.iter().map(|h| h.1).sum();
    assert!((hist_total - 1.0).abs() < 1e-12);

    let f = build_field_only(6, 1.0).unwrap();
    let up = StateVector::basis(&[0; 6]).unwrap();
    let dos = local_dos_check(&up, &f, 10).unwrap();
    assert_eq!(dos.sigma, 0.0);
    assert!((dos.mean - 6.0).abs() < 1e-12);
    assert!(dos.ks < 1e-12);
}

#[test]
fn size_limits() {
    let m = build_ising(25, 1.0, -1.05, 0.5).unwrap();
    assert!(VectorOperator::new(&m).is_err() || StateVector::zeros(25).is_err());
}

#[test]
fn bessel_normalization() {
    let j = bessel_j(7.5, 60);
    let s: f64 = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    assert!((s - 1.0).abs() < 1e-13);
    // J_0(1) and J_1(1)
    let j = bessel_j(1.0, 30);
    assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
    assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matvec_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let m = build_ising(7, 1.0, -1.05, 0.5).unwrap();
        let x = StateVector::random(7, seed).unwrap();
        let y = StateVector::random(7, seed + 5000).unwrap();
        let combo: Vec<C64> = x.amps().iter().zip(y.amps()).map(|(p, q)| p * a + q * b).collect();
        let lhs = matvec(&m, &StateVector::new(7, combo).unwrap()).unwrap();
        let hx = matvec(&m, &x).unwrap();
        let hy = matvec(&m, &y).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs.amps()[i] - (hx.amps()[i] * a + hy.amps()[i] * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn propagation_is_unitary(seed in 0u64..1000, theta in -3.0f64..3.0) {
        let m = build_xyz(8, 1.1, -1.0, 0.9, 1.2).unwrap();
        let v = StateVector::random(8, seed).unwrap();
        let u = propagate(&v, &m, theta, 0.0).unwrap();
        prop_assert!((u.norm() - v.norm()).abs() < 1e-10);
        // and invertible
        let back = propagate(&u, &m, -theta, 0.0).unwrap();
        prop_assert!(diff_norm(&back, &v) < 1e-9);
    }
}
