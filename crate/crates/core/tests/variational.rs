use chebmps::exact::{dense_eigensystem, exact_energy, exact_variance, mps_to_vector, vector_to_mps, StateVector};
use chebmps::hamiltonian::{build_ising, build_staggered_heisenberg};
use chebmps::pauli::bloch_state;
use chebmps::variational::*;
use chebmps::{Mps, Truncation, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn local_cost_against_state_vector() {
    let m = build_ising(8, 1.0, -1.05, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = Mps::random(8, 2, 6, &mut rng).unwrap();
    for site in [0, 3, 7] {
        let env = LocalEnvironment::at(&mut s, &m.mpo, site, 0.4, 2.0).unwrap();
        let c = env.cost(s.site(site)).unwrap();
        let v = mps_to_vector(&s).unwrap();
        let e = exact_energy(&v, &m).unwrap() / v.norm().powi(2);
        let var = exact_variance(&v, &m).unwrap();
        assert!((c.energy - e).abs() < 1e-10);
        assert!((c.variance - var).abs() < 1e-9);
        assert!((c.cost - (var + 2.0 * (e - 0.4).powi(2))).abs() < 1e-9);
    }
}

#[test]
fn eigenstate_is_a_fixed_point() {
    let n = 6;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let (e, vecs) = dense_eigensystem(&m).unwrap();
    let k = 20;
    let v = StateVector::new(n, vecs.column(k).to_vec()).unwrap();
    let mut s0 = vector_to_mps(&v, Truncation::new(8, 0.0)).unwrap();
    for site in [0, 2, 5] {
        let env = LocalEnvironment::at(&mut s0, &m.mpo, site, e[k], 1.0).unwrap();
        let (c, g) = local_cost_and_gradient(&env, s0.site(site)).unwrap();
        assert!(c.cost < 1e-10);
        assert!(g.iter().all(|x| x.norm() < 1e-8));
    }
    let opts = VarOpts {
        d_max: 8,
        e0: e[k],
        lambda: Some(1.0),
        max_sweeps: 3,
        restarts: 0,
        ..Default::default()
    };
    let r = minimize_variance(&s0, &m, &opts).unwrap();
    assert!(r.variance < 1e-9, "{}", r.variance);
    assert!((r.energy - e[k]).abs() < 1e-6);
    assert!(Mps::fidelity(&r.state, &s0).unwrap() > 1.0 - 1e-6);
}

#[test]
fn cost_never_increases_and_variance_drops() {
    let n = 10;
    let m = build_ising(n, 1.0, -1.05, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s0 = Mps::random(n, 2, 4, &mut rng).unwrap();
    let var0 = chebmps::analysis::variance(&s0, &m).unwrap();
    let opts = VarOpts {
        d_max: 4,
        max_sweeps: 6,
        inner_steps: 60,
        restarts: 1,
        ..Default::default()
    };
    let r = minimize_variance(&s0, &m, &opts).unwrap();
    for w in r.trace.windows(2) {
        assert!(w[1].cost <= w[0].cost * (1.0 + 1e-9) + 1e-12, "{:?}", r.trace);
    }
    assert!(r.variance < var0);
    assert!(r.state.max_bond() <= 4);
    // reported numbers agree with a state-vector evaluation
    let v = mps_to_vector(&r.state).unwrap();
    assert!((exact_variance(&v, &m).unwrap() - r.variance).abs() < 1e-8);
}

#[test]
fn staggered_products_reach_zero_variance() {
    let n = 10;
    let m = build_staggered_heisenberg(n).unwrap();
    let local: Vec<[C64; 2]> = (0..n).map(|i| bloch_state(1.0 + 0.04 * (i % 4) as f64, -0.2 + 0.03 * i as f64)).collect();
    let s0 = Mps::from_product(&local).unwrap();
    let opts = VarOpts {
        d_max: 1,
        e0: 1.0,
        lambda: Some(1.0),
        max_sweeps: 80,
        restarts: 0,
        tol: 1e-13,
        ..Default::default()
    };
    let r = minimize_variance(&s0, &m, &opts).unwrap();
    assert!(r.variance <= 1e-10, "{}", r.variance);
    assert!((r.energy - 1.0).abs() < 1e-4);
}

#[test]
fn rejects_bad_input() {
    let m = build_ising(6, 1.0, -1.05, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = Mps::random(6, 2, 8, &mut rng).unwrap();
    let opts = VarOpts {
        d_max: 4,
        ..Default::default()
    };
    assert!(minimize_variance(&s, &m, &opts).is_err());
    let short = Mps::random(5, 2, 2, &mut rng).unwrap();
    assert!(minimize_variance(&short, &m, &VarOpts::default()).is_err());
    let bad = VarOpts {
        lambda: Some(-1.0),
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn trace_csv_has_one_row_per_sweep() {
    let m = build_ising(6, 1.0, -1.05, 0.5).unwrap();
    let s0 = Mps::from_product(&[bloch_state(1.0, 0.3); 6]).unwrap();
    let opts = VarOpts {
        d_max: 2,
        max_sweeps: 3,
        inner_steps: 20,
        restarts: 0,
        ..Default::default()
    };
    let r = minimize_variance(&s0, &m, &opts).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("sweep,cost,variance,energy,seconds"));
    assert_eq!(text.lines().count(), r.trace.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..500, site in 0usize..7, e0 in -2.0f64..2.0) {
        let m = build_ising(7, 1.0, -1.05, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Mps::random(7, 2, 4, &mut rng).unwrap();
        let env = LocalEnvironment::at(&mut s, &m.mpo, site, e0, 0.8).unwrap();
        let a = s.site(site).clone();
        let (_, g) = local_cost_and_gradient(&env, &a).unwrap();
        let scale = g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(1e-8);
        let h = 1e-5;
        let (d0, d1, d2) = a.dim();
        let idx = [seed as usize % d0, (seed as usize / 3) % d1, (seed as usize / 7) % d2];
        for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            let mut p = a.clone();
            p[idx] += dir * h;
            let mut q = a.clone();
            q[idx] -= dir * h;
            let fd = (env.cost(&p).unwrap().cost - env.cost(&q).unwrap().cost) / (2.0 * h);
            let an = if dir.re != 0.0 { g[idx].re } else { g[idx].im };
            prop_assert!((fd - an).abs() <= 1e-5 * scale, "fd {} analytic {}", fd, an);
        }
    }
}
