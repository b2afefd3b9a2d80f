use chebmps::exact::{matvec, mps_to_vector};
use chebmps::hamiltonian::{build_ising, build_xyz};
use chebmps::linalg::{eigvalsh, svd};
use chebmps::pauli::{bloch_state, sigma_x, sigma_y, sigma_z};
use chebmps::{Mpo, Mps, Truncation, C64};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_mps(n: usize, d: usize, seed: u64) -> Mps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mps::random(n, 2, d, &mut rng).unwrap()
}

fn y_plus(n: usize) -> Mps {
    Mps::from_product(&vec![bloch_state(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2); n]).unwrap()
}

fn vec_of(s: &Mps) -> Vec<C64> {
    mps_to_vector(s).unwrap().into_amps()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Amplitude matrix across the cut after `left` sites (site 0 is the least
/// significant bit of the vector index).
fn cut_matrix(v: &[C64], n: usize, left: usize) -> Array2<C64> {
    let dl = 1 << left;
    let dr = 1 << (n - left);
    Array2::from_shape_fn((dl, dr), |(i, j)| v[i + (j << left)])
}

/// `<v|h_(k,k+1)|v>` by direct index arithmetic.
fn pair_expectation(v: &[C64], h: &Array2<C64>, k: usize) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (idx, amp) in v.iter().enumerate() {
        let row = (((idx >> k) & 1) << 1) | ((idx >> (k + 1)) & 1);
        let base = idx & !(0b11 << k);
        for col in 0..4usize {
            let j = base | ((col >> 1) << k) | ((col & 1) << (k + 1));
            s += amp.conj() * h[[row, col]] * v[j];
        }
    }
    s
}

#[test]
fn y_plus_amplitudes() {
    let v = vec_of(&y_plus(4));
    for (idx, a) in v.iter().enumerate() {
        let ones = idx.count_ones() as i32;
        let want = C64::new(0.0, 1.0).powi(ones) * 0.25;
        assert!((a - want).norm() < 1e-14);
    }
}

#[test]
fn staggered_pattern_basis_state() {
    let bits = [0u8, 0, 1, 1, 0, 0, 1, 1];
    let v = vec_of(&Mps::basis(&bits).unwrap());
    let idx: usize = bits.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum();
    assert!((v[idx].norm() - 1.0).abs() < 1e-15);
    assert!((v.iter().map(|x| x.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn single_site_state() {
    let s = Mps::basis(&[0]).unwrap();
    assert_eq!(s.len(), 1);
    assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
}

#[test]
fn orthogonal_basis_states() {
    let a = Mps::basis(&[0; 6]).unwrap();
    let b = Mps::basis(&[1; 6]).unwrap();
    assert!(Mps::inner(&a, &b).unwrap().norm() < 1e-15);
    assert!((Mps::inner(&a, &a).unwrap() - 1.0).norm() < 1e-15);
}

#[test]
fn ghz_truncation_discards_half() {
    let a = Mps::basis(&[0; 6]).unwrap();
    let b = Mps::basis(&[1; 6]).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (mut ghz, w) = Mps::add(&[(C64::new(r, 0.0), &a), (C64::new(r, 0.0), &b)], Truncation::new(2, 0.0)).unwrap();
    assert!(w < 1e-14);
    assert_eq!(ghz.max_bond(), 2);
    let disc = ghz.compress(Truncation::new(1, 0.0)).unwrap();
    assert!((disc - 0.5).abs() < 1e-12, "{disc}");
}

#[test]
fn orthogonal_sum_norm() {
    let a = Mps::basis(&[0; 6]).unwrap();
    let b = Mps::basis(&[1; 6]).unwrap();
    let one = C64::new(1.0, 0.0);
    let (s, _) = Mps::add(&[(one, &a), (one, &b)], Truncation::new(2, 0.0)).unwrap();
    assert!((s.norm_sqr() - 2.0).abs() < 1e-12);
}

#[test]
fn center_cut_truncation_matches_vector_svd() {
    let n = 10;
    let s = random_mps(n, 32, 11);
    let v = vec_of(&s);
    let (_, sv, _) = svd(&cut_matrix(&v, n, n / 2)).unwrap();
    let total: f64 = sv.iter().map(|x| x * x).sum();
    let tail: f64 = sv.iter().skip(8).map(|x| x * x).sum();
    let mut t = s.clone();
    t.canonicalize(n / 2).unwrap();
    // only the centre bond exceeds 8 after a left-to-right pass from the centre
    let spec = t.schmidt(n / 2).unwrap();
    let kept: f64 = spec.values.iter().take(8).map(|x| x * x).sum::<f64>() / spec.values.iter().map(|x| x * x).sum::<f64>();
    assert!(((1.0 - kept) - tail / total).abs() < 1e-9);
}

#[test]
fn three_term_sum_matches_vectors() {
    let n = 8;
    let s: Vec<Mps> = (0..3).map(|k| random_mps(n, 4, 20 + k)).collect();
    let c = [C64::new(0.3, -0.2), C64::new(-1.1, 0.4), C64::new(0.7, 0.0)];
    let terms: Vec<(C64, &Mps)> = c.iter().cloned().zip(s.iter()).collect();
    let (sum, w) = Mps::add(&terms, Truncation::new(64, 0.0)).unwrap();
    assert!(w < 1e-20);
    let got = vec_of(&sum);
    let vs: Vec<Vec<C64>> = s.iter().map(vec_of).collect();
    for i in 0..got.len() {
        let want: C64 = (0..3).map(|k| c[k] * vs[k][i]).sum();
        assert!((got[i] - want).norm() < 1e-10);
    }
}

#[test]
fn mpo_application_matches_dense_matvec() {
    let m = build_ising(8, 1.0, -1.05, 0.5).unwrap();
    let p = y_plus(8);
    let (hp, _) = Mps::apply_mpo(&m.mpo, &p, Truncation::new(64, 0.0)).unwrap();
    let got = vec_of(&hp);
    let want = matvec(&m, &mps_to_vector(&p).unwrap()).unwrap();
    for (a, b) in got.iter().zip(want.amps()) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn identity_and_flip_mpos() {
    let s = random_mps(6, 4, 3);
    let (t, _) = Mps::apply_mpo(&Mpo::identity(6, 2), &s, Truncation::new(16, 0.0)).unwrap();
    assert!((Mps::fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);
    let flip = Mpo::product(&vec![sigma_x(); 6]).unwrap();
    let (t, _) = Mps::apply_mpo(&flip, &Mps::basis(&[0; 6]).unwrap(), Truncation::new(4, 0.0)).unwrap();
    assert!((Mps::fidelity(&t, &Mps::basis(&[1; 6]).unwrap()).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn paper_energies() {
    let m = build_ising(10, 1.0, -1.05, 0.5).unwrap();
    assert!(y_plus(10).expectation(&m.mpo).unwrap().norm() < 1e-12);
    let x = build_xyz(8, 1.1, -1.0, 0.9, 1.2).unwrap();
    let z = Mps::basis(&[0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
    assert!((z.expectation(&x.mpo).unwrap().re - 0.9).abs() < 1e-12);
}

#[test]
fn second_moment_on_y_plus() {
    // J^2 (N-1) + (g^2 + h^2) N at N = 20
    let m = build_ising(20, 1.0, -1.05, 0.5).unwrap();
    let want = 19.0 + (1.05f64.powi(2) + 0.25) * 20.0;
    assert!((y_plus(20).expectation2(&m.mpo).unwrap() - want).abs() < 1e-9);
    assert!((want - 46.05).abs() < 1e-12);
}

#[test]
fn entropies() {
    let mut p = y_plus(6);
    for cut in 1..6 {
        assert!(p.entropy(cut).unwrap().abs() < 1e-12);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let a = Mps::basis(&[0, 0]).unwrap();
    let b = Mps::basis(&[1, 1]).unwrap();
    let (mut bell, _) = Mps::add(&[(C64::new(r, 0.0), &a), (C64::new(r, 0.0), &b)], Truncation::new(2, 0.0)).unwrap();
    assert!((bell.entropy(1).unwrap() - 1.0).abs() < 1e-12);

    let n = 10;
    let mut s = random_mps(n, 32, 5);
    let v = vec_of(&s);
    let c = cut_matrix(&v, n, 5);
    let rho = c.dot(&c.t().mapv(|x| x.conj()));
    let eig = eigvalsh(&rho).unwrap();
    let want: f64 = eig.iter().filter(|&&p| p > 1e-300).map(|p| -p * p.log2()).sum();
    assert!((s.entropy(5).unwrap() - want).abs() < 1e-9);
}

#[test]
fn reduced_density_matrices() {
    let mut p = y_plus(6);
    let rho = p.rdm(2, 2).unwrap();
    assert!((rho.purity() - 1.0).abs() < 1e-12);
    let phi = bloch_state(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    for i in 0..4 {
        for j in 0..4 {
            // first site is the major index
            let want = phi[i >> 1] * phi[i & 1] * (phi[j >> 1] * phi[j & 1]).conj();
            assert!((rho.matrix[[i, j]] - want).norm() < 1e-12);
        }
    }

    let n = 10;
    let mut s = random_mps(n, 32, 6);
    let v = vec_of(&s);
    let rho = s.rdm(3, 4).unwrap();
    for a in 0..16usize {
        for b in 0..16usize {
            let mut want = C64::new(0.0, 0.0);
            for rest in 0..(1usize << (n - 4)) {
                let lo = rest & 0b111;
                let hi = rest >> 3;
                let place = |x: usize| {
                    // x is first-site-major over sites 3..7
                    let mut idx = lo | (hi << 7);
                    for k in 0..4 {
                        let bit = (x >> (3 - k)) & 1;
                        idx |= bit << (3 + k);
                    }
                    idx
                };
                want += v[place(a)] * v[place(b)].conj();
            }
            assert!((rho.matrix[[a, b]] - want).norm() < 1e-10);
        }
    }
}

#[test]
fn local_expectations() {
    let mut p = y_plus(5);
    assert!((p.local_expectation(&sigma_y(), 2, 1).unwrap().re - 1.0).abs() < 1e-12);
    assert!(p.local_expectation(&sigma_z(), 2, 1).unwrap().norm() < 1e-12);

    let m = build_ising(8, 1.0, -1.05, 0.5).unwrap();
    let mut s = random_mps(8, 8, 7);
    let v = mps_to_vector(&s).unwrap();
    for k in 0..7 {
        let got = s.local_expectation(&m.terms[k], k, 2).unwrap();
        let want = pair_expectation(v.amps(), &m.terms[k], k);
        assert!((got - want).norm() < 1e-10);
    }
}

#[test]
fn binary_round_trip() {
    let s = random_mps(7, 6, 8);
    let mut buf = Vec::new();
    s.write_to(&mut buf).unwrap();
    let t = Mps::read_from(buf.as_slice()).unwrap();
    assert_eq!(s.bond_dims(), t.bond_dims());
    for (a, b) in s.sites().iter().zip(t.sites()) {
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_matches_vector_dot(n in 2usize..8, d in 1usize..6, seed in 0u64..500) {
        let a = random_mps(n, d, seed);
        let b = random_mps(n, d + 1, seed + 1000);
        let want = dot(&vec_of(&a), &vec_of(&b));
        prop_assert!((Mps::inner(&a, &b).unwrap() - want).norm() < 1e-10);
    }

    #[test]
    fn canonical_forms_are_isometric(n in 2usize..8, center_frac in 0.0f64..1.0, seed in 0u64..500) {
        let center = ((n as f64 - 1.0) * center_frac).round() as usize;
        let mut s = random_mps(n, 5, seed);
        let before = vec_of(&s);
        s.canonicalize(center).unwrap();
        for i in 0..n {
            let a = s.site(i);
            let (l, dd, r) = a.dim();
            if i < center {
                let m = a.to_shape((l * dd, r)).unwrap();
                let g = m.t().mapv(|x| x.conj()).dot(&m);
                for p in 0..r { for q in 0..r {
                    let want = if p == q { 1.0 } else { 0.0 };
                    prop_assert!((g[[p, q]] - want).norm() < 1e-10);
                }}
            } else if i > center {
                let m = a.to_shape((l, dd * r)).unwrap();
                let g = m.dot(&m.t().mapv(|x| x.conj()));
                for p in 0..l { for q in 0..l {
                    let want = if p == q { 1.0 } else { 0.0 };
                    prop_assert!((g[[p, q]] - want).norm() < 1e-10);
                }}
            }
        }
        let after = vec_of(&s);
        let f = dot(&before, &after).norm_sqr() / (dot(&before, &before).re * dot(&after, &after).re);
        prop_assert!((f - 1.0).abs() < 1e-12);
        let mut twice = s.clone();
        twice.canonicalize(center).unwrap();
        prop_assert!((Mps::fidelity(&s, &twice).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compression_within_bond_is_lossless(n in 2usize..9, d in 1usize..6, seed in 0u64..500) {
        let s = random_mps(n, d, seed);
        let mut t = s.clone();
        let w = t.compress(Truncation::new(d, 0.0)).unwrap();
        prop_assert!(w < 1e-20);
        prop_assert!((Mps::fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_states_keep_unit_bonds(n in 1usize..10, seed in 0u64..500, center_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let local: Vec<[C64; 2]> = (0..n).map(|_| {
            use rand::Rng;
            bloch_state(rng.random::<f64>() * 3.0, rng.random::<f64>() * 6.0)
        }).collect();
        let mut s = Mps::from_product(&local).unwrap();
        let center = ((n as f64 - 1.0) * center_frac).round() as usize;
        s.canonicalize(center).unwrap();
        prop_assert_eq!(s.max_bond(), 1);
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
