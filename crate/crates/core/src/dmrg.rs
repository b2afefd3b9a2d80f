//! Two-site DMRG, only as accurate as the spectral-edge estimate needs.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Truncation};
use crate::mpo::Mpo;
use crate::mps::{transfer_one, Mps};
use crate::tensor::{contract, Tensor};

#[derive(Clone, Debug)]
pub struct DmrgOpts {
    pub d_max: usize,
    pub max_sweeps: usize,
    /// Sweeps stop once the energy changes by less than this (relative).
    pub tol: f64,
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for DmrgOpts {
    fn default() -> Self {
        Self {
            d_max: 32,
            max_sweeps: 12,
            tol: 1e-8,
            krylov_dim: 24,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DmrgResult {
    pub energy: f64,
    pub state: Mps,
    pub sweeps: usize,
    pub converged: bool,
}

/// Right environment step; indices `(bra, mpo, ket)`.
fn transfer_right(env: &Tensor, a: &Array3<C64>, w: &ndarray::Array4<C64>) -> Result<Tensor> {
    let ket = Tensor::from_array(a.clone().into_dyn());
    let bra = Tensor::from_array(a.mapv(|x| x.conj()).into_dyn());
    let wt = Tensor::from_array(w.clone().into_dyn());
    let x = contract(&ket, env, &[(2, 2)])?; // (b, t, a', w')
    let y = contract(&x, &wt, &[(1, 2), (3, 3)])?; // (b, a', w, s)
    let z = contract(&bra, &y, &[(1, 3), (2, 1)])?; // (a, b, w)
    z.permuted(&[0, 2, 1])
}

struct TwoSiteOp<'a> {
    left: &'a Tensor,
    w1: Tensor,
    w2: Tensor,
    right: &'a Tensor,
    shape: Vec<usize>,
}

impl TwoSiteOp<'_> {
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let theta = Tensor::from_shape_vec(&self.shape, v.to_vec())?;
        let x = contract(self.left, &theta, &[(2, 0)])?; // (a', w, s1, s2, b)
        let y = contract(&x, &self.w1, &[(1, 0), (2, 2)])?; // (a', s2, b, s1', w')
        let z = contract(&y, &self.w2, &[(4, 0), (1, 2)])?; // (a', b, s1', s2', w'')
        let out = contract(&z, self.right, &[(1, 2), (4, 1)])?; // (a', s1', s2', b')
        Ok(out.as_slice().to_vec())
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of a Hermitian operator by Lanczos with full
/// reorthogonalization, restarted from the current Ritz vector.
pub fn lanczos<F>(apply: F, start: &[C64], krylov_dim: usize, restarts: usize) -> Result<(f64, Vec<C64>)>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let dim = start.len();
    let mut v0: Vec<C64> = start.to_vec();
    let nrm = norm(&v0);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    v0.iter_mut().for_each(|x| *x /= nrm);
    let mut best = (f64::INFINITY, v0.clone());
    for _ in 0..=restarts {
        let k_max = krylov_dim.min(dim).max(1);
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for k in 0..k_max {
            let mut w = apply(&basis[k])?;
            let a = dot(&basis[k], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let bn = norm(&w);
            if k + 1 == k_max || bn < 1e-12 {
                break;
            }
            beta.push(bn);
            w.iter_mut().for_each(|x| *x /= bn);
            basis.push(w);
        }
        let m = alpha.len();
        let mut t = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            t[[i, i]] = alpha[i];
            if i + 1 < m {
                t[[i, i + 1]] = beta[i];
                t[[i + 1, i]] = beta[i];
            }
        }
        let (ev, vecs) = linalg::eigh_real(t)?;
        let mut ritz = vec![C64::new(0.0, 0.0); dim];
        for (i, b) in basis.iter().enumerate().take(m) {
            let c = vecs[[i, 0]];
            ritz.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        let rn = norm(&ritz);
        ritz.iter_mut().for_each(|x| *x /= rn);
        let improved = best.0 - ev[0];
        best = (ev[0], ritz.clone());
        if m < k_max || improved.abs() < 1e-13 * ev[0].abs().max(1.0) {
            break;
        }
        v0 = ritz;
    }
    Ok(best)
}

/// Lowest-energy MPS of `h` by two-site sweeps.
pub fn ground_state(h: &Mpo, opts: &DmrgOpts) -> Result<DmrgResult> {
    let n = h.len();
    let d = h.phys_dim();
    let trunc = Truncation::new(opts.d_max, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut s = Mps::random(n, d, opts.d_max.min(8), &mut rng)?;

    if n == 1 {
        let w = h.site(0);
        let m = Array2::from_shape_fn((d, d), |(i, j)| w[[0, i, j, 0]]);
        let (ev, vecs) = linalg::eigh(&m)?;
        let v = vecs.column(0).to_owned();
        let site = Array3::from_shape_vec((1, d, 1), v.to_vec())?;
        return Ok(DmrgResult {
            energy: ev[0],
            state: Mps::from_tensors(vec![site])?.canonicalized(0)?,
            sweeps: 0,
            converged: true,
        });
    }

    s.canonicalize(0)?;
    let one = || Tensor::from_shape_vec(&[1, 1, 1], vec![C64::new(1.0, 0.0)]).expect("scalar");
    let mut right: Vec<Tensor> = vec![one(); n + 1];
    for i in (1..n).rev() {
        right[i] = transfer_right(&right[i + 1], s.site(i), h.site(i))?;
    }
    let mut left: Vec<Tensor> = vec![one(); n + 1];
    let mut sites: Vec<Array3<C64>> = s.sites().to_vec();

    let mut energy = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..opts.max_sweeps {
        sweeps = sweep + 1;
        let prev = energy;
        // left to right
        for i in 0..n - 1 {
            let (e, u, sv) = optimize_pair(&left[i], &right[i + 2], h, &sites, i, trunc, opts, true)?;
            energy = e;
            sites[i] = u;
            sites[i + 1] = sv;
            left[i + 1] = transfer_one(&left[i], &sites[i], h.site(i), &sites[i])?;
        }
        // right to left
        for i in (0..n - 1).rev() {
            let (e, us, v) = optimize_pair(&left[i], &right[i + 2], h, &sites, i, trunc, opts, false)?;
            energy = e;
            sites[i] = us;
            sites[i + 1] = v;
            right[i + 1] = transfer_right(&right[i + 2], &sites[i + 1], h.site(i + 1))?;
        }
        if (prev - energy).abs() <= opts.tol * energy.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let state = Mps::from_tensors(sites)?.canonicalized(0)?;
    Ok(DmrgResult {
        energy,
        state,
        sweeps,
        converged,
    })
}

#[allow(clippy::too_many_arguments)]
fn optimize_pair(
    left: &Tensor,
    right: &Tensor,
    h: &Mpo,
    sites: &[Array3<C64>],
    i: usize,
    trunc: Truncation,
    opts: &DmrgOpts,
    moving_right: bool,
) -> Result<(f64, Array3<C64>, Array3<C64>)> {
    let (l, d, _) = sites[i].dim();
    let (_, _, r) = sites[i + 1].dim();
    let a = sites[i].view().into_shape_with_order((l * d, sites[i].dim().2))?;
    let b = sites[i + 1].view().into_shape_with_order((sites[i + 1].dim().0, d * r))?;
    let theta = a.dot(&b);
    let op = TwoSiteOp {
        left,
        w1: Tensor::from_array(h.site(i).clone().into_dyn()),
        w2: Tensor::from_array(h.site(i + 1).clone().into_dyn()),
        right,
        shape: vec![l, d, d, r],
    };
    let start: Vec<C64> = theta.iter().cloned().collect();
    let (e, v) = lanczos(|x| op.apply(x), &start, opts.krylov_dim, 2)?;
    let m = Array2::from_shape_vec((l * d, d * r), v)?;
    let svd = linalg::svd_truncate(&m, &trunc)?;
    let k = svd.s.len();
    let sv = Array1::from(svd.s);
    if moving_right {
        let u = svd.u.into_shape_with_order((l, d, k))?;
        let mut rest = svd.vt;
        for (mut row, &x) in rest.rows_mut().into_iter().zip(sv.iter()) {
            row.mapv_inplace(|y| y * x);
        }
        Ok((e, u, rest.into_shape_with_order((k, d, r))?))
    } else {
        let v = svd.vt.into_shape_with_order((k, d, r))?;
        let mut rest = svd.u;
        for (mut col, &x) in rest.columns_mut().into_iter().zip(sv.iter()) {
            col.mapv_inplace(|y| y * x);
        }
        Ok((e, rest.as_standard_layout().into_owned().into_shape_with_order((l, d, k))?, v))
    }
}
