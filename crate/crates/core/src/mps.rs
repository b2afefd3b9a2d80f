//! Open-boundary matrix-product states.
//!
//! Site tensors are indexed `(left, physical, right)` with boundary bonds of
//! dimension one. The represented vector is `exp(log_norm)` times the plain
//! contraction of the site tensors; canonicalization moves the norm of the
//! center tensor into `log_norm` so long filter runs neither overflow nor
//! underflow.

use std::io::{Read, Write};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Truncation};
use crate::mpo::Mpo;
use crate::tensor::{contract, SchmidtSpectrum, Tensor};

/// Largest window for which [`Mps::rdm`] builds a dense density matrix.
pub const MAX_RDM_SITES: usize = 10;

#[derive(Clone, Debug)]
pub struct Mps {
    sites: Vec<Array3<C64>>,
    center: Option<usize>,
    log_norm: f64,
}

fn matrix_rows(a: &Array3<C64>) -> ArrayView2<'_, C64> {
    let (l, d, r) = a.dim();
    a.view().into_shape_with_order((l * d, r)).expect("standard layout")
}

fn matrix_cols(a: &Array3<C64>) -> ArrayView2<'_, C64> {
    let (l, d, r) = a.dim();
    a.view().into_shape_with_order((l, d * r)).expect("standard layout")
}

fn to_site(m: Array2<C64>, shape: (usize, usize, usize)) -> Array3<C64> {
    let m = if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    };
    m.into_shape_with_order(shape).expect("matching size")
}

impl Mps {
    /// Builds a state from raw site tensors; no canonical form is assumed.
    pub fn from_tensors(sites: Vec<Array3<C64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidArgument("MPS needs at least one site".into()));
        }
        let d = sites[0].dim().1;
        for (i, a) in sites.iter().enumerate() {
            if a.dim().1 != d {
                return Err(Error::ShapeMismatch(format!("site {i} has physical dim {}", a.dim().1)));
            }
            if i + 1 < sites.len() && a.dim().2 != sites[i + 1].dim().0 {
                return Err(Error::ShapeMismatch(format!("bond mismatch after site {i}")));
            }
        }
        if sites[0].dim().0 != 1 || sites[sites.len() - 1].dim().2 != 1 {
            return Err(Error::ShapeMismatch("boundary bonds must be 1".into()));
        }
        let sites = sites
            .into_iter()
            .map(|a| if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() })
            .collect();
        Ok(Self {
            sites,
            center: None,
            log_norm: 0.0,
        })
    }

    /// Product state from normalized single-site vectors.
    pub fn from_product(local: &[[C64; 2]]) -> Result<Self> {
        if local.is_empty() {
            return Err(Error::InvalidArgument("empty product state".into()));
        }
        let mut sites = Vec::with_capacity(local.len());
        for v in local {
            let n2 = v[0].norm_sqr() + v[1].norm_sqr();
            if (n2 - 1.0).abs() > 1e-12 {
                return Err(Error::NotNormalized(n2));
            }
            let mut a = Array3::zeros((1, 2, 1));
            a[[0, 0, 0]] = v[0];
            a[[0, 1, 0]] = v[1];
            sites.push(a);
        }
        Ok(Self {
            sites,
            center: Some(0),
            log_norm: 0.0,
        })
    }

    /// Computational basis state `|b_0 b_1 ...>`.
    pub fn basis(bits: &[u8]) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let local: Vec<[C64; 2]> = bits
            .iter()
            .map(|&b| if b == 0 { [one, zero] } else { [zero, one] })
            .collect();
        Self::from_product(&local)
    }

    /// Random state with complex Gaussian entries and bond dimensions
    /// `min(d^l, d^(n-l), d_max)`; normalized and canonical at site 0.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, d_max: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || d_max == 0 {
            return Err(Error::InvalidArgument("random MPS needs n, d_max > 0".into()));
        }
        let bond = |l: usize| -> usize {
            let left = (d as f64).powi(l as i32);
            let right = (d as f64).powi((n - l) as i32);
            left.min(right).min(d_max as f64) as usize
        };
        let sites = (0..n)
            .map(|i| {
                Array3::from_shape_fn((bond(i), d, bond(i + 1)), |_| {
                    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                })
            })
            .collect();
        let mut m = Self::from_tensors(sites)?;
        m.canonicalize(0)?;
        m.log_norm = 0.0;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.sites[0].dim().1
    }

    pub fn site(&self, i: usize) -> &Array3<C64> {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[Array3<C64>] {
        &self.sites
    }

    pub(crate) fn sites_mut(&mut self) -> &mut [Array3<C64>] {
        &mut self.sites
    }

    pub(crate) fn set_center(&mut self, c: Option<usize>) {
        self.center = c;
    }

    pub(crate) fn set_log_norm(&mut self, v: f64) {
        self.log_norm = v;
    }

    pub fn tensor(&self, i: usize) -> Tensor {
        Tensor::from_array(self.sites[i].clone().into_dyn())
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Bond dimensions including the two boundary bonds (length `n + 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.sites.iter().map(|a| a.dim().0).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn check_site(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::OutOfRange {
                index: i,
                limit: self.len(),
            });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Mps) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        if self.phys_dim() != other.phys_dim() {
            return Err(Error::ShapeMismatch("physical dimensions differ".into()));
        }
        Ok(())
    }

    /// Multiplies the state by a complex scalar.
    pub fn scale(&mut self, c: C64) {
        let r = c.norm();
        if r == 0.0 {
            self.sites[0].fill(C64::new(0.0, 0.0));
            self.center = None;
            return;
        }
        let phase = c / r;
        let idx = self.center.unwrap_or(0);
        self.sites[idx].mapv_inplace(|x| x * phase);
        self.log_norm += r.ln();
    }

    pub(crate) fn left_orthonormalize(&mut self, i: usize) -> Result<()> {
        let (l, d, _) = self.sites[i].dim();
        let (q, r) = linalg::qr(&matrix_rows(&self.sites[i]))?;
        let k = q.dim().1;
        self.sites[i] = to_site(q, (l, d, k));
        let (_, d2, r2) = self.sites[i + 1].dim();
        let next = r.dot(&matrix_cols(&self.sites[i + 1]));
        self.sites[i + 1] = to_site(next, (k, d2, r2));
        Ok(())
    }

    pub(crate) fn right_orthonormalize(&mut self, i: usize) -> Result<()> {
        let (_, d, r) = self.sites[i].dim();
        let (lmat, q) = linalg::lq(&matrix_cols(&self.sites[i]))?;
        let k = q.dim().0;
        self.sites[i] = to_site(q, (k, d, r));
        let (l0, d0, _) = self.sites[i - 1].dim();
        let prev = matrix_rows(&self.sites[i - 1]).dot(&lmat);
        self.sites[i - 1] = to_site(prev, (l0, d0, k));
        Ok(())
    }

    pub(crate) fn normalize_center(&mut self, c: usize) -> Result<()> {
        let nrm = linalg::frobenius(&self.sites[c]);
        if !nrm.is_finite() {
            return Err(Error::NonFinite("canonicalization"));
        }
        if nrm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        self.sites[c].mapv_inplace(|x| x / nrm);
        self.log_norm += nrm.ln();
        self.center = Some(c);
        Ok(())
    }

    /// Mixed-canonical form around `center`: left-isometries to its left,
    /// right-isometries to its right, unit-norm center tensor.
    pub fn canonicalize(&mut self, center: usize) -> Result<()> {
        self.check_site(center)?;
        let n = self.len();
        match self.center {
            Some(c0) => {
                for i in c0..center {
                    self.left_orthonormalize(i)?;
                }
                for i in (center + 1..=c0).rev() {
                    self.right_orthonormalize(i)?;
                }
            }
            None => {
                for i in 0..center {
                    self.left_orthonormalize(i)?;
                }
                for i in (center + 1..n).rev() {
                    self.right_orthonormalize(i)?;
                }
            }
        }
        self.normalize_center(center)
    }

    pub fn canonicalized(mut self, center: usize) -> Result<Self> {
        self.canonicalize(center)?;
        Ok(self)
    }

    /// Makes the state unit-norm (and canonical if it was not).
    pub fn normalize(&mut self) -> Result<()> {
        let c = self.center.unwrap_or(0);
        self.canonicalize(c)?;
        self.log_norm = 0.0;
        Ok(())
    }

    /// Right-to-left SVD sweep after left-canonicalization. Returns the
    /// accumulated discarded weight; the result is canonical at site 0.
    pub fn compress(&mut self, trunc: Truncation) -> Result<f64> {
        trunc.validate()?;
        let n = self.len();
        self.canonicalize(n - 1)?;
        let mut total = 0.0;
        for i in (1..n).rev() {
            let (l, d, r) = self.sites[i].dim();
            let svd = linalg::svd_truncate(&matrix_cols(&self.sites[i]), &trunc)?;
            total += svd.discarded;
            let k = svd.s.len();
            self.sites[i] = to_site(svd.vt, (k, d, r));
            let mut us = svd.u;
            for (mut col, &sv) in us.columns_mut().into_iter().zip(svd.s.iter()) {
                col.mapv_inplace(|x| x * sv);
            }
            let (l0, d0, _) = self.sites[i - 1].dim();
            debug_assert_eq!(us.dim().0, l);
            let prev = matrix_rows(&self.sites[i - 1]).dot(&us);
            self.sites[i - 1] = to_site(prev, (l0, d0, k));
        }
        self.center = Some(0);
        self.normalize_center(0)?;
        Ok(total)
    }

    /// [`Mps::compress`] followed by up to `max_sweeps` one-site fitting
    /// sweeps against the uncompressed state, stopping once a sweep improves
    /// the fidelity by less than `1e-10`. Returns the SVD discarded weight and
    /// the final fidelity with the uncompressed state.
    pub fn compress_fitted(&mut self, trunc: Truncation, max_sweeps: usize) -> Result<(f64, f64)> {
        let mut target = self.clone();
        target.normalize()?;
        let ln = target.log_norm;
        let discarded = self.compress(trunc)?;
        let fid = if discarded > 0.0 && max_sweeps > 0 {
            let mut t = target;
            t.log_norm = 0.0;
            let f = fit_sweeps(self, &t, max_sweeps, 1e-10)?;
            self.log_norm += ln;
            f
        } else {
            1.0 - discarded
        };
        Ok((discarded, fid))
    }

    /// One-site variational fit of `self`, with its bond dimensions held
    /// fixed, to `y = sum_k c_k W_k |x_k>` (`W_k = None` is the identity).
    /// `self` serves as the starting point and ends canonical at site 0,
    /// carrying the norm of the fit. Returns `||y - self||^2 / ||y||^2`.
    pub fn fit_combination(&mut self, terms: &[CombinationTerm<'_>], max_sweeps: usize, tol: f64) -> Result<f64> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty list of terms".into()));
        }
        let n = self.len();
        let d = self.phys_dim();
        for (_, w, x) in terms {
            self.check_same_shape(x)?;
            if let Some(w) = w {
                if w.len() != n {
                    return Err(Error::LengthMismatch { left: w.len(), right: n });
                }
                if w.phys_dim() != d {
                    return Err(Error::ShapeMismatch("MPO and MPS physical dims differ".into()));
                }
            }
        }
        let reference = terms
            .iter()
            .filter(|(c, _, _)| c.norm() > 0.0)
            .map(|(_, _, x)| x.log_norm)
            .fold(f64::NEG_INFINITY, f64::max);
        let reference = if reference.is_finite() { reference } else { 0.0 };
        let factors: Vec<C64> = terms.iter().map(|(c, _, x)| c * (x.log_norm - reference).exp()).collect();
        let identity = Mpo::identity(n, d);
        let ops: Vec<&Mpo> = terms.iter().map(|(_, w, _)| w.unwrap_or(&identity)).collect();
        let kets: Vec<&Mps> = terms.iter().map(|(_, _, x)| *x).collect();

        // ||y||^2 relative to exp(2 reference)
        let mut target_sqr = 0.0;
        for k in 0..terms.len() {
            let adj = ops[k].adjoint();
            for l in k..terms.len() {
                if factors[k].norm() == 0.0 || factors[l].norm() == 0.0 {
                    continue;
                }
                let mut env = Tensor::from_array(ndarray::ArrayD::from_elem(vec![1, 1, 1, 1], C64::new(1.0, 0.0)));
                for i in 0..n {
                    env = transfer_two(&env, &kets[k].sites[i], adj.site(i), ops[l].site(i), &kets[l].sites[i])?;
                }
                let v = factors[k].conj() * factors[l] * env.as_slice()[0];
                target_sqr += if k == l { v.re } else { 2.0 * v.re };
            }
        }
        if !(target_sqr > 0.0) {
            return Err(Error::ZeroNorm);
        }

        self.canonicalize(0)?;
        let one = || Tensor::from_array(ndarray::ArrayD::from_elem(vec![1, 1, 1], C64::new(1.0, 0.0)));
        let nt = terms.len();
        let mut left: Vec<Vec<Tensor>> = vec![vec![one(); n + 1]; nt];
        let mut right: Vec<Vec<Tensor>> = vec![vec![one(); n + 1]; nt];
        for k in 0..nt {
            for i in (1..n).rev() {
                right[k][i] = transfer_one_right(&right[k][i + 1], &self.sites[i], ops[k].site(i), &kets[k].sites[i])?;
            }
        }
        let local = |i: usize, left: &[Vec<Tensor>], right: &[Vec<Tensor>]| -> Result<Array3<C64>> {
            let mut acc: Option<Array3<C64>> = None;
            for k in 0..nt {
                if factors[k].norm() == 0.0 {
                    continue;
                }
                let t = local_term(&left[k][i], ops[k].site(i), &kets[k].sites[i], &right[k][i + 1])?;
                match acc.as_mut() {
                    Some(a) => a.scaled_add(factors[k], &t),
                    None => acc = Some(t.mapv(|x| x * factors[k])),
                }
            }
            acc.ok_or(Error::ZeroNorm)
        };

        let mut fit_sqr = 0.0;
        for _ in 0..max_sweeps.max(1) {
            let before = fit_sqr;
            for i in 0..n {
                let a = local(i, &left, &right)?;
                self.sites[i] = a;
                if i + 1 < n {
                    self.left_orthonormalize(i)?;
                    for k in 0..nt {
                        left[k][i + 1] = transfer_one(&left[k][i], &self.sites[i], ops[k].site(i), &kets[k].sites[i])?;
                    }
                }
            }
            for i in (0..n).rev() {
                let a = local(i, &left, &right)?;
                fit_sqr = linalg::frobenius(&a).powi(2);
                self.sites[i] = a;
                if i > 0 {
                    self.right_orthonormalize(i)?;
                    for k in 0..nt {
                        right[k][i] = transfer_one_right(&right[k][i + 1], &self.sites[i], ops[k].site(i), &kets[k].sites[i])?;
                    }
                }
            }
            if (fit_sqr - before).abs() <= tol * fit_sqr {
                break;
            }
        }
        self.log_norm = reference;
        self.normalize_center(0)?;
        Ok((1.0 - fit_sqr / target_sqr).max(0.0))
    }

    /// Overlap `<a|b>` by left-to-right transfer contraction.
    pub fn inner(a: &Mps, b: &Mps) -> Result<C64> {
        a.check_same_shape(b)?;
        let raw = raw_overlap(a, b);
        Ok(raw * (a.log_norm + b.log_norm).exp())
    }

    pub fn norm_sqr(&self) -> f64 {
        match self.center {
            Some(c) => {
                let n = linalg::frobenius(&self.sites[c]);
                n * n * (2.0 * self.log_norm).exp()
            }
            None => raw_overlap(self, self).re * (2.0 * self.log_norm).exp(),
        }
    }

    /// `|<a|b>|^2 / (<a|a><b|b>)`, independent of stored norms.
    pub fn fidelity(a: &Mps, b: &Mps) -> Result<f64> {
        a.check_same_shape(b)?;
        let ab = raw_overlap(a, b);
        let aa = raw_overlap(a, a).re;
        let bb = raw_overlap(b, b).re;
        Ok(ab.norm_sqr() / (aa * bb))
    }

    /// Linear combination through the direct-sum construction, then
    /// compressed. Returns the combined state and the discarded weight.
    pub fn add(terms: &[(C64, &Mps)], trunc: Truncation) -> Result<(Mps, f64)> {
        let mut sum = Self::direct_sum(terms)?;
        let w = sum.compress(trunc)?;
        Ok((sum, w))
    }

    /// Direct sum without compression; bonds are the sums of the inputs'.
    pub fn direct_sum(terms: &[(C64, &Mps)]) -> Result<Mps> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty list of terms".into()))?
            .1;
        for (_, t) in terms {
            first.check_same_shape(t)?;
        }
        let n = first.len();
        let d = first.phys_dim();
        let reference = terms
            .iter()
            .filter(|(c, _)| c.norm() > 0.0)
            .map(|(_, t)| t.log_norm)
            .fold(f64::NEG_INFINITY, f64::max);
        let reference = if reference.is_finite() { reference } else { 0.0 };
        let factors: Vec<C64> = terms
            .iter()
            .map(|(c, t)| c * (t.log_norm - reference).exp())
            .collect();

        if n == 1 {
            let mut a = Array3::<C64>::zeros((1, d, 1));
            for ((_, t), f) in terms.iter().zip(&factors) {
                a.scaled_add(*f, &t.sites[0]);
            }
            let mut m = Mps::from_tensors(vec![a])?;
            m.log_norm = reference;
            return Ok(m);
        }

        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let ls: Vec<usize> = terms.iter().map(|(_, t)| t.sites[i].dim().0).collect();
            let rs: Vec<usize> = terms.iter().map(|(_, t)| t.sites[i].dim().2).collect();
            let lt = if i == 0 { 1 } else { ls.iter().sum() };
            let rt = if i == n - 1 { 1 } else { rs.iter().sum() };
            let mut a = Array3::<C64>::zeros((lt, d, rt));
            let (mut lo, mut ro) = (0, 0);
            for (k, (_, t)) in terms.iter().enumerate() {
                let src = &t.sites[i];
                let (l, _, r) = src.dim();
                let l0 = if i == 0 { 0 } else { lo };
                let r0 = if i == n - 1 { 0 } else { ro };
                let mut block = a.slice_mut(s![l0..l0 + l, .., r0..r0 + r]);
                if i == 0 {
                    block.scaled_add(factors[k], src);
                } else {
                    block += src;
                }
                lo += l;
                ro += r;
            }
            sites.push(a);
        }
        let mut m = Mps::from_tensors(sites)?;
        m.log_norm = reference;
        Ok(m)
    }

    /// Exact MPO-MPS product; bonds multiply.
    pub fn apply_mpo_exact(w: &Mpo, s: &Mps) -> Result<Mps> {
        if w.len() != s.len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: s.len(),
            });
        }
        if w.phys_dim() != s.phys_dim() {
            return Err(Error::ShapeMismatch("MPO and MPS physical dims differ".into()));
        }
        let sites = w
            .sites()
            .iter()
            .zip(s.sites.iter())
            .map(|(wt, a)| apply_site(wt, a))
            .collect();
        let mut out = Mps::from_tensors(sites)?;
        out.log_norm = s.log_norm;
        Ok(out)
    }

    /// `w|s>` compressed to `trunc`; returns the state and discarded weight.
    pub fn apply_mpo(w: &Mpo, s: &Mps, trunc: Truncation) -> Result<(Mps, f64)> {
        let mut out = Self::apply_mpo_exact(w, s)?;
        let disc = out.compress(trunc)?;
        Ok((out, disc))
    }

    /// `<s|w|s> / <s|s>`.
    pub fn expectation(&self, w: &Mpo) -> Result<C64> {
        if w.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: self.len(),
            });
        }
        let mut env = Tensor::from_shape_vec(&[1, 1, 1], vec![C64::new(1.0, 0.0)])?;
        for i in 0..self.len() {
            env = transfer_one(&env, &self.sites[i], w.site(i), &self.sites[i])?;
        }
        Ok(env.as_slice()[0] / raw_overlap(self, self).re)
    }

    /// `<s|w^dagger w|s> / <s|s>` by an exact double-layer contraction.
    pub fn expectation2(&self, w: &Mpo) -> Result<f64> {
        if w.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: self.len(),
            });
        }
        let wd = w.adjoint();
        let mut env = Tensor::from_shape_vec(&[1, 1, 1, 1], vec![C64::new(1.0, 0.0)])?;
        for i in 0..self.len() {
            env = transfer_two(&env, &self.sites[i], wd.site(i), w.site(i), &self.sites[i])?;
        }
        Ok(env.as_slice()[0].re / raw_overlap(self, self).re)
    }

    /// Schmidt spectrum across cut `l` (between sites `l-1` and `l`), for the
    /// normalized state. Moves the canonical center.
    pub fn schmidt(&mut self, cut: usize) -> Result<SchmidtSpectrum> {
        if cut == 0 || cut >= self.len() {
            return Err(Error::OutOfRange {
                index: cut,
                limit: self.len(),
            });
        }
        self.canonicalize(cut - 1)?;
        let (_, s, _) = linalg::svd(&matrix_rows(&self.sites[cut - 1]))?;
        Ok(SchmidtSpectrum::from_values(s.to_vec()))
    }

    /// Schmidt spectra of every cut `1..n`, in one left-to-right sweep.
    pub fn all_schmidt(&mut self) -> Result<Vec<SchmidtSpectrum>> {
        let n = self.len();
        self.canonicalize(0)?;
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n.saturating_sub(1) {
            let (l, d, _) = self.sites[i].dim();
            let (u, s, vt) = linalg::svd(&matrix_rows(&self.sites[i]))?;
            let k = s.len();
            self.sites[i] = to_site(u, (l, d, k));
            let mut svt = vt;
            for (mut row, &sv) in svt.rows_mut().into_iter().zip(s.iter()) {
                row.mapv_inplace(|x| x * sv);
            }
            let (_, d2, r2) = self.sites[i + 1].dim();
            let next = svt.dot(&matrix_cols(&self.sites[i + 1]));
            self.sites[i + 1] = to_site(next, (k, d2, r2));
            self.center = Some(i + 1);
            out.push(SchmidtSpectrum::from_values(s.to_vec()));
        }
        Ok(out)
    }

    /// Entanglement entropy in bits across cut `l`.
    pub fn entropy(&mut self, cut: usize) -> Result<f64> {
        Ok(self.schmidt(cut)?.entropy())
    }

    /// Reduced density matrix of sites `first..first + len`. Basis indices
    /// put the first window site in the most significant position.
    pub fn rdm(&mut self, first: usize, len: usize) -> Result<DensityMatrix> {
        if len == 0 || len > MAX_RDM_SITES {
            return Err(Error::InvalidArgument(format!(
                "window length {len} must be in 1..={MAX_RDM_SITES}"
            )));
        }
        if first + len > self.len() {
            return Err(Error::OutOfRange {
                index: first + len - 1,
                limit: self.len(),
            });
        }
        self.canonicalize(first)?;
        let d = self.phys_dim();
        let dim = d.pow(len as u32);
        let (dl, _, _) = self.sites[first].dim();
        let mut rho = Array2::<C64>::zeros((dim, dim));
        // stream over the left bond so memory stays O(dim * chunk * D)
        let chunk = (1usize << 16).div_ceil(dim).clamp(1, dl.max(1));
        let mut a0 = 0;
        while a0 < dl {
            let a1 = (a0 + chunk).min(dl);
            let c = a1 - a0;
            let head = self.sites[first].slice(s![a0..a1, .., ..]).to_owned();
            let (_, _, r0) = head.dim();
            let mut x = head.into_shape_with_order((c * d, r0))?;
            for j in 1..len {
                let site = &self.sites[first + j];
                let (_, _, r) = site.dim();
                let rows = x.dim().0;
                x = x
                    .dot(&matrix_cols(site))
                    .into_shape_with_order((rows * d, r))?;
            }
            let dr = x.dim().1;
            let m = x
                .into_shape_with_order((c, dim, dr))?
                .permuted_axes([1, 0, 2])
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((dim, c * dr))?;
            rho += &m.dot(&linalg::adjoint(&m));
            a0 = a1;
        }
        Ok(DensityMatrix {
            first,
            len,
            matrix: rho,
        })
    }

    /// Normalized expectation of a dense operator on sites
    /// `site..site + len`, first site as the major index.
    pub fn local_expectation(&mut self, op: &Array2<C64>, site: usize, len: usize) -> Result<C64> {
        self.window_expectation(&[(site, len, op)])
    }

    /// Normalized expectation of a product of dense operators acting on
    /// disjoint windows `(start, len, op)`, given in increasing order.
    pub fn window_expectation(&mut self, windows: &[(usize, usize, &Array2<C64>)]) -> Result<C64> {
        if windows.is_empty() {
            return Ok(C64::new(1.0, 0.0));
        }
        let d = self.phys_dim();
        let mut prev_end = 0;
        for (k, &(start, len, op)) in windows.iter().enumerate() {
            if len == 0 || start + len > self.len() {
                return Err(Error::OutOfRange {
                    index: start + len,
                    limit: self.len(),
                });
            }
            if k > 0 && start < prev_end {
                return Err(Error::InvalidArgument("operator windows overlap or are unsorted".into()));
            }
            let dim = d.pow(len as u32);
            if op.dim() != (dim, dim) {
                return Err(Error::ShapeMismatch(format!(
                    "operator of shape {:?} on a {len}-site window",
                    op.dim()
                )));
            }
            prev_end = start + len;
        }
        let start = windows[0].0;
        self.canonicalize(start)?;
        let dl = self.sites[start].dim().0;
        let mut env = Array2::<C64>::eye(dl);
        let mut site = start;
        for &(ws, len, op) in windows {
            while site < ws {
                env = transfer_plain(&env, &self.sites[site]);
                site += 1;
            }
            // window state with the environment folded in on the ket side
            let mut ket = env.clone();
            let mut bra = Array2::<C64>::eye(env.dim().0);
            for j in 0..len {
                let a = &self.sites[ws + j];
                let (_, _, r) = a.dim();
                let rows = ket.dim().0;
                ket = ket.dot(&matrix_cols(a)).into_shape_with_order((rows * d, r))?;
                let rows = bra.dim().0;
                bra = bra.dot(&matrix_cols(a)).into_shape_with_order((rows * d, r))?;
            }
            let dim = d.pow(len as u32);
            let bl = env.dim().0;
            let r = ket.dim().1;
            // ket: (bra-left, s, r) -> apply op on s
            let ket3 = ket.into_shape_with_order((bl, dim, r))?;
            let mut applied = Array3::<C64>::zeros((bl, dim, r));
            for a in 0..bl {
                let blk = op.dot(&ket3.index_axis(Axis(0), a));
                applied.index_axis_mut(Axis(0), a).assign(&blk);
            }
            let applied = applied.into_shape_with_order((bl * dim, r))?;
            env = linalg::adjoint(&bra).dot(&applied);
            site = ws + len;
        }
        // sites to the right of the center are right-isometries
        let mut val = C64::new(0.0, 0.0);
        for i in 0..env.dim().0 {
            val += env[[i, i]];
        }
        Ok(val)
    }

    /// Writes the binary format: magic `MPS1`, then little-endian `u64`
    /// site count, physical dimension and the `n + 1` bond dimensions, an
    /// `f64` log-norm and an `i64` canonical center (`-1` for none), then
    /// every site tensor in `(left, physical, right)` row-major order as
    /// `(re, im)` pairs of little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"MPS1")?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.phys_dim() as u64).to_le_bytes())?;
        for b in self.bond_dims() {
            w.write_all(&(b as u64).to_le_bytes())?;
        }
        w.write_all(&self.log_norm.to_le_bytes())?;
        let c: i64 = self.center.map(|c| c as i64).unwrap_or(-1);
        w.write_all(&c.to_le_bytes())?;
        for a in &self.sites {
            for x in a.iter() {
                w.write_all(&x.re.to_le_bytes())?;
                w.write_all(&x.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Mps> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MPS1" {
            return Err(Error::Format("bad magic".into()));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let n = read_u64(&mut r)? as usize;
        let d = read_u64(&mut r)? as usize;
        if n == 0 || d == 0 || n > 1 << 20 {
            return Err(Error::Format(format!("implausible header n={n} d={d}")));
        }
        let mut bonds = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            bonds.push(read_u64(&mut r)? as usize);
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let log_norm = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let center = i64::from_le_bytes(b8);
        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let count = bonds[i] * d * bonds[i + 1];
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                r.read_exact(&mut b8)?;
                let re = f64::from_le_bytes(b8);
                r.read_exact(&mut b8)?;
                let im = f64::from_le_bytes(b8);
                data.push(C64::new(re, im));
            }
            sites.push(Array3::from_shape_vec((bonds[i], d, bonds[i + 1]), data)?);
        }
        let mut m = Mps::from_tensors(sites)?;
        m.log_norm = log_norm;
        m.center = if center < 0 {
            None
        } else if (center as usize) < n {
            Some(center as usize)
        } else {
            return Err(Error::Format(format!("center {center} out of range")));
        };
        Ok(m)
    }
}

/// Overlap of the bare networks, ignoring stored log-norms.
fn raw_overlap(a: &Mps, b: &Mps) -> C64 {
    let mut env = Array2::<C64>::from_elem((1, 1), C64::new(1.0, 0.0));
    for (x, y) in a.sites.iter().zip(b.sites.iter()) {
        env = transfer_pair(&env, x, y);
    }
    env[[0, 0]]
}

/// `E'[a', b'] = sum conj(x[a, s, a']) E[a, b] y[b, s, b']`.
fn transfer_pair(env: &Array2<C64>, x: &Array3<C64>, y: &Array3<C64>) -> Array2<C64> {
    let (da, d, _) = x.dim();
    let (_, _, db2) = y.dim();
    let tmp = env
        .dot(&matrix_cols(y))
        .into_shape_with_order((da * d, db2))
        .expect("contiguous");
    linalg::adjoint(&matrix_rows(x)).dot(&tmp)
}

fn transfer_plain(env: &Array2<C64>, a: &Array3<C64>) -> Array2<C64> {
    transfer_pair(env, a, a)
}

/// One-layer MPO environment step; env indices `(bra, mpo, ket)`.
pub(crate) fn transfer_one(
    env: &Tensor,
    bra: &Array3<C64>,
    w: &ndarray::Array4<C64>,
    ket: &Array3<C64>,
) -> Result<Tensor> {
    let ket_t = Tensor::from_array(ket.clone().into_dyn());
    let w_t = Tensor::from_array(w.clone().into_dyn());
    let bra_t = Tensor::from_array(bra.mapv(|x| x.conj()).into_dyn());
    let x = contract(env, &ket_t, &[(2, 0)])?; // (a, w, t, b')
    let y = contract(&x, &w_t, &[(1, 0), (2, 2)])?; // (a, b', s, w')
    let z = contract(&bra_t, &y, &[(0, 0), (1, 2)])?; // (a', b', w')
    z.permuted(&[0, 2, 1])
}

/// Two-layer environment step for `<bra| w_outer w_inner |ket>`; env indices
/// `(bra, outer, inner, ket)`.
pub(crate) fn transfer_two(
    env: &Tensor,
    bra: &Array3<C64>,
    w_outer: &ndarray::Array4<C64>,
    w_inner: &ndarray::Array4<C64>,
    ket: &Array3<C64>,
) -> Result<Tensor> {
    let ket_t = Tensor::from_array(ket.clone().into_dyn());
    let wi = Tensor::from_array(w_inner.clone().into_dyn());
    let wo = Tensor::from_array(w_outer.clone().into_dyn());
    let bra_t = Tensor::from_array(bra.mapv(|x| x.conj()).into_dyn());
    let x = contract(env, &ket_t, &[(3, 0)])?; // (a, o, i, t, b')
    let y = contract(&x, &wi, &[(2, 0), (3, 2)])?; // (a, o, b', u, i')
    let z = contract(&y, &wo, &[(1, 0), (3, 2)])?; // (a, b', i', s, o')
    let r = contract(&bra_t, &z, &[(0, 0), (1, 3)])?; // (a', b', i', o')
    r.permuted(&[0, 3, 2, 1])
}

/// Right environment step; env indices `(bra, mpo, ket)`.
pub(crate) fn transfer_one_right(
    env: &Tensor,
    bra: &Array3<C64>,
    w: &ndarray::Array4<C64>,
    ket: &Array3<C64>,
) -> Result<Tensor> {
    let ket_t = Tensor::from_array(ket.clone().into_dyn());
    let w_t = Tensor::from_array(w.clone().into_dyn());
    let bra_t = Tensor::from_array(bra.mapv(|x| x.conj()).into_dyn());
    let x = contract(&ket_t, env, &[(2, 2)])?; // (b, t, a', w')
    let y = contract(&w_t, &x, &[(2, 1), (3, 3)])?; // (w, s, b, a')
    contract(&bra_t, &y, &[(1, 1), (2, 3)]) // (a, w, b)
}

/// `sum L[a, w, b] x[b, t, b'] W[w, s, t, w'] R[a', w', b']` as `(a, s, a')`.
pub(crate) fn local_term(l: &Tensor, w: &ndarray::Array4<C64>, x: &Array3<C64>, r: &Tensor) -> Result<Array3<C64>> {
    let x_t = Tensor::from_array(x.clone().into_dyn());
    let w_t = Tensor::from_array(w.clone().into_dyn());
    let a = contract(l, &x_t, &[(2, 0)])?; // (a, w, t, b')
    let b = contract(&a, &w_t, &[(1, 0), (2, 2)])?; // (a, b', s, w')
    let c = contract(&b, r, &[(1, 2), (3, 1)])?; // (a, s, a')
    Ok(c.into_array().into_dimensionality::<ndarray::Ix3>()?)
}

/// `new[(wl, a), s, (wr, b)] = sum_t w[wl, s, t, wr] a[a, t, b]`.
fn apply_site(w: &ndarray::Array4<C64>, a: &Array3<C64>) -> Array3<C64> {
    let (wl, d, _, wr) = w.dim();
    let (l, _, r) = a.dim();
    let wm = w
        .view()
        .permuted_axes([0, 1, 3, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((wl * d * wr, d))
        .expect("contiguous");
    let am = a
        .view()
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((d, l * r))
        .expect("contiguous");
    wm.dot(&am)
        .into_shape_with_order((wl, d, wr, l, r))
        .expect("contiguous")
        .permuted_axes([0, 3, 1, 2, 4])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((wl * l, d, wr * r))
        .expect("contiguous")
}

/// One-site variational fitting of `approx` (canonical, unit norm) to the
/// normalized `target`. Returns the final fidelity.
pub(crate) fn fit_sweeps(approx: &mut Mps, target: &Mps, max_sweeps: usize, tol: f64) -> Result<f64> {
    let n = approx.len();
    if n == 1 {
        approx.sites[0] = target.sites[0].clone();
        approx.normalize_center(0)?;
        return Ok(1.0);
    }
    approx.canonicalize(0)?;
    let one = || Array2::<C64>::from_elem((1, 1), C64::new(1.0, 0.0));
    // right[i] = overlap block of sites i..n (bra = approx, ket = target)
    let mut right: Vec<Array2<C64>> = vec![one(); n + 1];
    for i in (1..n).rev() {
        right[i] = transfer_right(&right[i + 1], &approx.sites[i], &target.sites[i]);
    }
    let mut left: Vec<Array2<C64>> = vec![one(); n + 1];
    let mut fid = 0.0;
    for _ in 0..max_sweeps {
        let before = fid;
        for i in 0..n {
            let a = local_fit(&left[i], &target.sites[i], &right[i + 1]);
            let f = linalg::frobenius(&a).powi(2);
            approx.sites[i] = a;
            if i + 1 < n {
                approx.left_orthonormalize(i)?;
                left[i + 1] = transfer_pair(&left[i], &approx.sites[i], &target.sites[i]);
            } else {
                fid = f;
            }
        }
        for i in (0..n).rev() {
            let a = local_fit(&left[i], &target.sites[i], &right[i + 1]);
            let f = linalg::frobenius(&a).powi(2);
            approx.sites[i] = a;
            if i > 0 {
                approx.right_orthonormalize(i)?;
                right[i] = transfer_right(&right[i + 1], &approx.sites[i], &target.sites[i]);
            } else {
                fid = f;
            }
        }
        approx.center = Some(0);
        if fid - before <= tol {
            break;
        }
    }
    approx.log_norm = 0.0;
    approx.normalize_center(0)?;
    Ok(fid)
}

/// `R'[a, b] = sum conj(x[a, s, a']) y[b, s, b'] R[a', b']`.
fn transfer_right(r: &Array2<C64>, x: &Array3<C64>, y: &Array3<C64>) -> Array2<C64> {
    let (db, d, _) = y.dim();
    let (da, _, da2) = x.dim();
    // tmp[b, s, a'] = sum_b' y[b, s, b'] R[a', b']
    let tmp = matrix_rows(y).dot(&r.t()).into_shape_with_order((db, d * da2)).expect("contiguous");
    matrix_cols(x).mapv(|v| v.conj()).dot(&tmp.t()).into_shape_with_order((da, db)).expect("contiguous")
}

/// Optimal one-site tensor `L · y · R^T` for fixed isometric surroundings.
fn local_fit(l: &Array2<C64>, y: &Array3<C64>, r: &Array2<C64>) -> Array3<C64> {
    let (_, d, db2) = y.dim();
    let la = l.dim().0;
    let ra = r.dim().0;
    let tmp = l.dot(&matrix_cols(y)).into_shape_with_order((la * d, db2)).expect("contiguous");
    to_site(tmp.dot(&r.t()), (la, d, ra))
}

/// One term `c W |x>` of a linear combination; `None` is the identity.
pub type CombinationTerm<'a> = (C64, Option<&'a Mpo>, &'a Mps);

/// Dense reduced density matrix of a window of an MPS.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub first: usize,
    pub len: usize,
    pub matrix: Array2<C64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim().0
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(linalg::eigvalsh(&self.matrix)?.to_vec())
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        Ok(self
            .eigenvalues()?
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum::<f64>()
            .max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn y_plus(n: usize) -> Mps {
        let v = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2)];
        Mps::from_product(&vec![v; n]).unwrap()
    }

    fn ghz(n: usize) -> Mps {
        let zeros = Mps::basis(&vec![0; n]).unwrap();
        let ones = Mps::basis(&vec![1; n]).unwrap();
        let mut s = Mps::direct_sum(&[(C64::new(1.0, 0.0), &zeros), (C64::new(1.0, 0.0), &ones)]).unwrap();
        s.normalize().unwrap();
        s
    }

    #[test]
    fn product_state_basics() {
        let s = y_plus(6);
        assert_eq!(s.bond_dims(), vec![1; 7]);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
        let one = Mps::basis(&[0]).unwrap();
        assert_eq!(one.len(), 1);
        assert!((Mps::inner(&one, &one).unwrap().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn product_state_rejects_unnormalized() {
        let v = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(Mps::from_product(&[v]), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn orthogonal_basis_states() {
        let a = Mps::basis(&[0, 0, 0, 0]).unwrap();
        let b = Mps::basis(&[1, 1, 1, 1]).unwrap();
        assert_eq!(Mps::inner(&a, &b).unwrap(), C64::new(0.0, 0.0));
        let c = Mps::basis(&[0, 0, 0]).unwrap();
        assert!(matches!(Mps::inner(&a, &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn canonical_form_isometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = Mps::random(8, 2, 6, &mut rng).unwrap();
        let reference = s.clone();
        s.canonicalize(3).unwrap();
        for i in 0..3 {
            let m = matrix_rows(&s.sites[i]).to_owned();
            let g = linalg::adjoint(&m).dot(&m);
            let k = g.dim().0;
            assert!(linalg::frobenius(&(g - Array2::<C64>::eye(k))) < 1e-10);
        }
        for i in 4..8 {
            let m = matrix_cols(&s.sites[i]).to_owned();
            let g = m.dot(&linalg::adjoint(&m));
            let k = g.dim().0;
            assert!(linalg::frobenius(&(g - Array2::<C64>::eye(k))) < 1e-10);
        }
        assert!((Mps::fidelity(&s, &reference).unwrap() - 1.0).abs() < 1e-10);
        let once = s.clone();
        s.canonicalize(3).unwrap();
        assert!((Mps::fidelity(&s, &once).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_state_canonicalization_keeps_bond_one() {
        let mut s = y_plus(5);
        for c in [0, 2, 4] {
            s.canonicalize(c).unwrap();
            assert_eq!(s.max_bond(), 1);
        }
    }

    #[test]
    fn compress_ghz_to_bond_one() {
        let mut s = ghz(6);
        assert_eq!(s.max_bond(), 2);
        let w = s.compress(Truncation::new(1, 0.0)).unwrap();
        assert!((w - 0.5).abs() < 1e-12);
        assert_eq!(s.max_bond(), 1);
    }

    #[test]
    fn compress_already_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = Mps::random(7, 2, 4, &mut rng).unwrap();
        let mut c = s.clone();
        let w = c.compress(Truncation::new(4, 0.0)).unwrap();
        assert!(w < 1e-20);
        assert!((Mps::fidelity(&s, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(c.compress(Truncation::new(0, 0.0)).is_err());
    }

    #[test]
    fn compress_fitted_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let s = Mps::random(8, 2, 16, &mut rng).unwrap();
        let mut plain = s.clone();
        plain.compress(Truncation::new(3, 0.0)).unwrap();
        let mut fitted = s.clone();
        let (_, fid) = fitted.compress_fitted(Truncation::new(3, 0.0), 4).unwrap();
        let f_plain = Mps::fidelity(&s, &plain).unwrap();
        let f_fit = Mps::fidelity(&s, &fitted).unwrap();
        assert!(f_fit >= f_plain - 1e-12);
        assert!((fid - f_fit).abs() < 1e-8);
    }

    #[test]
    fn fit_combination_error_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 8;
        let x1 = Mps::random(n, 2, 6, &mut rng).unwrap();
        let mut x2 = Mps::random(n, 2, 5, &mut rng).unwrap();
        x2.scale(C64::new(0.3, 0.0));
        let w = Mpo::product(&vec![crate::pauli::sigma_x(); n]).unwrap();
        let c1 = C64::new(2.0, 0.0);
        let c2 = C64::new(-1.0, 0.5);
        let wx = Mps::apply_mpo_exact(&w, &x1).unwrap();
        let exact = Mps::direct_sum(&[(c1, &wx), (c2, &x2)]).unwrap();
        let mut svd = exact.clone();
        let disc = svd.compress(Truncation::new(4, 0.0)).unwrap();
        let mut fit = svd.clone();
        let err = fit.fit_combination(&[(c1, Some(&w), &x1), (c2, None, &x2)], 4, 1e-14).unwrap();
        let yy = exact.norm_sqr();
        let diff = yy - 2.0 * Mps::inner(&exact, &fit).unwrap().re + fit.norm_sqr();
        assert!((err - diff / yy).abs() < 1e-10, "{err} vs {}", diff / yy);
        assert!(err <= disc * (1.0 + 1e-9) + 1e-12, "fit {err} svd {disc}");
        // full bond dimension reproduces the target exactly
        let mut full = exact.clone();
        full.compress(Truncation::exact()).unwrap();
        let err = full.fit_combination(&[(c1, Some(&w), &x1), (c2, None, &x2)], 2, 1e-14).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn add_single_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Mps::random(6, 2, 4, &mut rng).unwrap();
        let (t, _) = Mps::add(&[(C64::new(1.0, 0.0), &s)], Truncation::new(8, 0.0)).unwrap();
        assert!((Mps::fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);

        let a = Mps::basis(&[0; 5]).unwrap();
        let b = Mps::basis(&[1; 5]).unwrap();
        let (sum, w) = Mps::add(
            &[(C64::new(1.0, 0.0), &a), (C64::new(1.0, 0.0), &b)],
            Truncation::new(2, 0.0),
        )
        .unwrap();
        assert!(w < 1e-20);
        assert!((sum.norm_sqr() - 2.0).abs() < 1e-12);
        assert!(Mps::add(&[], Truncation::new(2, 0.0)).is_err());
    }

    #[test]
    fn identity_and_flip_mpo() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = Mps::random(6, 2, 8, &mut rng).unwrap();
        let (t, _) = Mps::apply_mpo(&Mpo::identity(6, 2), &s, Truncation::new(64, 0.0)).unwrap();
        assert!((Mps::fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);

        let zeros = Mps::basis(&[0; 5]).unwrap();
        let flip = Mpo::product(&vec![pauli::sigma_x(); 5]).unwrap();
        let (f, _) = Mps::apply_mpo(&flip, &zeros, Truncation::new(4, 0.0)).unwrap();
        let ones = Mps::basis(&[1; 5]).unwrap();
        assert!((Mps::inner(&ones, &f).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn local_expectations_on_y_plus() {
        let mut s = y_plus(4);
        let y = s.local_expectation(&pauli::sigma_y(), 2, 1).unwrap();
        assert!((y - C64::new(1.0, 0.0)).norm() < 1e-14);
        let z = s.local_expectation(&pauli::sigma_z(), 1, 1).unwrap();
        assert!(z.norm() < 1e-14);
        assert!(s.local_expectation(&pauli::sigma_z(), 4, 1).is_err());
    }

    #[test]
    fn entropy_of_product_and_bell() {
        let mut p = y_plus(6);
        for cut in 1..6 {
            assert!(p.entropy(cut).unwrap().abs() < 1e-12);
        }
        let mut bell = ghz(2);
        assert!((bell.entropy(1).unwrap() - 1.0).abs() < 1e-12);
        assert!(bell.entropy(0).is_err());
        assert!(bell.entropy(2).is_err());
    }

    #[test]
    fn rdm_of_product_is_projector() {
        let mut s = y_plus(6);
        let rho = s.rdm(1, 3).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        // projector onto |Y+>^{⊗3}
        let v = [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2)];
        for i in 0..8 {
            for j in 0..8 {
                let amp = |k: usize| (0..3).map(|b| v[(k >> (2 - b)) & 1]).product::<C64>();
                let expect = amp(i) * amp(j).conj();
                assert!((rho.matrix[[i, j]] - expect).norm() < 1e-12);
            }
        }
        assert!(s.rdm(0, 11).is_err());
    }

    #[test]
    fn entropy_matches_rdm_on_left_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Mps::random(8, 2, 8, &mut rng).unwrap();
        for l in 1..5 {
            let a = s.entropy(l).unwrap();
            let b = s.rdm(0, l).unwrap().entropy().unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn all_schmidt_matches_single_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = Mps::random(7, 2, 8, &mut rng).unwrap();
        let all = s.all_schmidt().unwrap();
        for (k, sp) in all.iter().enumerate() {
            let single = s.schmidt(k + 1).unwrap();
            assert!((sp.entropy() - single.entropy()).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut s = Mps::random(5, 2, 4, &mut rng).unwrap();
        s.scale(C64::new(3.0, -1.0));
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = Mps::read_from(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert_eq!(back.center(), s.center());
        assert_eq!(back.log_norm().to_bits(), s.log_norm().to_bits());
        assert!(Mps::read_from(&b"MPS2"[..]).is_err());
    }

    #[test]
    fn expectation2_of_unitary_product_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = Mps::random(5, 2, 4, &mut rng).unwrap();
        let w = Mpo::product(&vec![pauli::sigma_y(); 5]).unwrap();
        assert!((s.expectation2(&w).unwrap() - 1.0).abs() < 1e-12);
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn add_is_linear(seed in 0u64..10_000, ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Mps::random(6, 2, 4, &mut rng).unwrap();
            let b = Mps::random(6, 2, 3, &mut rng).unwrap();
            let x = Mps::random(6, 2, 5, &mut rng).unwrap();
            let alpha = C64::new(ar, ai);
            let beta = C64::new(br, 0.5);
            let (sum, _) = Mps::add(&[(alpha, &a), (beta, &b)], Truncation::exact()).unwrap();
            let lhs = Mps::inner(&x, &sum).unwrap();
            let rhs = alpha * Mps::inner(&x, &a).unwrap() + beta * Mps::inner(&x, &b).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn fidelity_loss_bounded_by_discarded_weight(seed in 0u64..10_000, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = Mps::random(8, 2, 8, &mut rng).unwrap();
            let mut c = s.clone();
            let w = c.compress(Truncation::new(d, 0.0)).unwrap();
            let f = Mps::fidelity(&s, &c).unwrap();
            prop_assert!(f >= 1.0 - w - 1e-9);
        }
    }
}
