//! Matrix-free state-vector backend used as ground truth for small chains.
//!
//! Basis index convention: site `i` is bit `i` of the index (site 0 is the
//! least significant bit). Local operators are stored first-site-major, as in
//! [`Model::terms`].

use ndarray::{s, Array1, Array2, Array3};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::filter::delta_coefficients;
use crate::hamiltonian::{Model, SpectrumEdges};
use crate::linalg::{self, Truncation};
use crate::mps::Mps;

pub const MAX_SITES: usize = 24;
pub const MAX_DENSE_SITES: usize = 12;
pub const MAX_EVOLUTION_SITES: usize = 20;
/// Chebyshev propagator terms are kept until the Bessel tail drops below this.
pub const PROPAGATOR_TAIL: f64 = 1e-12;

fn check_size(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(Error::SizeLimit { n, max });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(n: usize, amps: Vec<C64>) -> Result<Self> {
        check_size(n, MAX_SITES)?;
        if amps.len() != 1 << n {
            return Err(Error::LengthMismatch {
                left: amps.len(),
                right: 1 << n,
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self { n, amps })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_size(n, MAX_SITES)?;
        Ok(Self {
            n,
            amps: vec![C64::new(0.0, 0.0); 1 << n],
        })
    }

    pub fn basis(bits: &[u8]) -> Result<Self> {
        let mut v = Self::zeros(bits.len())?;
        let idx = bits.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | ((b as usize & 1) << i));
        v.amps[idx] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_product(local: &[[C64; 2]]) -> Result<Self> {
        let n = local.len();
        check_size(n, MAX_SITES)?;
        let mut amps = vec![C64::new(1.0, 0.0)];
        for site in local {
            let mut next = Vec::with_capacity(amps.len() * 2);
            next.extend(amps.iter().map(|a| a * site[0]));
            next.extend(amps.iter().map(|a| a * site[1]));
            amps = next;
        }
        Self::new(n, amps)
    }

    pub fn random(n: usize, seed: u64) -> Result<Self> {
        check_size(n, MAX_SITES)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1usize << n)
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let mut v = Self::new(n, amps)?;
        v.normalize()?;
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.amps.iter_mut().for_each(|a| *a /= nrm);
        Ok(())
    }

    /// `<self|other>`.
    pub fn dot(&self, other: &StateVector) -> Result<C64> {
        if self.n != other.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(dot(&self.amps, &other.amps))
    }

    /// `|<a|b>|^2 / (<a|a><b|b>)`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        let ab = self.dot(other)?;
        Ok(ab.norm_sqr() / (self.norm().powi(2) * other.norm().powi(2)))
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
struct SparseTerm {
    /// Bit offsets of the local basis states, first site major.
    places: Vec<usize>,
    mask: usize,
    entries: Vec<(usize, usize, C64)>,
}

/// `scale * (H - shift)` acting on state vectors.
#[derive(Clone, Debug)]
pub struct VectorOperator {
    n: usize,
    terms: Vec<SparseTerm>,
    shift: f64,
    scale: f64,
    norm_bound: f64,
}

impl VectorOperator {
    pub fn new(m: &Model) -> Result<Self> {
        check_size(m.n, MAX_SITES)?;
        let mut terms = Vec::with_capacity(m.terms.len());
        let mut norm_bound = 0.0;
        for (k, h) in m.terms.iter().enumerate() {
            let len = m.term_len(k);
            let dim = 1usize << len;
            let places = (0..dim)
                .map(|c| (0..len).fold(0, |acc, j| acc | (((c >> (len - 1 - j)) & 1) << (k + j))))
                .collect();
            let mut entries = Vec::new();
            for r in 0..dim {
                for c in 0..dim {
                    if h[[r, c]].norm() > 0.0 {
                        entries.push((r, c, h[[r, c]]));
                    }
                }
            }
            norm_bound += linalg::hermitian_norm(h)?;
            terms.push(SparseTerm {
                places,
                mask: (dim - 1) << k,
                entries,
            });
        }
        Ok(Self {
            n: m.n,
            terms,
            shift: 0.0,
            scale: 1.0,
            norm_bound,
        })
    }

    /// `scale * (H - shift)`.
    pub fn shifted_scaled(&self, shift: f64, scale: f64) -> Self {
        Self {
            shift,
            scale,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Upper bound on `||scale (H - shift)||`.
    pub fn norm_bound(&self) -> f64 {
        self.scale.abs() * (self.norm_bound + self.shift.abs())
    }

    /// `out = op * v`.
    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for t in &self.terms {
            for base in 0..v.len() {
                if base & t.mask != 0 {
                    continue;
                }
                for &(r, c, h) in &t.entries {
                    out[base | t.places[r]] += h * v[base | t.places[c]];
                }
            }
        }
        if self.shift != 0.0 || self.scale != 1.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o = (*o - x * self.shift) * self.scale;
            }
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        self.apply_into(v, &mut out);
        out
    }
}

/// `H v` term by term.
pub fn matvec(m: &Model, v: &StateVector) -> Result<StateVector> {
    if v.n != m.n {
        return Err(Error::LengthMismatch { left: m.n, right: v.n });
    }
    let op = VectorOperator::new(m)?;
    StateVector::new(v.n, op.apply(&v.amps))
}

pub fn dense_hamiltonian(m: &Model) -> Result<Array2<C64>> {
    check_size(m.n, MAX_DENSE_SITES)?;
    let op = VectorOperator::new(m)?;
    let dim = 1usize << m.n;
    let mut h = Array2::<C64>::zeros((dim, dim));
    for t in &op.terms {
        for base in (0..dim).filter(|b| b & t.mask == 0) {
            for &(r, c, v) in &t.entries {
                h[[base | t.places[r], base | t.places[c]]] += v;
            }
        }
    }
    Ok(h)
}

/// Eigenvalues (ascending) and eigenvectors as columns.
pub fn dense_eigensystem(m: &Model) -> Result<(Array1<f64>, Array2<C64>)> {
    let h = dense_hamiltonian(m)?;
    if h.iter().all(|x| x.im == 0.0) {
        let (e, v) = linalg::eigh_real(h.mapv(|x| x.re))?;
        Ok((e, v.mapv(|x| C64::new(x, 0.0))))
    } else {
        linalg::eigh(&h)
    }
}

pub fn dense_spectrum(m: &Model) -> Result<Array1<f64>> {
    let h = dense_hamiltonian(m)?;
    if h.iter().all(|x| x.im == 0.0) {
        linalg::eigvalsh_real(h.mapv(|x| x.re))
    } else {
        linalg::eigvalsh(&h)
    }
}

/// Spectral edges by matrix-free Lanczos.
pub fn exact_edges(m: &Model) -> Result<SpectrumEdges> {
    let op = VectorOperator::new(m)?;
    let neg = op.shifted_scaled(0.0, -1.0);
    let start = StateVector::random(m.n, 0x5eed)?;
    let krylov = 80.min(1 << m.n);
    let (lo, _) = crate::dmrg::lanczos(|v| Ok(op.apply(v)), start.amps(), krylov, 30)?;
    let (hi, _) = crate::dmrg::lanczos(|v| Ok(neg.apply(v)), start.amps(), krylov, 30)?;
    Ok(SpectrumEdges {
        e_min: lo,
        e_max: -hi,
        converged: true,
    })
}

/// `<v|H|v> / <v|v>`.
pub fn exact_energy(v: &StateVector, m: &Model) -> Result<f64> {
    let hv = matvec(m, v)?;
    Ok(v.dot(&hv)?.re / v.norm().powi(2))
}

/// `<H^2> - <H>^2` for the normalized `v`.
pub fn exact_variance(v: &StateVector, m: &Model) -> Result<f64> {
    let hv = matvec(m, v)?;
    let n2 = v.norm().powi(2);
    let e = v.dot(&hv)?.re / n2;
    Ok(hv.norm().powi(2) / n2 - e * e)
}

/// `sum_k coeffs[k] T_k(op) v`; `op` must have spectrum inside `[-1, 1]`.
pub fn chebyshev_series(op: &VectorOperator, v: &[C64], coeffs: &[C64]) -> Vec<C64> {
    let dim = v.len();
    let mut out: Vec<C64> = v.iter().map(|x| x * coeffs.first().copied().unwrap_or_default()).collect();
    if coeffs.len() < 2 {
        return out;
    }
    let mut prev = v.to_vec();
    let mut cur = op.apply(v);
    let mut next = vec![C64::new(0.0, 0.0); dim];
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        if k >= 2 {
            op.apply_into(&cur, &mut next);
            for i in 0..dim {
                next[i] = 2.0 * next[i] - prev[i];
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        if c != C64::new(0.0, 0.0) {
            for i in 0..dim {
                out[i] += c * cur[i];
            }
        }
    }
    out
}

/// Normalized `sum_n c_n T_n(alpha (H - e0) / N) v` with the Jackson delta
/// coefficients of order `order`.
pub fn exact_cheby_filter(v: &StateVector, m: &Model, order: usize, e0: f64, alpha: f64) -> Result<StateVector> {
    if v.n != m.n {
        return Err(Error::LengthMismatch { left: m.n, right: v.n });
    }
    let op = VectorOperator::new(m)?.shifted_scaled(e0, alpha / m.n as f64);
    let coeffs: Vec<C64> = delta_coefficients(order).c.iter().map(|&c| C64::new(c, 0.0)).collect();
    let mut out = StateVector::new(v.n, chebyshev_series(&op, &v.amps, &coeffs))?;
    out.normalize()?;
    Ok(out)
}

/// Bessel functions `J_0(x) .. J_kmax(x)` by Miller's downward recurrence,
/// normalized with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = kmax.max(ax as usize) + 30 + (40.0 * (kmax.max(ax as usize) as f64)).sqrt() as usize;
    let top = top + top % 2;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut vals = vec![0.0; top + 1];
    vals[top] = j_cur;
    for k in (1..=top).rev() {
        let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        vals[k - 1] = j_cur;
        if j_cur.abs() > 1e250 {
            vals[k - 1..].iter_mut().for_each(|v| *v *= 1e-250);
            j_cur *= 1e-250;
            j_next *= 1e-250;
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    for k in 0..=kmax {
        let v = vals[k] / norm;
        // J_k(-x) = (-1)^k J_k(x)
        out[k] = if x < 0.0 && k % 2 == 1 { -v } else { v };
    }
    out
}

/// Bessel values `J_0(tau)..` up to the first order past `tau` whose
/// magnitude and all later ones fall below [`PROPAGATOR_TAIL`].
fn bessel_until_tail(tau: f64) -> Result<Vec<f64>> {
    let kmax = (1.5 * tau.abs()) as usize + 60;
    let j = bessel_j(tau, kmax);
    let cut = (0..=kmax)
        .rev()
        .find(|&k| j[k].abs() >= PROPAGATOR_TAIL)
        .map(|k| k + 1)
        .unwrap_or(1);
    if cut + 10 > kmax {
        return Err(Error::NoConvergence(format!("Bessel tail for tau = {tau}")));
    }
    Ok(j[..=cut].to_vec())
}

/// `e^{i theta (H - shift)} v` by Chebyshev expansion.
pub fn propagate(v: &StateVector, m: &Model, theta: f64, shift: f64) -> Result<StateVector> {
    check_size(m.n, MAX_EVOLUTION_SITES)?;
    let base = VectorOperator::new(m)?;
    let r = base.shifted_scaled(shift, 1.0).norm_bound().max(1e-300);
    let op = base.shifted_scaled(shift, 1.0 / r);
    let j = bessel_until_tail(theta * r)?;
    let coeffs: Vec<C64> = j
        .iter()
        .enumerate()
        .map(|(k, &jk)| C64::new(0.0, 1.0).powu(k as u32) * jk * if k == 0 { 1.0 } else { 2.0 })
        .collect();
    StateVector::new(v.n, chebyshev_series(&op, &v.amps, &coeffs))
}

/// `<p| e^{i 2 k H / N} |p>` for normalized `p`.
pub fn exact_evolution_overlap(p: &StateVector, m: &Model, k: i64) -> Result<C64> {
    let u = propagate(p, m, 2.0 * k as f64 / m.n as f64, 0.0)?;
    Ok(p.dot(&u)? / p.norm().powi(2))
}

/// `cos(theta (H - shift)) v` by Chebyshev expansion.
fn cos_apply(v: &[C64], base: &VectorOperator, theta: f64, shift: f64) -> Result<Vec<C64>> {
    let r = base.shifted_scaled(shift, 1.0).norm_bound().max(1e-300);
    let op = base.shifted_scaled(shift, 1.0 / r);
    let j = bessel_until_tail(theta * r)?;
    let coeffs: Vec<C64> = j
        .iter()
        .enumerate()
        .map(|(k, &jk)| match k {
            0 => C64::new(jk, 0.0),
            _ if k % 2 == 1 => C64::new(0.0, 0.0),
            _ => C64::new(if (k / 2) % 2 == 0 { 2.0 * jk } else { -2.0 * jk }, 0.0),
        })
        .collect();
    Ok(chebyshev_series(&op, v, &coeffs))
}

/// Normalized `[cos((H - e0)/N)]^order v` by repeated application.
pub fn cosine_filter_exact(v: &StateVector, m: &Model, order: usize, e0: f64) -> Result<StateVector> {
    check_size(m.n, MAX_SITES)?;
    if v.n != m.n {
        return Err(Error::LengthMismatch { left: m.n, right: v.n });
    }
    let base = VectorOperator::new(m)?;
    let mut cur = v.amps.clone();
    for _ in 0..order {
        cur = cos_apply(&cur, &base, 1.0 / m.n as f64, e0)?;
        // guard against underflow over many steps; the result is normalized anyway
        let nrm = norm(&cur);
        if nrm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        cur.iter_mut().for_each(|x| *x /= nrm);
    }
    let mut out = StateVector::new(v.n, cur)?;
    out.normalize()?;
    Ok(out)
}

/// The binomial form `2^-M sum_k C(M,k) e^{i 2 mu (H - e0)/N} v` with
/// `mu = k - M/2`, keeping only `|mu| <= x sqrt(M)`. Normalized.
pub fn cosine_filter_binomial(v: &StateVector, m: &Model, order: usize, e0: f64, x: f64) -> Result<StateVector> {
    check_size(m.n, MAX_EVOLUTION_SITES)?;
    if v.n != m.n {
        return Err(Error::LengthMismatch { left: m.n, right: v.n });
    }
    let half = order as f64 / 2.0;
    let width = x * (order as f64).sqrt();
    let ks: Vec<usize> = (0..=order).filter(|&k| (k as f64 - half).abs() <= width).collect();
    let (Some(&k_lo), Some(_)) = (ks.first(), ks.last()) else {
        return Err(Error::InvalidArgument("binomial window is empty".into()));
    };
    let theta = 2.0 / m.n as f64;
    let ln_binom = |k: usize| {
        use statrs::function::gamma::ln_gamma;
        ln_gamma(order as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((order - k) as f64 + 1.0)
            - order as f64 * std::f64::consts::LN_2
    };
    let mut cur = propagate(v, m, theta * (k_lo as f64 - half), e0)?.amps;
    let mut acc = vec![C64::new(0.0, 0.0); cur.len()];
    for (i, &k) in ks.iter().enumerate() {
        if i > 0 {
            let next = StateVector::new(v.n, cur)?;
            cur = propagate(&next, m, theta, e0)?.amps;
        }
        let w = ln_binom(k).exp();
        acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += c * w);
    }
    let mut out = StateVector::new(v.n, acc)?;
    out.normalize()?;
    Ok(out)
}

/// Local density of states of a state in the dense eigenbasis.
#[derive(Clone, Debug)]
pub struct LocalDos {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
    /// `(bin center, total weight)`.
    pub histogram: Vec<(f64, f64)>,
    /// Kolmogorov-Smirnov distance of the weight CDF to the Gaussian CDF of
    /// the same mean and width (to a step function when `sigma` is zero).
    pub ks: f64,
}

pub fn local_dos_check(p: &StateVector, m: &Model, bins: usize) -> Result<LocalDos> {
    check_size(m.n, MAX_DENSE_SITES)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let (e, vecs) = dense_eigensystem(m)?;
    let nrm2 = p.norm().powi(2);
    let proj = linalg::adjoint(&vecs).dot(&Array1::from(p.amps.clone()));
    let weights: Vec<f64> = proj.iter().map(|c| c.norm_sqr() / nrm2).collect();
    let energies = e.to_vec();
    let total: f64 = weights.iter().sum();
    let mean = energies.iter().zip(&weights).map(|(e, w)| e * w).sum::<f64>() / total;
    let var = energies.iter().zip(&weights).map(|(e, w)| (e - mean).powi(2) * w).sum::<f64>() / total;
    let sigma = if var > 1e-20 { var.sqrt() } else { 0.0 };

    let tol = 1e-12 * (1.0 + mean.abs());
    // `left` selects the limit from below, which differs only for the step
    let cdf = |x: f64, left: bool| {
        if sigma == 0.0 {
            let above = if left { x > mean + tol } else { x >= mean - tol };
            if above {
                1.0
            } else {
                0.0
            }
        } else {
            0.5 * (1.0 + statrs::function::erf::erf((x - mean) / (sigma * std::f64::consts::SQRT_2)))
        }
    };
    let mut ks: f64 = 0.0;
    let mut acc = 0.0;
    let mut k = 0;
    while k < energies.len() {
        let x = energies[k];
        let below = acc;
        while k < energies.len() && energies[k] - x <= 1e-12 * (1.0 + x.abs()) {
            acc += weights[k] / total;
            k += 1;
        }
        ks = ks.max((below - cdf(x, true)).abs()).max((acc - cdf(x, false)).abs());
    }

    let (lo, hi) = (energies[0], energies[energies.len() - 1]);
    let width = ((hi - lo) / bins as f64).max(1e-300);
    let mut histogram: Vec<(f64, f64)> = (0..bins).map(|b| (lo + (b as f64 + 0.5) * width, 0.0)).collect();
    for (e, w) in energies.iter().zip(&weights) {
        let b = (((e - lo) / width) as usize).min(bins - 1);
        histogram[b].1 += w;
    }
    Ok(LocalDos {
        energies,
        weights,
        mean,
        sigma,
        histogram,
        ks,
    })
}

/// Dense amplitudes of an MPS, including its stored norm.
pub fn mps_to_vector(s: &Mps) -> Result<StateVector> {
    let n = s.len();
    check_size(n, MAX_SITES)?;
    if s.phys_dim() != 2 {
        return Err(Error::ShapeMismatch("only qubit chains convert to vectors".into()));
    }
    // c[idx, r]: amplitudes of the first i sites with open right bond r
    let mut c = Array2::<C64>::from_elem((1, 1), C64::new(1.0, 0.0));
    for a in s.sites() {
        let (_, _, r) = a.dim();
        let rows = c.nrows();
        let mut next = Array2::<C64>::zeros((2 * rows, r));
        for p in 0..2 {
            let block = c.dot(&a.slice(s![.., p, ..]));
            next.slice_mut(s![p * rows..(p + 1) * rows, ..]).assign(&block);
        }
        c = next;
    }
    let scale = s.log_norm().exp();
    StateVector::new(n, c.column(0).iter().map(|x| x * scale).collect())
}

/// MPS of a vector by successive SVDs from the left, truncated to `trunc`.
pub fn vector_to_mps(v: &StateVector, trunc: Truncation) -> Result<Mps> {
    trunc.validate()?;
    let n = v.n;
    let nrm = v.norm();
    if nrm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut rest: Array2<C64> = Array2::from_shape_vec((1 << (n - 1), 2), v.amps.iter().map(|x| x / nrm).collect())
        .expect("length checked")
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    let mut sites = Vec::with_capacity(n);
    let mut left = 1;
    for _ in 0..n - 1 {
        let svd = linalg::svd_truncate(&rest, &trunc)?;
        let k = svd.s.len();
        sites.push(svd.u.into_shape_with_order((left, 2, k)).expect("contiguous"));
        let mut sv = svd.vt;
        for (mut row, &x) in sv.rows_mut().into_iter().zip(svd.s.iter()) {
            row.mapv_inplace(|y| y * x);
        }
        let cols = sv.ncols() / 2;
        rest = sv
            .into_shape_with_order((k, cols, 2))
            .expect("contiguous")
            .permuted_axes([0, 2, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((k * 2, cols))
            .expect("contiguous");
        left = k;
    }
    let last: Array3<C64> = rest.into_shape_with_order((left, 2, 1)).expect("contiguous");
    sites.push(last);
    let mut out = Mps::from_tensors(sites)?;
    out.normalize()?;
    out.scale(C64::new(nrm, 0.0));
    Ok(out)
}
