//! Thin wrappers over LAPACK for the handful of dense factorizations the
//! tensor-network code needs, plus the truncation rule shared by every SVD.

use ndarray::{s, Array1, Array2, ArrayBase, Data, Ix2};
use ndarray_linalg::{Eigh, EighInto, EigValshInto, JobSvd, QRInto, SVDDCInto, SVDInto, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one are always dropped.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Relative tolerance under which two singular values count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Bond-dimension cap and discarded-weight budget for one truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub d_max: usize,
    pub weight_tol: f64,
}

impl Truncation {
    pub fn new(d_max: usize, weight_tol: f64) -> Self {
        Self { d_max, weight_tol }
    }

    /// No cap; only the noise floor applies.
    pub fn exact() -> Self {
        Self {
            d_max: usize::MAX,
            weight_tol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max < 1 {
            return Err(Error::InvalidArgument("d_max must be at least 1".into()));
        }
        if !(self.weight_tol >= 0.0) {
            return Err(Error::InvalidArgument(
                "weight_tol must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Number of singular values to keep and the discarded fraction of the
/// squared weight. `s` must be sorted in descending order.
pub fn kept_rank(s: &[f64], trunc: &Truncation) -> (usize, f64) {
    if s.is_empty() {
        return (0, 0.0);
    }
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return (1, 0.0);
    }
    let floor = NOISE_FLOOR * s[0];
    let n_eff = s.iter().take_while(|&&x| x >= floor).count().max(1);
    let cap = trunc.d_max.min(n_eff);

    // tail[k] = sum of squares from k onwards
    let mut tail = vec![0.0; s.len() + 1];
    for k in (0..s.len()).rev() {
        tail[k] = tail[k + 1] + s[k] * s[k];
    }
    let budget = trunc.weight_tol * total;
    let mut k = 1;
    while k < cap && tail[k] > budget {
        k += 1;
    }
    while k < cap && (s[k - 1] - s[k]).abs() <= DEGENERACY_TOL * s[k - 1] {
        k += 1;
    }
    (k, tail[k] / total)
}

pub struct TruncatedSvd {
    pub u: Array2<C64>,
    pub s: Vec<f64>,
    pub vt: Array2<C64>,
    /// Sum of squares of every singular value, kept or not.
    pub total: f64,
    pub discarded: f64,
}

/// Full thin SVD, divide-and-conquer first with a QR-iteration fallback.
pub fn svd<S: Data<Elem = C64>>(
    a: &ArrayBase<S, Ix2>,
) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let owned = a.to_owned();
    match owned.clone().svddc_into(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => Ok((u, s, vt)),
        _ => match owned.svd_into(true, true) {
            Ok((Some(u), s, Some(vt))) => {
                let k = s.len();
                Ok((
                    u.slice(s![.., ..k]).to_owned(),
                    s,
                    vt.slice(s![..k, ..]).to_owned(),
                ))
            }
            Ok(_) => Err(Error::Linalg("svd returned no vectors".into())),
            Err(e) => Err(e.into()),
        },
    }
}

pub fn svd_truncate<S: Data<Elem = C64>>(
    a: &ArrayBase<S, Ix2>,
    trunc: &Truncation,
) -> Result<TruncatedSvd> {
    let (u, s, vt) = svd(a)?;
    let sv: Vec<f64> = s.to_vec();
    let total: f64 = sv.iter().map(|x| x * x).sum();
    let (k, discarded) = kept_rank(&sv, trunc);
    Ok(TruncatedSvd {
        u: u.slice(s![.., ..k]).to_owned(),
        s: sv[..k].to_vec(),
        vt: vt.slice(s![..k, ..]).to_owned(),
        total,
        discarded,
    })
}

/// Thin QR: `a = q r` with `q` having orthonormal columns.
pub fn qr<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (m, n) = a.dim();
    let (q, r) = a.to_owned().qr_into()?;
    let k = m.min(n);
    Ok((
        q.slice(s![.., ..k]).to_owned(),
        r.slice(s![..k, ..]).to_owned(),
    ))
}

/// `a = l q` with `q` having orthonormal rows.
pub fn lq<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (q, r) = qr(&adjoint(a))?;
    Ok((adjoint(&r), adjoint(&q)))
}

pub fn adjoint<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Array2<C64> {
    a.t().mapv(|x| x.conj())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Result<(Array1<f64>, Array2<C64>)> {
    Ok(a.eigh(UPLO::Lower)?)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Result<Array1<f64>> {
    Ok(eigh(a)?.0)
}

/// Real symmetric eigen-decomposition, eigenvalues ascending.
pub fn eigh_real(a: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    Ok(a.eigh_into(UPLO::Lower)?)
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn eigvalsh_real(a: Array2<f64>) -> Result<Array1<f64>> {
    Ok(a.eigvalsh_into(UPLO::Lower)?)
}

/// Operator (spectral) norm of a Hermitian matrix.
pub fn hermitian_norm<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> Result<f64> {
    let ev = eigvalsh(a)?;
    Ok(ev.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect<S: Data<Elem = C64>>(a: &ArrayBase<S, Ix2>) -> f64 {
    let (n, m) = a.dim();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..m.min(n) {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    ndarray::linalg::kron(a, b)
}

pub fn frobenius<S: Data<Elem = C64>, D: ndarray::Dimension>(a: &ArrayBase<S, D>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(d: usize, tol: f64) -> Truncation {
        Truncation::new(d, tol)
    }

    #[test]
    fn kept_rank_caps_and_tolerance() {
        let s = [4.0, 2.0, 1.0, 0.5];
        assert_eq!(kept_rank(&s, &tr(10, 0.0)).0, 4);
        assert_eq!(kept_rank(&s, &tr(2, 0.0)).0, 2);
        let (k, w) = kept_rank(&s, &tr(10, 0.05));
        assert_eq!(k, 3);
        assert!((w - 0.25 / 21.25).abs() < 1e-15);
    }

    #[test]
    fn kept_rank_noise_floor() {
        let s = [1.0, 1e-15, 1e-16];
        let (k, w) = kept_rank(&s, &tr(10, 0.0));
        assert_eq!(k, 1);
        assert!(w < 1e-29);
    }

    #[test]
    fn kept_rank_degenerate_boundary() {
        let s = [1.0, 0.5, 0.5, 0.5, 0.1];
        // tolerance alone would cut after the second value
        let (k, _) = kept_rank(&s, &tr(10, 0.4));
        assert_eq!(k, 4);
        // hard cap wins over degeneracy
        assert_eq!(kept_rank(&s, &tr(3, 0.4)).0, 3);
    }

    #[test]
    fn lq_reconstructs() {
        let a = Array2::from_shape_fn((3, 5), |(i, j)| C64::new(i as f64 - j as f64, (i * j) as f64));
        let (l, q) = lq(&a).unwrap();
        let back = l.dot(&q);
        assert!(frobenius(&(back - &a)) < 1e-12);
        let qq = q.dot(&adjoint(&q));
        assert!(frobenius(&(qq - Array2::<C64>::eye(3))) < 1e-12);
    }
}
