//! Observables of filtered states and the scaling-law fits run on them.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Model;
use crate::linalg;
use crate::mps::{DensityMatrix, Mps};
use crate::pauli;
use crate::tensor::SchmidtSpectrum;

/// Points whose accumulated discarded weight exceeds this are left out of fits.
pub const CONVERGED_DISCARDED: f64 = 1e-4;

/// `<H^2> - <H>^2` by exact contraction, for the normalized state.
pub fn variance(s: &Mps, m: &Model) -> Result<f64> {
    let e = s.expectation(&m.mpo)?.re;
    Ok(s.expectation2(&m.mpo)? - e * e)
}

/// `(1/2) || rho - 1/2^L ||_1`.
pub fn trace_distance_inf_t(rho: &DensityMatrix) -> Result<f64> {
    let defect = rho.hermiticity_defect();
    if defect > 1e-10 {
        return Err(Error::InvalidArgument(format!("density matrix not Hermitian (defect {defect:e})")));
    }
    let dim = rho.dim() as f64;
    Ok(0.5 * rho.eigenvalues()?.iter().map(|p| (p - 1.0 / dim).abs()).sum::<f64>())
}

/// Smallest `k` with `1 - sum_{i<=k} lambda_i^2 <= epsilon` on the normalized
/// spectrum.
pub fn d_tr(spec: &SchmidtSpectrum, epsilon: f64) -> usize {
    let norm = spec.normalized();
    let mut kept = 0.0;
    for (k, l) in norm.values.iter().enumerate() {
        kept += l * l;
        if 1.0 - kept <= epsilon + 1e-12 {
            return k + 1;
        }
    }
    norm.values.len().max(1)
}

/// Window `(first site, length)` of local term `k`.
fn term_window(m: &Model, k: usize) -> (usize, usize) {
    (k, m.term_len(k))
}

/// `I^{⊗before} ⊗ op ⊗ I^{⊗after}`, first site major.
fn embed(op: &Array2<C64>, before: usize, after: usize) -> Array2<C64> {
    let mut out = Array2::<C64>::eye(1);
    for _ in 0..before {
        out = linalg::kron(&out, &pauli::identity());
    }
    out = linalg::kron(&out, op);
    for _ in 0..after {
        out = linalg::kron(&out, &pauli::identity());
    }
    out
}

/// `<h_a h_b>` (complex in general when the terms overlap).
pub fn term_product(s: &mut Mps, m: &Model, a: usize, b: usize) -> Result<C64> {
    let (sa, la) = term_window(m, a);
    let (sb, lb) = term_window(m, b);
    if sa + la <= sb {
        return s.window_expectation(&[(sa, la, &m.terms[a]), (sb, lb, &m.terms[b])]);
    }
    if sb + lb <= sa {
        // disjoint operators commute
        return s.window_expectation(&[(sb, lb, &m.terms[b]), (sa, la, &m.terms[a])]);
    }
    let lo = sa.min(sb);
    let hi = (sa + la).max(sb + lb);
    let len = hi - lo;
    let oa = embed(&m.terms[a], sa - lo, hi - sa - la);
    let ob = embed(&m.terms[b], sb - lo, hi - sb - lb);
    s.local_expectation(&oa.dot(&ob), lo, len)
}

/// `<h_n>` for every local term.
pub fn energy_profile(s: &mut Mps, m: &Model) -> Result<Vec<f64>> {
    (0..m.terms.len())
        .map(|k| {
            let (st, len) = term_window(m, k);
            Ok(s.local_expectation(&m.terms[k], st, len)?.re)
        })
        .collect()
}

/// Connected correlators `Re<h_a h_b> - <h_a><h_b>` for all pairs.
pub fn connected_matrix(s: &mut Mps, m: &Model) -> Result<Array2<f64>> {
    let n = m.terms.len();
    let mean = energy_profile(s, m)?;
    let mut c = Array2::<f64>::zeros((n, n));
    for a in 0..n {
        for b in a..n {
            let v = term_product(s, m, a, b)?.re - mean[a] * mean[b];
            c[[a, b]] = v;
            c[[b, a]] = v;
        }
    }
    Ok(c)
}

/// `(x, Re<h_nc h_{nc+x}> - <h_nc><h_{nc+x}>)` for every legal `x`.
pub fn energy_correlations(s: &mut Mps, m: &Model, n_c: usize) -> Result<Vec<(isize, f64)>> {
    let n = m.terms.len();
    if n_c >= n {
        return Err(Error::OutOfRange { index: n_c, limit: n });
    }
    let (st, len) = term_window(m, n_c);
    let h_c = s.local_expectation(&m.terms[n_c], st, len)?.re;
    (0..n)
        .map(|k| {
            let (sk, lk) = term_window(m, k);
            let hk = s.local_expectation(&m.terms[k], sk, lk)?.re;
            let v = term_product(s, m, n_c, k)?.re - h_c * hk;
            Ok((k as isize - n_c as isize, v))
        })
        .collect()
}

/// Start of the `0011` substring closest to the chain center (ties go left).
pub fn xyz_reference_site(bits: &[u8]) -> Option<usize> {
    let center = bits.len() as f64 / 2.0;
    bits.windows(4)
        .enumerate()
        .filter(|(_, w)| *w == [0, 0, 1, 1])
        .map(|(i, _)| i)
        .min_by(|&a, &b| {
            let da = (a as f64 - center).abs();
            let db = (b as f64 - center).abs();
            da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
        })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScalingFit {
    /// `"power"` for `A x^-eta`, `"affine-exp"` for `a D0^(1/delta) + b`.
    pub form: String,
    pub params: Vec<FitParam>,
    /// Root of the residual sum of squares.
    pub residual: f64,
    pub n_points: usize,
    /// Smallest and largest abscissa used.
    pub window: (f64, f64),
}

impl ScalingFit {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.param(name).map(|p| p.value).unwrap_or(f64::NAN)
    }

    /// Curve value at `x` (for the affine-exp form `x` is `delta`).
    pub fn eval(&self, x: f64) -> f64 {
        match self.form.as_str() {
            "power" => self.value("A") * x.powf(-self.value("eta")),
            _ => self.value("a") * self.value("D0").powf(1.0 / x) + self.value("b"),
        }
    }
}

fn window(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Least squares of `ln y = ln A - eta ln x`.
pub fn fit_power(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::DegenerateFit("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = if points.len() > 2 { rss / (n - 2.0) } else { 0.0 };
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let a = intercept.exp();
    Ok(ScalingFit {
        form: "power".into(),
        params: vec![
            FitParam {
                name: "A".into(),
                value: a,
                error: a * se_intercept,
            },
            FitParam {
                name: "eta".into(),
                value: -slope,
                error: se_slope,
            },
        ],
        residual: rss.sqrt(),
        n_points: points.len(),
        window: window(&points.iter().map(|p| p.0).collect::<Vec<_>>()),
    })
}

/// Linear least squares of `y = a z + b`; returns `(a, b, rss)`.
fn affine_lsq(z: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = z.len() as f64;
    let mz = z.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let szz: f64 = z.iter().map(|v| (v - mz).powi(2)).sum();
    if !(szz > 0.0) || !szz.is_finite() {
        return None;
    }
    let szy: f64 = z.iter().zip(y).map(|(a, b)| (a - mz) * (b - my)).sum();
    let a = szy / szz;
    let b = my - a * mz;
    let rss = z.iter().zip(y).map(|(zi, yi)| (yi - a * zi - b).powi(2)).sum();
    Some((a, b, rss))
}

/// Fit of `y = a D0^(1/delta) + b` over points `(delta, y)`. `D0` is found by
/// a grid scan in `ln ln D0` refined by golden-section search, with `(a, b)`
/// solved linearly at every trial value.
pub fn fit_d0(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(d, y)| !(d > 0.0) || !y.is_finite()) {
        return Err(Error::DegenerateFit("deltas must be positive and data finite".into()));
    }
    let u: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (umin, umax) = window(&u);
    if umax < 2.0 * umin {
        return Err(Error::DegenerateFit("1/delta must span at least a factor 2".into()));
    }
    // t = ln q, q = ln D0
    let rss_at = |t: f64| -> f64 {
        let q = t.exp();
        let z: Vec<f64> = u.iter().map(|ui| (q * ui).exp()).collect();
        affine_lsq(&z, &y).map(|r| r.2).unwrap_or(f64::INFINITY)
    };
    let t_lo = (1e-6f64).ln();
    let t_hi = (600.0 / umax).min(20.0).ln();
    let steps = 600;
    let grid: Vec<f64> = (0..=steps).map(|i| t_lo + (t_hi - t_lo) * i as f64 / steps as f64).collect();
    let (best_i, _) = grid
        .iter()
        .map(|&t| rss_at(t))
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if r < acc.1 { (i, r) } else { acc });
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(steps)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (rss_at(c), rss_at(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = rss_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = rss_at(d);
        }
    }
    let t = 0.5 * (a + b);
    let q = t.exp();
    let z: Vec<f64> = u.iter().map(|ui| (q * ui).exp()).collect();
    let (ca, cb, rss) = affine_lsq(&z, &y).ok_or_else(|| Error::DegenerateFit("singular design".into()))?;
    let d0 = q.exp();

    // standard errors from the Jacobian in (a, b, q)
    let np = points.len();
    let dof = np as f64 - 3.0;
    let s2 = if dof > 0.0 { rss / dof } else { 0.0 };
    let mut jtj = Array2::<f64>::zeros((3, 3));
    for (ui, zi) in u.iter().zip(&z) {
        let row = [*zi, 1.0, ca * ui * zi];
        for r in 0..3 {
            for c2 in 0..3 {
                jtj[[r, c2]] += row[r] * row[c2];
            }
        }
    }
    let errs = covariance_diag(jtj).map(|v| v.mapv(|x| (x * s2).max(0.0).sqrt()));
    let (ea, eb, eq) = match errs {
        Some(e) => (e[0], e[1], e[2]),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(ScalingFit {
        form: "affine-exp".into(),
        params: vec![
            FitParam {
                name: "a".into(),
                value: ca,
                error: ea,
            },
            FitParam {
                name: "b".into(),
                value: cb,
                error: eb,
            },
            FitParam {
                name: "D0".into(),
                value: d0,
                error: d0 * eq,
            },
        ],
        residual: rss.sqrt(),
        n_points: np,
        window: window(&points.iter().map(|p| p.0).collect::<Vec<_>>()),
    })
}

/// Diagonal of the inverse of a small symmetric positive matrix.
fn covariance_diag(m: Array2<f64>) -> Option<Array1<f64>> {
    let (ev, vecs) = linalg::eigh_real(m).ok()?;
    let top = ev.iter().cloned().fold(0.0, f64::max);
    if ev.iter().any(|&e| e <= top * 1e-15) {
        return None;
    }
    let n = ev.len();
    Some(Array1::from_shape_fn(n, |i| (0..n).map(|k| vecs[[i, k]].powi(2) / ev[k]).sum()))
}

/// Keeps points whose discarded weight is below [`CONVERGED_DISCARDED`].
pub fn converged_points(points: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.2 < CONVERGED_DISCARDED)
        .map(|p| (p.0, p.1))
        .collect()
}

/// `gamma sqrt(N) / ln D1 * (D0^(1/delta) - 1)`.
pub fn bound_rhs(n: usize, delta: f64, d0: f64, d1: f64, gamma: f64) -> f64 {
    gamma * (n as f64).sqrt() / d1.ln() * (d0.powf(1.0 / delta) - 1.0)
}

/// `g(N) = (D1^(2 / (gamma sqrt N)) - 1)^-1`.
pub fn bound_g(n: usize, d1: f64, gamma: f64) -> f64 {
    1.0 / (d1.powf(2.0 / (gamma * (n as f64).sqrt())) - 1.0)
}

/// Finite-size form `2 (1 + g) D0^(1/delta) - (1 + 2 g)`.
pub fn bound_rhs_finite(n: usize, delta: f64, d0: f64, d1: f64, gamma: f64) -> f64 {
    let g = bound_g(n, d1, gamma);
    2.0 * (1.0 + g) * d0.powf(1.0 / delta) - (1.0 + 2.0 * g)
}

/// `log2(D0^(1/delta) - 1) + log2(N) / 2 + k2`.
pub fn entropy_bound(n: usize, delta: f64, d0: f64, k2: f64) -> f64 {
    (d0.powf(1.0 / delta) - 1.0).log2() + 0.5 * (n as f64).log2() + k2
}
