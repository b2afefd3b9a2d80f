//! Nearest-neighbour spin-1/2 chains: MPO construction, traceless local
//! terms and the rescaled operator fed to the Chebyshev recurrence.

use ndarray::{Array2, Array4};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mpo::Mpo;
use crate::pauli::{identity, sigma_x, sigma_y, sigma_z};

/// One coupling `j * a ⊗ b` on the bond `(i, i + 1)`.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub j: f64,
    pub a: Array2<C64>,
    pub b: Array2<C64>,
}

/// `H = sum_i fields[i] + sum_i sum_c bonds[i][c]`, open boundary.
#[derive(Clone, Debug)]
pub struct NearestNeighbour {
    pub fields: Vec<Array2<C64>>,
    pub bonds: Vec<Vec<Coupling>>,
}

impl NearestNeighbour {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    fn uniform(n: usize, field: Array2<C64>, bond: Vec<Coupling>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("chain needs N >= 2, got {n}")));
        }
        Ok(Self {
            fields: vec![field; n],
            bonds: vec![bond; n - 1],
        })
    }

    /// `scale * (H - shift)`, with the shift spread evenly over the sites.
    pub fn shifted_scaled(&self, shift: f64, scale: f64) -> Self {
        let n = self.len() as f64;
        let eye = identity();
        let fields = self
            .fields
            .iter()
            .map(|f| (f - &eye.mapv(|x| x * (shift / n))).mapv(|x| x * scale))
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| {
                b.iter()
                    .map(|c| Coupling {
                        j: c.j * scale,
                        a: c.a.clone(),
                        b: c.b.clone(),
                    })
                    .collect()
            })
            .collect();
        Self { fields, bonds }
    }

    /// Lower-triangular MPO. Bond `i` has dimension `channels(i) + 2`; the
    /// last index is the "nothing placed yet" state and index 0 "done".
    pub fn to_mpo(&self) -> Result<Mpo> {
        let n = self.len();
        let eye = identity();
        let width = |i: usize| self.bonds[i].len() + 2;
        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let wl = if i == 0 { 1 } else { width(i - 1) };
            let wr = if i == n - 1 { 1 } else { width(i) };
            // rows are only cut at site 0 (where just the "not started" row
            // survives), columns only at the last site (just "done")
            let row = |r: usize| -> Option<usize> { (i > 0).then_some(r) };
            let col = |c: usize| -> Option<usize> { (i + 1 < n || c == 0).then_some(c) };
            let row_last = if i == 0 { Some(0) } else { row(wl - 1) };
            let col_last = if i == n - 1 { None } else { col(wr - 1) };
            let mut w = Array4::<C64>::zeros((wl, 2, 2, wr));
            let mut put = |r: Option<usize>, c: Option<usize>, op: &Array2<C64>| {
                if let (Some(r), Some(c)) = (r, c) {
                    let mut blk = w.slice_mut(ndarray::s![r, .., .., c]);
                    blk += op;
                }
            };
            put(row_last, col_last, &eye);
            if i > 0 {
                put(row(0), col(0), &eye);
            }
            put(row_last, col(0), &self.fields[i]);
            if i + 1 < n {
                for (c, cp) in self.bonds[i].iter().enumerate() {
                    put(row_last, col(c + 1), &cp.a.mapv(|x| x * cp.j));
                }
            }
            if i > 0 {
                for (c, cp) in self.bonds[i - 1].iter().enumerate() {
                    put(row(c + 1), col(0), &cp.b);
                }
            }
            sites.push(w);
        }
        Mpo::new(sites)
    }

    /// Raw two-site terms: bond couplings plus fields split half-and-half
    /// between the two bond terms touching a site (whole at the chain ends).
    pub fn raw_terms(&self) -> Vec<Array2<C64>> {
        let n = self.len();
        let eye = identity();
        (0..n - 1)
            .map(|i| {
                let mut t = Array2::<C64>::zeros((4, 4));
                for cp in &self.bonds[i] {
                    t += &linalg::kron(&cp.a, &cp.b).mapv(|x| x * cp.j);
                }
                let wl = if i == 0 { 1.0 } else { 0.5 };
                let wr = if i + 1 == n - 1 { 1.0 } else { 0.5 };
                t += &linalg::kron(&self.fields[i], &eye).mapv(|x| x * wl);
                t += &linalg::kron(&eye, &self.fields[i + 1]).mapv(|x| x * wr);
                t
            })
            .collect()
    }
}

/// Folds two-site terms into the traceless form: every output term `h_n`
/// (n < N-1) has vanishing trace and vanishing partial trace over its left
/// site. The removed `1 ⊗ B` pieces move right; the final leftover is the
/// single-site term on the last spin.
pub fn tracelessize(raw: &[Array2<C64>]) -> Vec<Array2<C64>> {
    let eye = identity();
    let mut carry = Array2::<C64>::zeros((2, 2));
    let mut out = Vec::with_capacity(raw.len() + 1);
    for r in raw {
        let t = r + &linalg::kron(&carry, &eye);
        let b = partial_trace_left(&t).mapv(|x| x * 0.5);
        out.push(t - linalg::kron(&eye, &b));
        carry = b;
    }
    out.push(carry);
    out
}

/// `tr_left` of a 4×4 operator in first-site-major order.
pub fn partial_trace_left(t: &Array2<C64>) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(i, j)| t[[i, j]] + t[[2 + i, 2 + j]])
}

/// `tr_right` of a 4×4 operator in first-site-major order.
pub fn partial_trace_right(t: &Array2<C64>) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(i, j)| t[[2 * i, 2 * j]] + t[[2 * i + 1, 2 * j + 1]])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Ising,
    Xyz,
    StaggeredHeisenberg,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ising => "ising",
            ModelKind::Xyz => "xyz",
            ModelKind::StaggeredHeisenberg => "staggered_heisenberg",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    pub n: usize,
    pub params: Vec<(String, f64)>,
    pub nn: NearestNeighbour,
    pub mpo: Mpo,
    /// `terms[n]` acts on `(n, n+1)` as a 4×4 matrix for `n < N-1`; the last
    /// entry is a 2×2 operator on the final spin.
    pub terms: Vec<Array2<C64>>,
    pub h_norm_max: f64,
    pub h_min: f64,
}

impl Model {
    fn from_nn(kind: ModelKind, params: Vec<(String, f64)>, nn: NearestNeighbour) -> Result<Self> {
        let n = nn.len();
        let mpo = nn.to_mpo()?;
        let terms = tracelessize(&nn.raw_terms());
        let norms = terms
            .iter()
            .map(linalg::hermitian_norm)
            .collect::<Result<Vec<f64>>>()?;
        let h_norm_max = norms.iter().cloned().fold(0.0, f64::max);
        let h_min = norms[..n - 1].iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind,
            n,
            params,
            nn,
            mpo,
            terms,
            h_norm_max,
            h_min,
        })
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    /// Number of sites the local term `n` acts on.
    pub fn term_len(&self, n: usize) -> usize {
        if n + 1 < self.n {
            2
        } else {
            1
        }
    }

    /// MPO for `scale * (H - shift)`.
    pub fn shifted_mpo(&self, shift: f64, scale: f64) -> Result<Mpo> {
        self.nn.shifted_scaled(shift, scale).to_mpo()
    }

    /// MPO for `alpha (H - e0) / N`.
    pub fn rescaled(&self, e0: f64, alpha: f64) -> Result<Mpo> {
        self.shifted_mpo(e0, alpha / self.n as f64)
    }
}

/// `H = J sum σz σz + g sum σx + h sum σz`.
pub fn build_ising(n: usize, j: f64, g: f64, h: f64) -> Result<Model> {
    let field = sigma_x().mapv(|x| x * g) + sigma_z().mapv(|x| x * h);
    let bond = vec![Coupling {
        j,
        a: sigma_z(),
        b: sigma_z(),
    }];
    let nn = NearestNeighbour::uniform(n, field, bond)?;
    let params = vec![("J".into(), j), ("g".into(), g), ("h".into(), h)];
    Model::from_nn(ModelKind::Ising, params, nn)
}

/// `H = sum (Jx σxσx + Jy σyσy + Jz σzσz) + h sum σz`.
pub fn build_xyz(n: usize, jx: f64, jy: f64, jz: f64, h: f64) -> Result<Model> {
    let field = sigma_z().mapv(|x| x * h);
    let bond = vec![
        Coupling {
            j: jx,
            a: sigma_x(),
            b: sigma_x(),
        },
        Coupling {
            j: jy,
            a: sigma_y(),
            b: sigma_y(),
        },
        Coupling {
            j: jz,
            a: sigma_z(),
            b: sigma_z(),
        },
    ];
    let nn = NearestNeighbour::uniform(n, field, bond)?;
    let params = vec![
        ("Jx".into(), jx),
        ("Jy".into(), jy),
        ("Jz".into(), jz),
        ("h".into(), h),
    ];
    Model::from_nn(ModelKind::Xyz, params, nn)
}

/// `H = sum_n (-1)^n σ_n · σ_{n+1}`; every uniform product state is an
/// eigenstate.
pub fn build_staggered_heisenberg(n: usize) -> Result<Model> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("chain needs N >= 2, got {n}")));
    }
    let bonds = (0..n - 1)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            [sigma_x(), sigma_y(), sigma_z()]
                .into_iter()
                .map(|p| Coupling {
                    j: s,
                    a: p.clone(),
                    b: p,
                })
                .collect()
        })
        .collect();
    let nn = NearestNeighbour {
        fields: vec![Array2::zeros((2, 2)); n],
        bonds,
    };
    Model::from_nn(ModelKind::StaggeredHeisenberg, Vec::new(), nn)
}

/// Pure-field chain `h sum σz` (zero couplings), handy as a trivial check.
pub fn build_field_only(n: usize, h: f64) -> Result<Model> {
    build_ising(n, 0.0, 0.0, h)
}

/// Estimated spectral edges of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumEdges {
    pub e_min: f64,
    pub e_max: f64,
    /// False when the sweeps hit their cap before the energy settled.
    pub converged: bool,
}

impl SpectrumEdges {
    /// `0.9 N / max(|E_min - e0|, |E_max - e0|)`, capped at 1.
    pub fn alpha(&self, n: usize, e0: f64) -> f64 {
        let reach = (self.e_min - e0).abs().max((self.e_max - e0).abs());
        if reach == 0.0 {
            return 1.0;
        }
        (0.9 * n as f64 / reach).min(1.0)
    }

    pub fn contains(&self, e0: f64) -> bool {
        e0 >= self.e_min && e0 <= self.e_max
    }
}

/// Edges from two-site DMRG on `H` and `-H`.
pub fn spectrum_edges(m: &Model, d_dmrg: usize) -> Result<SpectrumEdges> {
    let opts = crate::dmrg::DmrgOpts {
        d_max: d_dmrg,
        ..Default::default()
    };
    let lo = crate::dmrg::ground_state(&m.mpo, &opts)?;
    let hi = crate::dmrg::ground_state(&m.mpo.scaled(C64::new(-1.0, 0.0)), &opts)?;
    Ok(SpectrumEdges {
        e_min: lo.energy,
        e_max: -hi.energy,
        converged: lo.converged && hi.converged,
    })
}
