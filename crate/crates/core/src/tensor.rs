//! Dense complex tensors, pairwise contraction and truncated bipartite
//! factorization.
//!
//! Storage is row-major: for shape `[d0, d1, ..., dk]` the entry
//! `(i0, i1, ..., ik)` lives at offset `((i0 * d1 + i1) * d2 + ...) * dk + ik`.
//! Contraction permutes both operands so the summed indices are adjacent,
//! reshapes to matrices and hands the product to BLAS.

use ndarray::{Array2, ArrayD, ArrayView2, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, Truncation};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    data: ArrayD<C64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn from_shape_vec(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self {
            data: ArrayD::from_shape_vec(IxDyn(shape), data)?,
        })
    }

    /// Takes ownership of an array, copying into row-major order if needed.
    pub fn from_array(a: ArrayD<C64>) -> Self {
        let data = if a.is_standard_layout() {
            a
        } else {
            a.as_standard_layout().into_owned()
        };
        Self { data }
    }

    pub fn from_matrix(m: Array2<C64>) -> Self {
        Self::from_array(m.into_dyn())
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn rank(&self) -> usize {
        self.data.ndim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[C64] {
        self.data
            .as_slice()
            .expect("tensor data is kept in standard layout")
    }

    pub fn array(&self) -> &ArrayD<C64> {
        &self.data
    }

    pub fn into_array(self) -> ArrayD<C64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[IxDyn(index)]
    }

    pub fn norm(&self) -> f64 {
        linalg::frobenius(&self.data)
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            data: self.data.mapv(|x| x * c),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            data: self.data.mapv(|x| x.conj()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn permuted(&self, axes: &[usize]) -> Result<Self> {
        check_permutation(axes, self.rank())?;
        Ok(Self::from_array(
            self.data.view().permuted_axes(IxDyn(axes)).to_owned(),
        ))
    }

    pub fn reshaped(self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        Ok(Self {
            data: self.data.into_shape_with_order(IxDyn(shape))?,
        })
    }

    /// Matrix view grouping the first `split` indices into rows.
    pub fn matrix(&self, split: usize) -> ArrayView2<'_, C64> {
        let rows: usize = self.shape()[..split].iter().product();
        let cols: usize = self.shape()[split..].iter().product();
        self.data
            .view()
            .into_shape_with_order((rows, cols))
            .expect("standard layout")
    }

    /// Maximum entrywise difference to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_permutation(axes: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if axes.len() != rank {
        return Err(Error::ShapeMismatch(format!(
            "permutation {axes:?} for rank {rank}"
        )));
    }
    for &a in axes {
        if a >= rank || seen[a] {
            return Err(Error::ShapeMismatch(format!(
                "invalid permutation {axes:?}"
            )));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Contracts `a` and `b` over the given index pairs. The result carries
/// `a`'s free indices followed by `b`'s free indices, each in original order.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(ia, ib) in pairs {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(Error::ContractShape(format!(
                "pair ({ia}, {ib}) out of range for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if used_a[ia] || used_b[ib] {
            return Err(Error::ContractShape(format!("index repeated in pair ({ia}, {ib})")));
        }
        if a.shape()[ia] != b.shape()[ib] {
            return Err(Error::ContractShape(format!(
                "dimension {} of index {ia} does not match {} of index {ib}",
                a.shape()[ia],
                b.shape()[ib]
            )));
        }
        used_a[ia] = true;
        used_b[ib] = true;
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !used_b[i]).collect();

    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|p| p.0));
    let mut perm_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    perm_b.extend(free_b.iter().copied());

    let rows: usize = free_a.iter().map(|&i| a.shape()[i]).product();
    let inner: usize = pairs.iter().map(|p| a.shape()[p.0]).product();
    let cols: usize = free_b.iter().map(|&i| b.shape()[i]).product();

    let ap = a.data.view().permuted_axes(IxDyn(&perm_a));
    let ap = ap.as_standard_layout();
    let am = ap.view().into_shape_with_order((rows, inner))?;
    let bp = b.data.view().permuted_axes(IxDyn(&perm_b));
    let bp = bp.as_standard_layout();
    let bm = bp.view().into_shape_with_order((inner, cols))?;
    let prod = am.dot(&bm);

    let mut shape: Vec<usize> = free_a.iter().map(|&i| a.shape()[i]).collect();
    shape.extend(free_b.iter().map(|&i| b.shape()[i]));
    Ok(Tensor {
        data: prod.into_shape_with_order(IxDyn(&shape))?,
    })
}

/// Descending Schmidt coefficients across a cut plus discarded-weight bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum {
    /// Kept singular values, descending.
    pub values: Vec<f64>,
    /// Discarded squared weight as a fraction of `total`.
    pub discarded_weight: f64,
    /// Sum of squares of all singular values before truncation.
    pub total: f64,
}

impl SchmidtSpectrum {
    /// Spectrum of an untruncated, already normalized cut.
    pub fn from_values(values: Vec<f64>) -> Self {
        let total = values.iter().map(|x| x * x).sum();
        Self {
            values,
            discarded_weight: 0.0,
            total,
        }
    }

    pub fn kept_weight(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    /// Rescaled so the kept values satisfy `sum(lambda^2) = 1`.
    pub fn normalized(&self) -> Self {
        let w = self.kept_weight();
        let scale = if w > 0.0 { w.sqrt().recip() } else { 0.0 };
        Self {
            values: self.values.iter().map(|x| x * scale).collect(),
            discarded_weight: self.discarded_weight,
            total: self.total,
        }
    }

    /// Von Neumann entropy in bits of the normalized kept spectrum.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.normalized().values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `-sum lambda^2 log2 lambda^2` for Schmidt coefficients `lambda`.
pub fn entropy_bits(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Result of [`split_truncate`]: `t ≈ left · diag(values) · right`.
#[derive(Clone, Debug)]
pub struct Split {
    /// Grouped left indices followed by the new bond; an isometry.
    pub left: Tensor,
    /// The new bond followed by the remaining indices; rows orthonormal.
    pub right: Tensor,
    pub spectrum: SchmidtSpectrum,
}

impl Split {
    /// Rebuilds `left · diag(values) · right` with `t`'s index order restored.
    pub fn reconstruct(&self, left_indices: &[usize]) -> Result<Tensor> {
        let k = self.spectrum.values.len();
        let lrank = self.left.rank() - 1;
        let mut scaled = self.left.clone();
        for (mut col, &lam) in scaled
            .data
            .view_mut()
            .into_shape_with_order((self.left.len() / k, k))?
            .columns_mut()
            .into_iter()
            .zip(self.spectrum.values.iter())
        {
            col.mapv_inplace(|x| x * lam);
        }
        let joined = contract(&scaled, &self.right, &[(lrank, 0)])?;
        let rank = joined.rank();
        let right_indices: Vec<usize> = (0..rank).filter(|i| !left_indices.contains(i)).collect();
        let mut order = left_indices.to_vec();
        order.extend(right_indices);
        // joined axis j holds original index order[j]
        let mut inverse = vec![0; rank];
        for (j, &orig) in order.iter().enumerate() {
            inverse[orig] = j;
        }
        joined.permuted(&inverse)
    }
}

/// Splits `t` into an isometry over `left_indices` and a remainder, keeping
/// at most `trunc.d_max` Schmidt values and discarding at most
/// `trunc.weight_tol` of the squared weight.
pub fn split_truncate(t: &Tensor, left_indices: &[usize], trunc: Truncation) -> Result<Split> {
    trunc.validate()?;
    let rank = t.rank();
    if left_indices.is_empty() || left_indices.len() >= rank {
        return Err(Error::Partition(format!(
            "left index set {left_indices:?} must be a proper nonempty subset of {rank} indices"
        )));
    }
    let mut seen = vec![false; rank];
    for &i in left_indices {
        if i >= rank || seen[i] {
            return Err(Error::Partition(format!("invalid left index set {left_indices:?}")));
        }
        seen[i] = true;
    }
    let right_indices: Vec<usize> = (0..rank).filter(|&i| !seen[i]).collect();
    let mut perm = left_indices.to_vec();
    perm.extend(right_indices.iter().copied());
    let permuted = t.permuted(&perm)?;
    let m = permuted.matrix(left_indices.len());
    let svd = linalg::svd_truncate(&m, &trunc)?;
    let k = svd.s.len();

    let mut lshape: Vec<usize> = left_indices.iter().map(|&i| t.shape()[i]).collect();
    lshape.push(k);
    let mut rshape = vec![k];
    rshape.extend(right_indices.iter().map(|&i| t.shape()[i]));

    Ok(Split {
        left: Tensor::from_matrix(svd.u).reshaped(&lshape)?,
        right: Tensor::from_matrix(svd.vt).reshaped(&rshape)?,
        spectrum: SchmidtSpectrum {
            values: svd.s,
            discarded_weight: svd.discarded,
            total: svd.total,
        },
    })
}
