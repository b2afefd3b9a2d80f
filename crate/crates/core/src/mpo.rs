//! Matrix-product operators with tensors indexed `(left, out, in, right)`.

use ndarray::{Array2, Array4, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::tensor::{contract, Tensor};

#[derive(Clone, Debug)]
pub struct Mpo {
    sites: Vec<Array4<C64>>,
}

impl Mpo {
    pub fn new(sites: Vec<Array4<C64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidArgument("MPO needs at least one site".into()));
        }
        let d = sites[0].shape()[1];
        for (i, w) in sites.iter().enumerate() {
            let sh = w.shape();
            if sh[1] != d || sh[2] != d {
                return Err(Error::ShapeMismatch(format!("site {i} has physical dims {sh:?}")));
            }
            if i + 1 < sites.len() && sh[3] != sites[i + 1].shape()[0] {
                return Err(Error::ShapeMismatch(format!("bond mismatch after site {i}")));
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[3] != 1 {
            return Err(Error::ShapeMismatch("boundary bonds must be 1".into()));
        }
        Ok(Self { sites })
    }

    pub fn identity(n: usize, d: usize) -> Self {
        let eye = Array2::<C64>::eye(d);
        Self::product(&vec![eye; n]).expect("identity is well formed")
    }

    /// Bond-dimension-one operator `ops[0] ⊗ ops[1] ⊗ ...`.
    pub fn product(ops: &[Array2<C64>]) -> Result<Self> {
        let sites = ops
            .iter()
            .map(|op| {
                let (a, b) = op.dim();
                if a != b {
                    return Err(Error::ShapeMismatch("local operator must be square".into()));
                }
                Ok(op.clone().insert_axis(Axis(0)).insert_axis(Axis(3)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sites)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.sites[0].shape()[1]
    }

    pub fn site(&self, i: usize) -> &Array4<C64> {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[Array4<C64>] {
        &self.sites
    }

    /// Bond dimensions including the two boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.sites.iter().map(|w| w.shape()[0]).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn tensor(&self, i: usize) -> Tensor {
        Tensor::from_array(self.sites[i].clone().into_dyn())
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut sites = self.sites.clone();
        sites[0].mapv_inplace(|x| x * c);
        Self { sites }
    }

    pub fn adjoint(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|w| {
                let mut a = w.clone();
                a.swap_axes(1, 2);
                a.as_standard_layout().mapv(|x| x.conj())
            })
            .collect();
        Self { sites }
    }

    /// Dense matrix for small chains, in the state-vector convention where
    /// site 0 is the least significant bit of the basis index.
    pub fn to_dense(&self) -> Result<Array2<C64>> {
        let n = self.len();
        let d = self.phys_dim();
        if d != 2 || n > 12 {
            return Err(Error::SizeLimit { n, max: 12 });
        }
        // acc indices: (out_{0..k}, in_{0..k}, right bond) with site 0 major
        let mut acc = self.tensor(0).reshaped(&[2, 2, self.sites[0].shape()[3]])?;
        for i in 1..n {
            let w = self.tensor(i);
            let k = acc.rank() - 1;
            let next = contract(&acc, &w, &[(k, 0)])?;
            // next: (outs, ins, out_i, in_i, right); move out_i before the ins
            let r = next.rank();
            let mut perm: Vec<usize> = (0..i).collect();
            perm.push(r - 3);
            perm.extend(i..2 * i);
            perm.push(r - 2);
            perm.push(r - 1);
            acc = next.permuted(&perm)?;
        }
        let dim = 1usize << n;
        let major = acc.reshaped(&[dim, dim])?.into_array();
        let major = major.into_dimensionality::<ndarray::Ix2>()?;
        let rev = |x: usize| x.reverse_bits() >> (usize::BITS as usize - n);
        Ok(Array2::from_shape_fn((dim, dim), |(i, j)| major[[rev(i), rev(j)]]))
    }
}
