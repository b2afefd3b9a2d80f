//! Single-qubit operators. Basis order is `|0>, |1>` with `sigma_z |0> = |0>`.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity() -> Array2<C64> {
    array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

pub fn sigma_x() -> Array2<C64> {
    array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
}

pub fn sigma_y() -> Array2<C64> {
    array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}

pub fn sigma_z() -> Array2<C64> {
    array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
}

/// Two-site operator `a ⊗ b`, first site as the major index.
pub fn pair(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    ndarray::linalg::kron(a, b)
}

/// Spin state with Bloch angles `(theta, phi)`:
/// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
pub fn bloch_state(theta: f64, phi: f64) -> [C64; 2] {
    [
        c((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ]
}
