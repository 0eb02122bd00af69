//! Small dense complex matrix helpers shared by the instance checks and the kernel.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `‖a − b‖_max`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Deviation of `u u†` from the identity.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = u * u.adjoint();
    max_abs_diff(&prod, &CMatrix::identity(u.nrows(), u.ncols()))
}

/// Kronecker product `a ⊗ b` (`a` acts on the more significant index bits).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Lift an operator on `support` (little-endian within the support) to an operator on
/// the qubits listed in `target`, which must contain every qubit of `support`.
pub fn embed(op: &CMatrix, support: &[usize], target: &[usize]) -> CMatrix {
    let dim = 1usize << target.len();
    // position of each support qubit inside `target`
    let positions: Vec<usize> = support
        .iter()
        .map(|q| {
            target
                .iter()
                .position(|t| t == q)
                .expect("support qubit missing from target")
        })
        .collect();
    let local_of = |index: usize| -> usize {
        positions
            .iter()
            .enumerate()
            .map(|(j, &p)| ((index >> p) & 1) << j)
            .sum()
    };
    let support_mask: usize = positions.iter().map(|&p| 1 << p).sum();
    let mut out = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        for col in 0..dim {
            if row & !support_mask != col & !support_mask {
                continue;
            }
            out[(row, col)] = op[(local_of(row), local_of(col))];
        }
    }
    out
}
