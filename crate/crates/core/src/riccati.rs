//! Discrete algebraic Riccati equation, used to derive the infinite-horizon
//! terminal weight.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Solve `P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q` by fixed-point iteration
/// of the Riccati difference equation, starting from `P = Q`.
///
/// Converges to the stabilizing solution for stabilizable `(A, B)` and
/// detectable `(A, Q^{1/2})`. The returned matrix is symmetrized and checked
/// against the equation to `residual_tol` (infinity norm).
pub fn solve_dare<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    solve_dare_with(a, b, q, r, lit(1e-9), 200_000)
}

pub fn solve_dare_with<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    residual_tol: T,
    max_iterations: usize,
) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n || r.nrows() != m {
        return Err(Error::DimensionMismatch("solve_dare: inconsistent shapes".into()));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for iter in 0..max_iterations {
        let s = r + &bt * &p * b;
        let chol = Cholesky::new(s).ok_or(Error::RiccatiNoConvergence { iterations: iter })?;
        let gain = chol.solve(&(&bt * &p * a));
        let next = &at * &p * a - (&at * &p * b) * &gain + q;
        // Symmetrize to damp numeric drift.
        let next = (&next + next.transpose()) * lit::<T>(0.5);
        let delta = (&next - &p).amax();
        p = next;
        if delta <= residual_tol * lit::<T>(1e-3) * (T::one() + p.amax()) {
            let res = dare_residual(a, b, q, r, &p);
            if res <= residual_tol * (T::one() + p.amax()) {
                return Ok(p);
            }
        }
    }
    Err(Error::RiccatiNoConvergence { iterations: max_iterations })
}

/// Infinity norm of the DARE defect at `p`.
pub fn dare_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> T {
    let at = a.transpose();
    let bt = b.transpose();
    let s = r + &bt * p * b;
    let inv = Cholesky::new(s).expect("R + B'PB positive definite").inverse();
    let rhs = &at * p * a - (&at * p * b) * inv * (&bt * p * a) + q;
    (p - rhs).amax()
}
