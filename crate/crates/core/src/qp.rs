//! Dense primal active-set solver for box-constrained convex QPs
//!
//! ```text
//!     minimize   1/2 z' H z + g' z
//!     subject to lb <= z <= ub
//! ```
//!
//! with `H` symmetric positive definite. Box-only constraints keep the
//! active-set bookkeeping to per-coordinate fixing, which is all the
//! condensed MPC subproblems need. The solver is warm-start friendly and
//! fully deterministic: blocking and dropped constraints are tie-broken by
//! lowest index.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// A box-constrained QP instance. Invariants are checked at construction.
#[derive(Debug, Clone)]
pub struct BoxQp<T: Real> {
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub lb: DVector<T>,
    pub ub: DVector<T>,
}

impl<T: Real> BoxQp<T> {
    pub fn new(h: DMatrix<T>, g: DVector<T>, lb: DVector<T>, ub: DVector<T>) -> Result<Self> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n || lb.len() != n || ub.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "BoxQp: H is {}x{}, g/lb/ub have lengths {}/{}/{}",
                h.nrows(),
                h.ncols(),
                n,
                lb.len(),
                ub.len()
            )));
        }
        let tol = lit::<T>(1e-8) * (T::one() + h.amax());
        for i in 0..n {
            for j in (i + 1)..n {
                if (h[(i, j)] - h[(j, i)]).abs() > tol {
                    return Err(Error::InvalidArgument("BoxQp: H not symmetric".into()));
                }
            }
        }
        if Cholesky::new(h.clone()).is_none() {
            return Err(Error::QpNotPositiveDefinite);
        }
        for i in 0..n {
            if lb[i] > ub[i] {
                return Err(Error::InvalidArgument("BoxQp: lb > ub".into()));
            }
        }
        Ok(Self { h, g, lb, ub })
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<T>) -> T {
        (z.transpose() * &self.h * z)[(0, 0)] * lit::<T>(0.5) + self.g.dot(z)
    }
}

/// Minimizer with solve diagnostics.
#[derive(Debug, Clone)]
pub struct QpSolution<T: Real> {
    pub z: DVector<T>,
    pub iterations: usize,
    pub kkt_residual: T,
    /// Objective value after each active-set change (populated when
    /// [`ActiveSetSolver::record_trace`] is set).
    pub objective_trace: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Lower,
    Upper,
    Free,
}

/// Primal active-set solver; one instance holds the tolerances and can be
/// reused across solves.
#[derive(Debug, Clone)]
pub struct ActiveSetSolver<T: Real> {
    pub tolerance: T,
    pub max_iterations: usize,
    pub record_trace: bool,
}

impl<T: Real> Default for ActiveSetSolver<T> {
    fn default() -> Self {
        Self { tolerance: lit(1e-8), max_iterations: 200, record_trace: false }
    }
}

impl<T: Real> ActiveSetSolver<T> {
    /// Solve the QP, optionally warm-started. The warm start is clamped into
    /// the box; it influences the iteration path but not the minimizer.
    pub fn solve(&self, qp: &BoxQp<T>, warm_start: Option<&DVector<T>>) -> Result<QpSolution<T>> {
        let n = qp.n();
        let mut z = match warm_start {
            Some(w) if w.len() == n => w.clone(),
            Some(_) => {
                return Err(Error::DimensionMismatch("warm start length mismatch".into()))
            }
            None => DVector::zeros(n),
        };
        let mut active = vec![Bound::Free; n];
        for i in 0..n {
            if z[i] <= qp.lb[i] {
                z[i] = qp.lb[i];
                active[i] = Bound::Lower;
            } else if z[i] >= qp.ub[i] {
                z[i] = qp.ub[i];
                active[i] = Bound::Upper;
            }
        }

        let mut trace = Vec::new();
        if self.record_trace {
            trace.push(qp.objective(&z));
        }

        for iter in 1..=self.max_iterations {
            let free: Vec<usize> = (0..n).filter(|&i| active[i] == Bound::Free).collect();

            // Equality-constrained subproblem on the free coordinates.
            let target = if free.is_empty() {
                z.clone()
            } else {
                let nf = free.len();
                let mut hff = DMatrix::<T>::zeros(nf, nf);
                let mut rhs = DVector::<T>::zeros(nf);
                for (a, &i) in free.iter().enumerate() {
                    rhs[a] = -qp.g[i];
                    for (b, &j) in free.iter().enumerate() {
                        hff[(a, b)] = qp.h[(i, j)];
                    }
                    for j in 0..n {
                        if active[j] != Bound::Free {
                            rhs[a] -= qp.h[(i, j)] * z[j];
                        }
                    }
                }
                let chol = Cholesky::new(hff).ok_or(Error::QpNotPositiveDefinite)?;
                let zf = chol.solve(&rhs);
                let mut t = z.clone();
                for (a, &i) in free.iter().enumerate() {
                    t[i] = zf[a];
                }
                t
            };

            let step = &target - &z;
            if step.amax() <= self.tolerance {
                // Stationary on the working set; check multiplier signs.
                let grad = &qp.h * &z + &qp.g;
                let mut worst: Option<(usize, T)> = None;
                for i in 0..n {
                    let viol = match active[i] {
                        Bound::Lower => -grad[i], // need grad >= 0 at a lower bound
                        Bound::Upper => grad[i],  // need grad <= 0 at an upper bound
                        Bound::Free => T::zero(),
                    };
                    if viol > self.tolerance && worst.map_or(true, |(_, w)| viol > w) {
                        worst = Some((i, viol));
                    }
                }
                match worst {
                    Some((i, _)) => {
                        active[i] = Bound::Free;
                        continue;
                    }
                    None => {
                        let residual = kkt_residual(qp, &z, &active);
                        return Ok(QpSolution {
                            z,
                            iterations: iter,
                            kkt_residual: residual,
                            objective_trace: trace,
                        });
                    }
                }
            }

            // Step toward the subproblem minimizer, stopping at the first
            // blocking bound (lowest index on ties).
            let mut alpha = T::one();
            let mut blocking: Option<(usize, Bound)> = None;
            for &i in &free {
                if step[i] > T::zero() {
                    let room = (qp.ub[i] - z[i]) / step[i];
                    if room < alpha {
                        alpha = room;
                        blocking = Some((i, Bound::Upper));
                    }
                } else if step[i] < T::zero() {
                    let room = (qp.lb[i] - z[i]) / step[i];
                    if room < alpha {
                        alpha = room;
                        blocking = Some((i, Bound::Lower));
                    }
                }
            }
            z += step * alpha;
            if let Some((i, side)) = blocking {
                z[i] = match side {
                    Bound::Lower => qp.lb[i],
                    Bound::Upper => qp.ub[i],
                    Bound::Free => unreachable!(),
                };
                active[i] = side;
            }
            if self.record_trace {
                trace.push(qp.objective(&z));
            }
        }

        Err(Error::QpMaxIterations {
            iterations: self.max_iterations,
            best: z.iter().map(|&v| num_traits::ToPrimitive::to_f64(&v).unwrap_or(f64::NAN)).collect(),
        })
    }
}

fn kkt_residual<T: Real>(qp: &BoxQp<T>, z: &DVector<T>, active: &[Bound]) -> T {
    let grad = &qp.h * z + &qp.g;
    let mut r = T::zero();
    for i in 0..qp.n() {
        let v = match active[i] {
            Bound::Free => grad[i].abs(),
            Bound::Lower => (-grad[i]).max(T::zero()),
            Bound::Upper => grad[i].max(T::zero()),
        };
        r = r.max(v);
    }
    r
}

/// Convenience wrapper with default solver settings.
pub fn solve_box_qp<T: Real>(qp: &BoxQp<T>, warm_start: Option<&DVector<T>>) -> Result<QpSolution<T>> {
    ActiveSetSolver::default().solve(qp, warm_start)
}

/// Brute-force reference for small box QPs: enumerate all 3^n assignments of
/// coordinates to {lower, upper, free}, solve each equality-constrained
/// system, and keep the KKT-feasible candidate with the lowest objective.
///
/// Independent of the active-set path; test/validation use only.
pub fn enumerate_box_qp<T: Real>(qp: &BoxQp<T>) -> Option<DVector<T>> {
    let n = qp.n();
    assert!(n <= 8, "enumeration oracle is exponential; keep n small");
    let mut best: Option<(T, DVector<T>)> = None;
    let tol = lit::<T>(1e-9) * (T::one() + qp.h.amax() + qp.g.amax());
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut sides = Vec::with_capacity(n);
        for _ in 0..n {
            sides.push(c % 3);
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| sides[i] == 2).collect();
        let mut z = DVector::<T>::zeros(n);
        for i in 0..n {
            match sides[i] {
                0 => z[i] = qp.lb[i],
                1 => z[i] = qp.ub[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let nf = free.len();
            let mut hff = DMatrix::<T>::zeros(nf, nf);
            let mut rhs = DVector::<T>::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = -qp.g[i];
                for (b, &j) in free.iter().enumerate() {
                    hff[(a, b)] = qp.h[(i, j)];
                }
                for j in 0..n {
                    if sides[j] != 2 {
                        rhs[a] -= qp.h[(i, j)] * z[j];
                    }
                }
            }
            let zf = Cholesky::new(hff)?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                z[i] = zf[a];
            }
        }
        // Feasibility and multiplier signs.
        let mut ok = true;
        for (i, &side) in sides.iter().enumerate() {
            if side == 2 && (z[i] < qp.lb[i] - tol || z[i] > qp.ub[i] + tol) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let grad = &qp.h * &z + &qp.g;
        for (i, &side) in sides.iter().enumerate() {
            let bad = match side {
                0 => grad[i] < -tol,
                1 => grad[i] > tol,
                _ => false,
            };
            if bad {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let obj = qp.objective(&z);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, z));
        }
    }
    best.map(|(_, z)| z)
}
