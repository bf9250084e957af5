//! Integrators for the nonlinear model: a two-stage Gauss-Legendre implicit
//! Runge-Kutta scheme (order 4) with sensitivity propagation for the NMPC
//! and EKF, and a plain explicit RK4 used as the simulation truth integrator.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{
    dynamics_jacobians, eval_dynamics, AttitudeThrustCommand, ExternalForce, MavState, ModelParams,
};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// One implicit step with sensitivities w.r.t. the initial state, the
/// decision inputs `(phi_cmd, theta_cmd, thrust_cmd)`, and the external force.
#[derive(Debug, Clone)]
pub struct StepResult<T: Real> {
    pub x_next: SVector<T, 9>,
    pub dx_dx: SMatrix<T, 9, 9>,
    pub dx_du: SMatrix<T, 9, 3>,
    pub dx_df: SMatrix<T, 9, 3>,
}

/// Two-stage Gauss-Legendre implicit Runge-Kutta integrator of order 4.
///
/// Stage equations are solved by Newton iteration with the analytic model
/// Jacobian; sensitivities come from differentiating the converged stage
/// equations (implicit function theorem), so they are exact for the
/// discrete map up to the Newton tolerance.
#[derive(Debug, Clone)]
pub struct Irk4<T: Real> {
    pub params: ModelParams<T>,
    pub newton_tol: T,
    pub max_newton_iterations: usize,
}

impl<T: Real> Irk4<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self { params, newton_tol: lit(1e-10), max_newton_iterations: 20 }
    }

    fn butcher() -> ([[T; 2]; 2], [T; 2]) {
        let s3 = lit::<T>(3.0).sqrt();
        let quarter = lit::<T>(0.25);
        let sixth = s3 / lit::<T>(6.0);
        let a = [[quarter, quarter - sixth], [quarter + sixth, quarter]];
        let b = [lit::<T>(0.5), lit::<T>(0.5)];
        (a, b)
    }

    /// Integrate one step of length `dt` without sensitivities.
    pub fn propagate(
        &self,
        x: &SVector<T, 9>,
        u: &AttitudeThrustCommand<T>,
        f_ext: &ExternalForce<T>,
        dt: T,
    ) -> Result<SVector<T, 9>> {
        let (k, _) = self.solve_stages(x, u, f_ext, dt)?;
        let (_, b) = Self::butcher();
        Ok(x + (k.column(0) * b[0] + k.column(1) * b[1]) * dt)
    }

    /// Integrate one step and propagate sensitivities.
    pub fn step(
        &self,
        x: &SVector<T, 9>,
        u: &AttitudeThrustCommand<T>,
        f_ext: &ExternalForce<T>,
        dt: T,
    ) -> Result<StepResult<T>> {
        let (k, stages) = self.solve_stages(x, u, f_ext, dt)?;
        let (a, b) = Self::butcher();

        // Jacobians at the converged stage states.
        let mut jx = [SMatrix::<T, 9, 9>::zeros(); 2];
        let mut ju = [SMatrix::<T, 9, 3>::zeros(); 2];
        let mut jf = [SMatrix::<T, 9, 3>::zeros(); 2];
        for i in 0..2 {
            let st = MavState::from_vector(&stages[i]);
            let (jxi, jui, jfi) = dynamics_jacobians(&st, u, &self.params);
            jx[i] = jxi;
            ju[i] = jui;
            jf[i] = jfi;
        }

        // M = I - dt * [a_ij Jx_i], block 18x18.
        let mut m = SMatrix::<T, 18, 18>::identity();
        for i in 0..2 {
            for j in 0..2 {
                let blk = jx[i] * (a[i][j] * dt);
                let mut view = m.fixed_view_mut::<9, 9>(9 * i, 9 * j);
                view -= blk;
            }
        }

        // Right-hand sides for dK/dx (9 cols), dK/du (3), dK/df (3).
        let mut rhs = SMatrix::<T, 18, 15>::zeros();
        for i in 0..2 {
            rhs.fixed_view_mut::<9, 9>(9 * i, 0).copy_from(&jx[i]);
            rhs.fixed_view_mut::<9, 3>(9 * i, 9).copy_from(&ju[i]);
            rhs.fixed_view_mut::<9, 3>(9 * i, 12).copy_from(&jf[i]);
        }
        let lu = m.lu();
        let sens = lu.solve(&rhs).ok_or(Error::NewtonNoConvergence { residual: f64::NAN })?;

        let mut dx_dx = SMatrix::<T, 9, 9>::identity();
        let mut dx_du = SMatrix::<T, 9, 3>::zeros();
        let mut dx_df = SMatrix::<T, 9, 3>::zeros();
        for i in 0..2 {
            let w = b[i] * dt;
            dx_dx += sens.fixed_view::<9, 9>(9 * i, 0) * w;
            dx_du += sens.fixed_view::<9, 3>(9 * i, 9) * w;
            dx_df += sens.fixed_view::<9, 3>(9 * i, 12) * w;
        }

        let x_next = x + (k.column(0) * b[0] + k.column(1) * b[1]) * dt;
        Ok(StepResult { x_next, dx_dx, dx_du, dx_df })
    }

    /// Newton solve of the stage equations `K_i = f(x + dt sum_j a_ij K_j, u)`.
    /// Returns the stage derivatives (as columns) and the stage states.
    fn solve_stages(
        &self,
        x: &SVector<T, 9>,
        u: &AttitudeThrustCommand<T>,
        f_ext: &ExternalForce<T>,
        dt: T,
    ) -> Result<(SMatrix<T, 9, 2>, [SVector<T, 9>; 2])> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument("integrator step must be positive".into()));
        }
        let (a, _) = Self::butcher();
        let f0 = eval_dynamics(&MavState::from_vector(x), u, f_ext, &self.params)?;
        let mut k = SMatrix::<T, 9, 2>::zeros();
        k.set_column(0, &f0);
        k.set_column(1, &f0);

        let mut stages = [*x; 2];
        for _ in 0..self.max_newton_iterations {
            // Residual G(K) = K - f(stage states).
            let mut g = SVector::<T, 18>::zeros();
            for i in 0..2 {
                let mut xi = *x;
                for j in 0..2 {
                    xi += k.column(j) * (a[i][j] * dt);
                }
                stages[i] = xi;
                let fi = eval_dynamics(&MavState::from_vector(&xi), u, f_ext, &self.params)?;
                let gi = SVector::<T, 9>::from(k.column(i)) - fi;
                g.fixed_rows_mut::<9>(9 * i).copy_from(&gi);
            }
            let res = g.amax();
            if res <= self.newton_tol {
                return Ok((k, stages));
            }

            let mut m = SMatrix::<T, 18, 18>::identity();
            for i in 0..2 {
                let st = MavState::from_vector(&stages[i]);
                let (jxi, _, _) = dynamics_jacobians(&st, u, &self.params);
                for j in 0..2 {
                    let blk = jxi * (a[i][j] * dt);
                    let mut view = m.fixed_view_mut::<9, 9>(9 * i, 9 * j);
                    view -= blk;
                }
            }
            let delta = m
                .lu()
                .solve(&g)
                .ok_or(Error::NewtonNoConvergence { residual: res.to_f64().unwrap_or(f64::NAN) })?;
            for i in 0..2 {
                let ki = SVector::<T, 9>::from(k.column(i)) - delta.fixed_rows::<9>(9 * i);
                k.set_column(i, &ki);
            }
        }

        // Final residual check after the iteration cap.
        let mut worst = T::zero();
        for i in 0..2 {
            let mut xi = *x;
            for j in 0..2 {
                xi += k.column(j) * (a[i][j] * dt);
            }
            stages[i] = xi;
            let fi = eval_dynamics(&MavState::from_vector(&xi), u, f_ext, &self.params)?;
            worst = worst.max((SVector::<T, 9>::from(k.column(i)) - fi).amax());
        }
        if worst <= self.newton_tol {
            Ok((k, stages))
        } else {
            Err(Error::NewtonNoConvergence { residual: worst.to_f64().unwrap_or(f64::NAN) })
        }
    }
}

/// Explicit RK4 step of the nonlinear model; used by the simulation plant so
/// the truth integrator differs from the controller's implicit scheme.
pub fn rk4_step<T: Real>(
    x: &SVector<T, 9>,
    u: &AttitudeThrustCommand<T>,
    f_ext: &ExternalForce<T>,
    params: &ModelParams<T>,
    dt: T,
) -> Result<SVector<T, 9>> {
    let f = |xv: &SVector<T, 9>| eval_dynamics(&MavState::from_vector(xv), u, f_ext, params);
    let half = lit::<T>(0.5);
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (dt * half)))?;
    let k3 = f(&(x + k2 * (dt * half)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * lit::<T>(2.0) + k3 * lit::<T>(2.0) + k4) * (dt / lit::<T>(6.0)))
}
