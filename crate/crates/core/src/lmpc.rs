//! Linear MPC: condensed QP over the hover-linearized discrete model with
//! constant-disturbance propagation, receding-horizon warm starts, and the
//! heading-free / thrust-compensation command transforms on the output.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};

use crate::dynamics::{
    body_to_inertial_angles, compensate_thrust, discretize_zoh, linearize_hover,
    rotate_cmd_to_body, AttitudeThrustCommand, LinearModel, MavState, ModelParams,
};
use crate::error::{Error, Result};
use crate::ocp::{OcpConfig, ReferenceWindow, TerminalWeight};
use crate::qp::{ActiveSetSolver, BoxQp};
use crate::riccati::solve_dare;

/// Infinite-horizon terminal weight from the DARE of `(A, B)` under the
/// stage weights.
pub fn riccati_terminal(
    a: &SMatrix<f64, 8, 8>,
    b: &SMatrix<f64, 8, 3>,
    q: &SMatrix<f64, 8, 8>,
    r: &SMatrix<f64, 3, 3>,
) -> Result<SMatrix<f64, 8, 8>> {
    let p = solve_dare(
        &DMatrix::from_iterator(8, 8, a.iter().copied()),
        &DMatrix::from_iterator(8, 3, b.iter().copied()),
        &DMatrix::from_iterator(8, 8, q.iter().copied()),
        &DMatrix::from_iterator(3, 3, r.iter().copied()),
    )?;
    Ok(SMatrix::<f64, 8, 8>::from_iterator(p.iter().copied()))
}

/// Condensing of a linear-model OCP with constant disturbance: eliminates
/// the predicted states by forward substitution, leaving the stacked inputs
/// as decision variables. Dimension-generic so small toy models can be
/// checked against hand expansions.
pub struct Condensing {
    /// Stacked input-to-state map for states `1..=N` (`nx*N x nu*N`).
    pub su: DMatrix<f64>,
    /// `A^k` for `k = 1..=N`.
    pub a_pow: Vec<DMatrix<f64>>,
    /// Stacked constant-disturbance-to-state map (`nx*N x nd`).
    pub sd: DMatrix<f64>,
    /// Block diagonal of stage weights `Q` (states `1..N-1`) and terminal `P`.
    pub qbar: DMatrix<f64>,
    /// Block diagonal of input weights.
    pub rbar: DMatrix<f64>,
    nx: usize,
    nu: usize,
    n: usize,
}

impl Condensing {
    pub fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        bd: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        p: &DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let nx = a.nrows();
        let nu = b.ncols();
        let nd = bd.ncols();
        if a.ncols() != nx
            || b.nrows() != nx
            || bd.nrows() != nx
            || q.shape() != (nx, nx)
            || p.shape() != (nx, nx)
            || r.shape() != (nu, nu)
            || horizon < 1
        {
            return Err(Error::DimensionMismatch("condensing: inconsistent shapes".into()));
        }
        let n = horizon;

        let mut a_pow = Vec::with_capacity(n);
        let mut acc = a.clone();
        for _ in 0..n {
            a_pow.push(acc.clone());
            acc = a * &acc;
        }

        let mut su = DMatrix::<f64>::zeros(nx * n, nu * n);
        for k in 1..=n {
            for j in 0..k {
                // Block (k-1, j) = A^{k-1-j} B.
                let blk = if k - 1 - j == 0 { b.clone() } else { &a_pow[k - 2 - j] * b };
                su.view_mut(((k - 1) * nx, j * nu), (nx, nu)).copy_from(&blk);
            }
        }

        let mut sd = DMatrix::<f64>::zeros(nx * n, nd);
        let mut dk = bd.clone();
        for k in 1..=n {
            sd.view_mut(((k - 1) * nx, 0), (nx, nd)).copy_from(&dk);
            dk = a * &dk + bd;
        }

        let mut qbar = DMatrix::<f64>::zeros(nx * n, nx * n);
        for k in 1..n {
            qbar.view_mut(((k - 1) * nx, (k - 1) * nx), (nx, nx)).copy_from(q);
        }
        qbar.view_mut(((n - 1) * nx, (n - 1) * nx), (nx, nx)).copy_from(p);

        let mut rbar = DMatrix::<f64>::zeros(nu * n, nu * n);
        for k in 0..n {
            rbar.view_mut((k * nu, k * nu), (nu, nu)).copy_from(r);
        }

        Ok(Self { su, a_pow, sd, qbar, rbar, nx, nu, n })
    }

    /// Constant Hessian of the condensed QP.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.su.transpose() * &self.qbar * &self.su + &self.rbar
    }

    /// Free response `c_k = A^k x0 + sum_j A^j Bd F` stacked for `k = 1..=N`.
    pub fn free_response(&self, x0: &DVector<f64>, f_ext: &DVector<f64>) -> DVector<f64> {
        let mut c = &self.sd * f_ext;
        for k in 1..=self.n {
            let xk = &self.a_pow[k - 1] * x0;
            let mut rows = c.rows_mut((k - 1) * self.nx, self.nx);
            rows += xk;
        }
        c
    }

    /// Gradient of the condensed QP for given initial state, disturbance and
    /// stacked references (`x_refs` for nodes `1..=N`, `u_refs` for `0..N`).
    pub fn gradient(
        &self,
        x0: &DVector<f64>,
        f_ext: &DVector<f64>,
        x_refs: &DVector<f64>,
        u_refs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if x_refs.len() != self.nx * self.n || u_refs.len() != self.nu * self.n {
            return Err(Error::DimensionMismatch("condensing gradient: reference sizes".into()));
        }
        let c = self.free_response(x0, f_ext);
        Ok(self.su.transpose() * (&self.qbar * (c - x_refs)) - &self.rbar * u_refs)
    }

    /// Forward-simulate the states `1..=N` for a stacked input vector.
    pub fn predict(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        bd: &DMatrix<f64>,
        x0: &DVector<f64>,
        f_ext: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.n);
        let mut x = x0.clone();
        for k in 0..self.n {
            x = a * &x + b * u.rows(k * self.nu, self.nu) + bd * f_ext;
            out.push(x.clone());
        }
        out
    }
}

/// Build the condensed box QP for the linear OCP at the given state,
/// disturbance estimate and reference window.
pub fn build_condensed_qp(
    model: &LinearModel<f64>,
    cfg: &OcpConfig,
    p_term: &SMatrix<f64, 8, 8>,
    params: &ModelParams<f64>,
    x0: &SVector<f64, 8>,
    f_ext: &Vector3<f64>,
    window: &ReferenceWindow,
) -> Result<BoxQp<f64>> {
    let cond = condensing_for(model, cfg, p_term)?;
    let (lb, ub) = stage_bounds(params, cfg.horizon);
    let (x_refs, u_refs) = stacked_refs(window, cfg.horizon)?;
    let x0d = DVector::from_iterator(8, x0.iter().copied());
    let fd = DVector::from_iterator(3, f_ext.iter().copied());
    let g = cond.gradient(&x0d, &fd, &x_refs, &u_refs)?;
    BoxQp::new(cond.hessian(), g, lb, ub)
}

fn condensing_for(
    model: &LinearModel<f64>,
    cfg: &OcpConfig,
    p_term: &SMatrix<f64, 8, 8>,
) -> Result<Condensing> {
    Condensing::new(
        &DMatrix::from_iterator(8, 8, model.a.iter().copied()),
        &DMatrix::from_iterator(8, 3, model.b.iter().copied()),
        &DMatrix::from_iterator(8, 3, model.bd.iter().copied()),
        &DMatrix::from_iterator(8, 8, cfg.q.iter().copied()),
        &DMatrix::from_iterator(3, 3, cfg.r.iter().copied()),
        &DMatrix::from_iterator(8, 8, p_term.iter().copied()),
        cfg.horizon,
    )
}

/// Stage input bounds: attitude limits directly, thrust limits shifted by
/// `-g` because the linear model's thrust input is the deviation from hover.
fn stage_bounds(params: &ModelParams<f64>, horizon: usize) -> (DVector<f64>, DVector<f64>) {
    let l = &params.limits;
    let lb1 = [l.phi_min, l.theta_min, l.thrust_min - params.g];
    let ub1 = [l.phi_max, l.theta_max, l.thrust_max - params.g];
    let mut lb = DVector::zeros(3 * horizon);
    let mut ub = DVector::zeros(3 * horizon);
    for k in 0..horizon {
        for i in 0..3 {
            lb[3 * k + i] = lb1[i];
            ub[3 * k + i] = ub1[i];
        }
    }
    (lb, ub)
}

fn stacked_refs(window: &ReferenceWindow, horizon: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    if window.len() < horizon + 1 {
        return Err(Error::DimensionMismatch(format!(
            "reference window has {} nodes, horizon needs {}",
            window.len(),
            horizon + 1
        )));
    }
    let mut x_refs = DVector::zeros(8 * horizon);
    for k in 1..=horizon {
        x_refs.rows_mut(8 * (k - 1), 8).copy_from(&window.state8(k));
    }
    let mut u_refs = DVector::zeros(3 * horizon);
    for k in 0..horizon {
        u_refs.rows_mut(3 * k, 3).copy_from(&window.input_ref_lmpc(k));
    }
    Ok((x_refs, u_refs))
}

/// Output of one controller step.
#[derive(Debug, Clone)]
pub struct LmpcOutput {
    pub command: AttitudeThrustCommand<f64>,
    /// Predicted heading-free states for nodes `1..=N`.
    pub predicted: Vec<SVector<f64, 8>>,
    pub qp_iterations: usize,
    /// Set when the QP failed and the last feasible command was re-issued.
    pub fault: bool,
}

/// Receding-horizon linear MPC over the hover-linearized model.
///
/// Callable at the control rate (100 Hz) while predicting on the coarser
/// `dt_pred` grid; the warm start is shifted once per prediction interval.
pub struct LinearMpc {
    params: ModelParams<f64>,
    cfg: OcpConfig,
    model: LinearModel<f64>,
    p_term: SMatrix<f64, 8, 8>,
    cond: Condensing,
    hessian: DMatrix<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
    solver: ActiveSetSolver<f64>,
    prev_solution: Option<DVector<f64>>,
    time_since_shift: f64,
    last_command: AttitudeThrustCommand<f64>,
    /// Optional symmetric bound on the heading-rate passthrough [rad/s].
    pub psi_rate_limit: Option<f64>,
}

impl LinearMpc {
    pub fn new(params: ModelParams<f64>, cfg: OcpConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let cont = linearize_hover(&params)?;
        let model = discretize_zoh(&cont, cfg.dt_pred)?;
        let p_term = match &cfg.terminal {
            TerminalWeight::Matrix(p) => *p,
            TerminalWeight::Riccati => riccati_terminal(&model.a, &model.b, &cfg.q, &cfg.r)?,
        };
        let cond = condensing_for(&model, &cfg, &p_term)?;
        let hessian = cond.hessian();
        let (lb, ub) = stage_bounds(&params, cfg.horizon);
        Ok(Self {
            last_command: AttitudeThrustCommand::hover(params.g),
            params,
            cfg,
            model,
            p_term,
            cond,
            hessian,
            lb,
            ub,
            solver: ActiveSetSolver::default(),
            prev_solution: None,
            time_since_shift: 0.0,
            psi_rate_limit: None,
        })
    }

    pub fn model(&self) -> &LinearModel<f64> {
        &self.model
    }

    pub fn terminal_weight(&self) -> &SMatrix<f64, 8, 8> {
        &self.p_term
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    /// Reduce the vehicle state to the heading-free 8-entry controller state.
    pub fn reduce_state(x: &MavState<f64>) -> SVector<f64, 8> {
        let (phi_i, theta_i) = body_to_inertial_angles(x.phi, x.theta, x.psi);
        SVector::<f64, 8>::from_column_slice(&[
            x.p.x, x.p.y, x.p.z, x.v.x, x.v.y, x.v.z, phi_i, theta_i,
        ])
    }

    /// One control step: solve the condensed QP, apply the heading-free
    /// rotation and thrust compensation, and emit the cascade command.
    ///
    /// `elapsed` is the time since the previous call (used to advance the
    /// warm-start shift); pass `0.0` for a stand-alone solve.
    pub fn step(
        &mut self,
        elapsed: f64,
        x: &MavState<f64>,
        f_ext_est: &Vector3<f64>,
        window: &ReferenceWindow,
    ) -> LmpcOutput {
        self.time_since_shift += elapsed;
        if self.time_since_shift >= self.cfg.dt_pred - 1e-9 {
            self.time_since_shift = 0.0;
            if let Some(prev) = &mut self.prev_solution {
                shift_inputs(prev, 3);
            }
        }

        match self.solve_qp(x, f_ext_est, window) {
            Ok((solution, iterations)) => {
                let x0 = Self::reduce_state(x);
                let x0d = DVector::from_iterator(8, x0.iter().copied());
                let fd = DVector::from_iterator(3, f_ext_est.iter().copied());
                let a = DMatrix::from_iterator(8, 8, self.model.a.iter().copied());
                let b = DMatrix::from_iterator(8, 3, self.model.b.iter().copied());
                let bd = DMatrix::from_iterator(8, 3, self.model.bd.iter().copied());
                let predicted = self
                    .cond
                    .predict(&a, &b, &bd, &x0d, &fd, &solution)
                    .into_iter()
                    .map(|v| SVector::<f64, 8>::from_iterator(v.iter().copied()))
                    .collect();

                let (phi_i, theta_i, t_dev) = (solution[0], solution[1], solution[2]);
                let (phi_cmd, theta_cmd) = rotate_cmd_to_body(phi_i, theta_i, x.psi);
                let thrust_cmd = compensate_thrust(t_dev, x.phi, x.theta, &self.params)
                    .unwrap_or(self.params.g);
                let l = &self.params.limits;
                let mut psi_rate_cmd = window.yaw_rate(0);
                if let Some(lim) = self.psi_rate_limit {
                    psi_rate_cmd = psi_rate_cmd.clamp(-lim, lim);
                }
                let command = AttitudeThrustCommand {
                    phi_cmd: phi_cmd.clamp(l.phi_min, l.phi_max),
                    theta_cmd: theta_cmd.clamp(l.theta_min, l.theta_max),
                    psi_rate_cmd,
                    thrust_cmd,
                };
                self.prev_solution = Some(solution);
                self.last_command = command;
                LmpcOutput { command, predicted, qp_iterations: iterations, fault: false }
            }
            // Fail-operational: re-issue the last feasible command.
            Err(_) => LmpcOutput {
                command: self.last_command,
                predicted: Vec::new(),
                qp_iterations: 0,
                fault: true,
            },
        }
    }

    fn solve_qp(
        &self,
        x: &MavState<f64>,
        f_ext_est: &Vector3<f64>,
        window: &ReferenceWindow,
    ) -> Result<(DVector<f64>, usize)> {
        let x0 = Self::reduce_state(x);
        let x0d = DVector::from_iterator(8, x0.iter().copied());
        let fd = DVector::from_iterator(3, f_ext_est.iter().copied());
        let (x_refs, u_refs) = stacked_refs(window, self.cfg.horizon)?;
        let g = self.cond.gradient(&x0d, &fd, &x_refs, &u_refs)?;
        let qp = BoxQp { h: self.hessian.clone(), g, lb: self.lb.clone(), ub: self.ub.clone() };
        let sol = self.solver.solve(&qp, self.prev_solution.as_ref())?;
        Ok((sol.z, sol.iterations))
    }
}

/// Shift a stacked input vector one stage forward, repeating the last input.
pub fn shift_inputs(u: &mut DVector<f64>, nu: usize) {
    let n = u.len() / nu;
    if n < 2 {
        return;
    }
    for k in 0..(n - 1) {
        for i in 0..nu {
            u[k * nu + i] = u[(k + 1) * nu + i];
        }
    }
    for i in 0..nu {
        u[(n - 1) * nu + i] = u[(n - 2) * nu + i];
    }
}
