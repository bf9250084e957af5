//! Nonlinear MPC: multiple-shooting transcription of the full model, implicit
//! RK4 integration with sensitivities, and a Gauss-Newton real-time-iteration
//! scheme split into a preparation phase (linearize and condense along the
//! current shooting grid) and a feedback phase (embed the measured state and
//! solve the condensed box QP).
//!
//! Thrust is handled in absolute mass-normalized units and bounded by the
//! physical limits directly; the model contains the attitude-thrust coupling,
//! so no output compensation is applied. The heading rate command is passed
//! through from the reference (bounded), not optimized.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};

use crate::dynamics::{
    discretize_zoh, linearize_hover, AttitudeThrustCommand, ExternalForce, MavState, ModelParams,
};
use crate::error::{Error, Result};
use crate::lmpc::riccati_terminal;
use crate::ocp::{OcpConfig, ReferenceWindow, TerminalWeight};
use crate::qp::{ActiveSetSolver, BoxQp};
use crate::rk::Irk4;

/// Shooting nodes and controls over the prediction horizon.
#[derive(Debug, Clone)]
pub struct ShootingGrid {
    /// `N + 1` state nodes, 9 entries each.
    pub nodes: Vec<SVector<f64, 9>>,
    /// `N` controls `(phi_cmd, theta_cmd, thrust)`.
    pub controls: Vec<Vector3<f64>>,
    pub dt_pred: f64,
}

impl ShootingGrid {
    /// Grid initialized at a hover point with equilibrium controls.
    pub fn hover(x: &SVector<f64, 9>, horizon: usize, dt_pred: f64, g: f64) -> Self {
        Self {
            nodes: vec![*x; horizon + 1],
            controls: vec![Vector3::new(0.0, 0.0, g); horizon],
            dt_pred,
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Rotate the grid one prediction interval forward, repeating the tail.
    pub fn shift(&mut self) {
        let n = self.horizon();
        if n < 2 {
            return;
        }
        self.nodes.rotate_left(1);
        let last = self.nodes[n - 1];
        self.nodes[n] = last;
        self.controls.rotate_left(1);
        self.controls[n - 1] = self.controls[n - 2];
    }
}

/// Condensed Gauss-Newton subproblem built in the preparation phase.
pub struct RtiWorkspace {
    /// Per-interval transition Jacobians of the integrator.
    a_mats: Vec<SMatrix<f64, 9, 9>>,
    /// Per-interval control Jacobians.
    b_mats: Vec<SMatrix<f64, 9, 3>>,
    /// Continuity defects `Phi(s_k, u_k) - s_{k+1}`.
    defects: Vec<SVector<f64, 9>>,
    hessian: DMatrix<f64>,
    /// Gradient part independent of the embedded state.
    g0: DVector<f64>,
    /// Gradient sensitivity to the initial-state deviation (3N x 9).
    g_dx: DMatrix<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
    /// Discrete cost of the current iterate (for diagnostics and parity
    /// checks).
    pub cost_at_linearization: f64,
}

impl RtiWorkspace {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().map(|d| d.amax()).fold(0.0, f64::max)
    }
}

/// Output of one feedback phase.
#[derive(Debug, Clone)]
pub struct NmpcOutput {
    pub command: AttitudeThrustCommand<f64>,
    pub qp_iterations: usize,
    /// Infinity norm of the Gauss-Newton control step.
    pub step_norm: f64,
    /// Largest continuity defect of the grid the step was computed on.
    pub max_defect: f64,
    pub fault: bool,
}

pub struct NonlinearMpc {
    params: ModelParams<f64>,
    cfg: OcpConfig,
    q9: SMatrix<f64, 9, 9>,
    p9: SMatrix<f64, 9, 9>,
    integrator: Irk4<f64>,
    solver: ActiveSetSolver<f64>,
    pub grid: ShootingGrid,
    time_since_shift: f64,
    last_command: AttitudeThrustCommand<f64>,
    /// Symmetric bound on the heading-rate passthrough [rad/s].
    pub psi_rate_limit: Option<f64>,
}

/// Embed an 8x8 weight on `(p, v, phi, theta)` into the 9-entry state with a
/// zero heading weight, keeping the cost identical to the linear controller.
fn embed_weight(w8: &SMatrix<f64, 8, 8>) -> SMatrix<f64, 9, 9> {
    let mut w9 = SMatrix::<f64, 9, 9>::zeros();
    w9.fixed_view_mut::<8, 8>(0, 0).copy_from(w8);
    w9
}

impl NonlinearMpc {
    pub fn new(params: ModelParams<f64>, cfg: OcpConfig, x0: &MavState<f64>) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let p8 = match &cfg.terminal {
            TerminalWeight::Matrix(p) => *p,
            TerminalWeight::Riccati => {
                let model = discretize_zoh(&linearize_hover(&params)?, cfg.dt_pred)?;
                riccati_terminal(&model.a, &model.b, &cfg.q, &cfg.r)?
            }
        };
        let grid = ShootingGrid::hover(&x0.to_vector(), cfg.horizon, cfg.dt_pred, params.g);
        Ok(Self {
            q9: embed_weight(&cfg.q),
            p9: embed_weight(&p8),
            integrator: Irk4::new(params),
            solver: ActiveSetSolver::default(),
            grid,
            time_since_shift: 0.0,
            last_command: AttitudeThrustCommand::hover(params.g),
            psi_rate_limit: Some(std::f64::consts::PI),
            params,
            cfg,
        })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    pub fn terminal_weight9(&self) -> &SMatrix<f64, 9, 9> {
        &self.p9
    }

    /// Discrete cost of a candidate grid against a reference window: stage
    /// terms for `k = 0..N-1`, terminal term at `N`.
    pub fn discrete_cost(&self, grid: &ShootingGrid, window: &ReferenceWindow) -> f64 {
        let n = grid.horizon();
        let mut cost = 0.0;
        for k in 0..n {
            let ex = grid.nodes[k] - window.state9(k);
            let eu = grid.controls[k] - window.input_ref_nmpc(k);
            cost += (ex.transpose() * self.q9 * ex)[(0, 0)]
                + (eu.transpose() * self.cfg.r * eu)[(0, 0)];
        }
        let en = grid.nodes[n] - window.state9(n);
        cost + (en.transpose() * self.p9 * en)[(0, 0)]
    }

    /// Preparation phase: integrate and linearize along the current grid,
    /// then condense the Gauss-Newton subproblem. The estimated external
    /// force is held constant over the horizon.
    pub fn prepare(
        &self,
        f_ext_est: &Vector3<f64>,
        window: &ReferenceWindow,
    ) -> Result<RtiWorkspace> {
        let n = self.grid.horizon();
        if window.len() < n + 1 {
            return Err(Error::DimensionMismatch(
                "reference window shorter than horizon".into(),
            ));
        }
        let fext = ExternalForce(*f_ext_est);
        let mut a_mats = Vec::with_capacity(n);
        let mut b_mats = Vec::with_capacity(n);
        let mut defects = Vec::with_capacity(n);
        for k in 0..n {
            let u = AttitudeThrustCommand {
                phi_cmd: self.grid.controls[k].x,
                theta_cmd: self.grid.controls[k].y,
                psi_rate_cmd: window.yaw_rate(k),
                thrust_cmd: self.grid.controls[k].z,
            };
            let step = self.integrator.step(&self.grid.nodes[k], &u, &fext, self.grid.dt_pred)?;
            defects.push(step.x_next - self.grid.nodes[k + 1]);
            a_mats.push(step.dx_dx);
            b_mats.push(step.dx_du);
        }

        // LTV condensing: delta_s_{k+1} = A_k delta_s_k + B_k delta_u_k + d_k
        // with delta_s_0 = the embedded state deviation.
        let mut su = DMatrix::<f64>::zeros(9 * n, 3 * n);
        let mut phi = DMatrix::<f64>::zeros(9 * n, 9);
        let mut w = DVector::<f64>::zeros(9 * n);
        // Running products, built forward: row k holds values for node k+1.
        let mut phi_k = SMatrix::<f64, 9, 9>::identity();
        let mut w_k = SVector::<f64, 9>::zeros();
        for k in 0..n {
            // Node k+1 = A_k * (node k quantities) + new contributions.
            w_k = a_mats[k] * w_k + defects[k];
            phi_k = a_mats[k] * phi_k;
            w.rows_mut(9 * k, 9).copy_from(&w_k);
            phi.view_mut((9 * k, 0), (9, 9)).copy_from(&phi_k);
            // Control columns: G_{k+1, j}.
            su.view_mut((9 * k, 3 * k), (9, 3)).copy_from(&b_mats[k]);
            for j in 0..k {
                let prev = su.view((9 * (k - 1), 3 * j), (9, 3)).into_owned();
                su.view_mut((9 * k, 3 * j), (9, 3)).copy_from(&(a_mats[k] * prev));
            }
        }

        let mut qbar = DMatrix::<f64>::zeros(9 * n, 9 * n);
        for k in 1..n {
            qbar
                .view_mut((9 * (k - 1), 9 * (k - 1)), (9, 9))
                .copy_from(&DMatrix::from_iterator(9, 9, self.q9.iter().copied()));
        }
        qbar.view_mut((9 * (n - 1), 9 * (n - 1)), (9, 9))
            .copy_from(&DMatrix::from_iterator(9, 9, self.p9.iter().copied()));
        let mut rbar = DMatrix::<f64>::zeros(3 * n, 3 * n);
        for k in 0..n {
            rbar.view_mut((3 * k, 3 * k), (3, 3))
                .copy_from(&DMatrix::from_iterator(3, 3, self.cfg.r.iter().copied()));
        }

        // Stacked residuals at the current iterate.
        let mut e = DVector::<f64>::zeros(9 * n);
        for k in 1..=n {
            e.rows_mut(9 * (k - 1), 9).copy_from(&(self.grid.nodes[k] - window.state9(k)));
        }
        let mut du_ref = DVector::<f64>::zeros(3 * n);
        for k in 0..n {
            du_ref
                .rows_mut(3 * k, 3)
                .copy_from(&(self.grid.controls[k] - window.input_ref_nmpc(k)));
        }

        let hessian = su.transpose() * &qbar * &su + &rbar;
        let g0 = su.transpose() * (&qbar * (&e + &w)) + &rbar * &du_ref;
        let g_dx = su.transpose() * &qbar * &phi;

        // Bounds on delta_u around the current controls.
        let l = &self.params.limits;
        let lo = [l.phi_min, l.theta_min, l.thrust_min];
        let hi = [l.phi_max, l.theta_max, l.thrust_max];
        let mut lb = DVector::<f64>::zeros(3 * n);
        let mut ub = DVector::<f64>::zeros(3 * n);
        for k in 0..n {
            for i in 0..3 {
                lb[3 * k + i] = lo[i] - self.grid.controls[k][i];
                ub[3 * k + i] = hi[i] - self.grid.controls[k][i];
            }
        }

        let cost = self.discrete_cost(&self.grid, window);
        Ok(RtiWorkspace {
            a_mats,
            b_mats,
            defects,
            hessian,
            g0,
            g_dx,
            lb,
            ub,
            cost_at_linearization: cost,
        })
    }

    /// Feedback phase: embed the measured state, solve the condensed QP,
    /// apply the full Gauss-Newton step to the grid and return the first
    /// control.
    pub fn feedback(
        &mut self,
        ws: &RtiWorkspace,
        x_now: &MavState<f64>,
        window: &ReferenceWindow,
    ) -> Result<NmpcOutput> {
        if !x_now.is_finite() {
            return Err(Error::NonFinite { context: "nmpc feedback state" });
        }
        let n = self.grid.horizon();
        let dx0 = x_now.to_vector() - self.grid.nodes[0];
        let dx0_d = DVector::from_iterator(9, dx0.iter().copied());
        let g = &ws.g0 + &ws.g_dx * dx0_d;
        let qp = BoxQp { h: ws.hessian.clone(), g, lb: ws.lb.clone(), ub: ws.ub.clone() };
        let sol = self.solver.solve(&qp, None)?;

        // Full-step update of controls and nodes.
        let mut ds = dx0;
        self.grid.nodes[0] = x_now.to_vector();
        let mut step_norm: f64 = 0.0;
        for k in 0..n {
            let du = Vector3::new(sol.z[3 * k], sol.z[3 * k + 1], sol.z[3 * k + 2]);
            step_norm = step_norm.max(du.amax());
            self.grid.controls[k] += du;
            ds = ws.a_mats[k] * ds + ws.b_mats[k] * du + ws.defects[k];
            self.grid.nodes[k + 1] += ds;
        }

        let l = &self.params.limits;
        let u0 = self.grid.controls[0];
        let mut psi_rate_cmd = window.yaw_rate(0);
        if let Some(lim) = self.psi_rate_limit {
            psi_rate_cmd = psi_rate_cmd.clamp(-lim, lim);
        }
        let command = AttitudeThrustCommand {
            phi_cmd: u0.x.clamp(l.phi_min, l.phi_max),
            theta_cmd: u0.y.clamp(l.theta_min, l.theta_max),
            psi_rate_cmd,
            thrust_cmd: u0.z.clamp(l.thrust_min, l.thrust_max),
        };
        self.last_command = command;
        Ok(NmpcOutput {
            command,
            qp_iterations: sol.iterations,
            step_norm,
            max_defect: ws.max_defect(),
            fault: false,
        })
    }

    /// One control step: prepare + feedback, with fail-operational fallback
    /// to the previous command and receding-horizon grid shifting driven by
    /// the elapsed time since the previous call.
    pub fn step(
        &mut self,
        elapsed: f64,
        x_now: &MavState<f64>,
        f_ext_est: &Vector3<f64>,
        window: &ReferenceWindow,
    ) -> NmpcOutput {
        self.time_since_shift += elapsed;
        if self.time_since_shift >= self.cfg.dt_pred - 1e-9 {
            self.time_since_shift = 0.0;
            self.grid.shift();
        }
        let result =
            self.prepare(f_ext_est, window).and_then(|ws| self.feedback(&ws, x_now, window));
        match result {
            Ok(out) => out,
            Err(_) => NmpcOutput {
                command: self.last_command,
                qp_iterations: 0,
                step_norm: f64::NAN,
                max_defect: f64::NAN,
                fault: true,
            },
        }
    }

    /// Iterate prepare/feedback at a frozen state until the combined
    /// residual (control step norm and continuity defect) drops below `tol`.
    /// Returns the residual history.
    pub fn iterate_to_convergence(
        &mut self,
        x_now: &MavState<f64>,
        f_ext_est: &Vector3<f64>,
        window: &ReferenceWindow,
        tol: f64,
        max_iterations: usize,
    ) -> Result<Vec<f64>> {
        let mut history = Vec::new();
        for _ in 0..max_iterations {
            let ws = self.prepare(f_ext_est, window)?;
            let out = self.feedback(&ws, x_now, window)?;
            let residual = out.step_norm.max(out.max_defect);
            history.push(residual);
            if residual < tol {
                break;
            }
        }
        Ok(history)
    }
}
