//! Shared optimal-control configuration and reference windows for the two
//! controllers.

use nalgebra::{DMatrix, SMatrix, SVector, Vector3};

use crate::dynamics::heading_rotate;
use crate::error::{Error, Result};
use crate::trajectory::RefSample;

/// Terminal weight selection.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalWeight {
    Matrix(SMatrix<f64, 8, 8>),
    /// Derive the terminal weight from the discrete algebraic Riccati
    /// equation of the hover-linearized model (infinite-horizon cost).
    Riccati,
}

/// Horizon, prediction step and cost weights shared by both controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpConfig {
    pub horizon: usize,
    pub dt_pred: f64,
    /// State weight on the 8-entry heading-free state.
    pub q: SMatrix<f64, 8, 8>,
    /// Input weight on `(phi_cmd, theta_cmd, thrust)`.
    pub r: SMatrix<f64, 3, 3>,
    pub terminal: TerminalWeight,
}

impl Default for OcpConfig {
    fn default() -> Self {
        // 20 steps at 10 Hz: a 2 s prediction horizon.
        let mut q = SMatrix::<f64, 8, 8>::zeros();
        for i in 0..3 {
            q[(i, i)] = 40.0; // position
            q[(i + 3, i + 3)] = 8.0; // velocity
        }
        q[(6, 6)] = 2.0;
        q[(7, 7)] = 2.0;
        let r = SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::new(8.0, 8.0, 2.0));
        Self { horizon: 20, dt_pred: 0.1, q, r, terminal: TerminalWeight::Riccati }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.dt_pred > 0.0) {
            return Err(Error::InvalidArgument("prediction step must be positive".into()));
        }
        let tol = 1e-10;
        let qd = DMatrix::from_iterator(8, 8, self.q.iter().copied());
        if qd.symmetric_eigenvalues().iter().any(|&l| l < -tol) {
            return Err(Error::InvalidArgument("Q must be positive semidefinite".into()));
        }
        let rd = DMatrix::from_iterator(3, 3, self.r.iter().copied());
        if nalgebra::Cholesky::new(rd).is_none() {
            return Err(Error::InvalidArgument("R must be positive definite".into()));
        }
        if let TerminalWeight::Matrix(p) = &self.terminal {
            let pd = DMatrix::from_iterator(8, 8, p.iter().copied());
            if pd.symmetric_eigenvalues().iter().any(|&l| l < -tol) {
                return Err(Error::InvalidArgument("P must be positive semidefinite".into()));
            }
        }
        Ok(())
    }
}

/// Feed-forward input reference from a body-frame acceleration:
/// `u_ref = (-a_y / g, a_x / g, a_z)`.
pub fn feedforward(a_body: Vector3<f64>, g: f64) -> Vector3<f64> {
    Vector3::new(-a_body.y / g, a_body.x / g, a_body.z)
}

/// Per-step state and input references on the prediction grid:
/// `n + 1` reference samples covering nodes `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    samples: Vec<RefSample>,
    g: f64,
}

impl ReferenceWindow {
    pub fn new(samples: Vec<RefSample>, g: f64) -> Self {
        assert!(samples.len() >= 2, "a reference window needs at least two nodes");
        Self { samples, g }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[RefSample] {
        &self.samples
    }

    pub fn gravity(&self) -> f64 {
        self.g
    }

    /// 8-entry heading-free state reference at node `k`: position, velocity,
    /// and the quasi-static tilt implied by the inertial reference
    /// acceleration.
    pub fn state8(&self, k: usize) -> SVector<f64, 8> {
        let s = &self.samples[k];
        SVector::<f64, 8>::from_column_slice(&[
            s.p.x,
            s.p.y,
            s.p.z,
            s.v.x,
            s.v.y,
            s.v.z,
            -s.a.y / self.g,
            s.a.x / self.g,
        ])
    }

    /// 9-entry state reference at node `k` with body-frame tilt and yaw.
    pub fn state9(&self, k: usize) -> SVector<f64, 9> {
        let s = &self.samples[k];
        let a_body = self.accel_body(k);
        SVector::<f64, 9>::from_column_slice(&[
            s.p.x,
            s.p.y,
            s.p.z,
            s.v.x,
            s.v.y,
            s.v.z,
            -a_body.y / self.g,
            a_body.x / self.g,
            s.yaw,
        ])
    }

    /// Reference acceleration at node `k` rotated into the heading frame.
    pub fn accel_body(&self, k: usize) -> Vector3<f64> {
        let s = &self.samples[k];
        let xy = heading_rotate(s.a.xy(), s.yaw);
        Vector3::new(xy.x, xy.y, s.a.z)
    }

    /// Feed-forward input for the linear controller (heading-free frame,
    /// thrust as deviation from gravity).
    pub fn input_ref_lmpc(&self, k: usize) -> Vector3<f64> {
        feedforward(self.samples[k].a, self.g)
    }

    /// Feed-forward input for the nonlinear controller (body frame, absolute
    /// thrust).
    pub fn input_ref_nmpc(&self, k: usize) -> Vector3<f64> {
        let ff = feedforward(self.accel_body(k), self.g);
        Vector3::new(ff.x, ff.y, self.g + ff.z)
    }

    pub fn yaw_rate(&self, k: usize) -> f64 {
        self.samples[k].yaw_rate
    }
}
