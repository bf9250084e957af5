//! Extended Kalman filter estimating the external force.
//!
//! The vehicle state is augmented with a three-entry random-walk force, so
//! any unmodeled steady acceleration (wind drag, payload offset, parameter
//! mismatch) shows up in the force estimate and can be fed forward to the
//! controllers. The full state is measured (motion-capture style); the force
//! is only observable through its effect on velocity.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::dynamics::{AttitudeThrustCommand, ExternalForce, MavState, ModelParams};
use crate::error::{Error, Result};
use crate::rk::Irk4;

/// Process and measurement noise intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfNoise {
    /// Measurement noise std on position [m].
    pub sigma_p: f64,
    /// Measurement noise std on velocity [m/s].
    pub sigma_v: f64,
    /// Measurement noise std on attitude [rad].
    pub sigma_att: f64,
    /// Process noise PSD on position states [m^2/s].
    pub q_p: f64,
    /// Process noise PSD on velocity states [m^2/s^3 equivalent].
    pub q_v: f64,
    /// Process noise PSD on attitude states [rad^2/s].
    pub q_att: f64,
    /// Random-walk PSD of the external force [N^2/s].
    pub q_force: f64,
}

impl Default for EkfNoise {
    fn default() -> Self {
        Self {
            sigma_p: 1e-3,
            sigma_v: 1e-2,
            sigma_att: 0.2_f64.to_radians(),
            q_p: 1e-6,
            q_v: 1e-4,
            q_att: 1e-5,
            q_force: 0.5,
        }
    }
}

pub struct DisturbanceEkf {
    integrator: Irk4<f64>,
    noise: EkfNoise,
    /// Vehicle state mean.
    pub x: SVector<f64, 9>,
    /// External force mean [N].
    pub f_ext: Vector3<f64>,
    /// Covariance of the 12-entry augmented state.
    pub cov: SMatrix<f64, 12, 12>,
}

impl DisturbanceEkf {
    pub fn new(params: ModelParams<f64>, noise: EkfNoise, x0: &MavState<f64>) -> Self {
        let mut cov = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..9 {
            cov[(i, i)] = 1e-4;
        }
        for i in 9..12 {
            cov[(i, i)] = 1.0;
        }
        Self {
            integrator: Irk4::new(params),
            noise,
            x: x0.to_vector(),
            f_ext: Vector3::zeros(),
            cov,
        }
    }

    pub fn state(&self) -> MavState<f64> {
        MavState::from_vector(&self.x)
    }

    /// Time update: propagate the mean through the full model with the force
    /// held constant, and the covariance through the discrete linearization.
    pub fn predict(&mut self, u: &AttitudeThrustCommand<f64>, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("EKF prediction step must be positive".into()));
        }
        let step = self.integrator.step(&self.x, u, &ExternalForce(self.f_ext), dt)?;
        self.x = step.x_next;

        // Discrete transition of the augmented state: the force is a random
        // walk, the vehicle block and force coupling come from the integrator
        // sensitivities.
        let mut f = SMatrix::<f64, 12, 12>::identity();
        f.fixed_view_mut::<9, 9>(0, 0).copy_from(&step.dx_dx);
        f.fixed_view_mut::<9, 3>(0, 9).copy_from(&step.dx_df);

        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..3 {
            q[(i, i)] = self.noise.q_p * dt;
            q[(i + 3, i + 3)] = self.noise.q_v * dt;
            q[(i + 6, i + 6)] = self.noise.q_att * dt;
            q[(i + 9, i + 9)] = self.noise.q_force * dt;
        }
        self.cov = f * self.cov * f.transpose() + q;
        self.symmetrize();
        Ok(())
    }

    /// Measurement update with a full-state measurement (H = [I 0]),
    /// Joseph-form covariance update.
    pub fn update(&mut self, y: &MavState<f64>) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::NonFinite { context: "EKF measurement" });
        }
        let mut r = SMatrix::<f64, 9, 9>::zeros();
        for i in 0..3 {
            r[(i, i)] = self.noise.sigma_p.powi(2);
            r[(i + 3, i + 3)] = self.noise.sigma_v.powi(2);
        }
        for i in 6..9 {
            r[(i, i)] = self.noise.sigma_att.powi(2);
        }
        let p_xx = self.cov.fixed_view::<9, 9>(0, 0).into_owned();
        let p_all_x = self.cov.fixed_view::<12, 9>(0, 0).into_owned();
        let s = p_xx + r;
        let s_inv = s.cholesky().ok_or(Error::SingularInnovation)?.inverse();
        let k = p_all_x * s_inv; // 12 x 9 gain
        let innovation = y.to_vector() - self.x;

        let dz = k * innovation;
        self.x += dz.fixed_rows::<9>(0).into_owned();
        self.f_ext += dz.fixed_rows::<3>(9).into_owned();

        // Joseph form: (I - K H) P (I - K H)' + K R K'.
        let mut kh = SMatrix::<f64, 12, 12>::zeros();
        kh.fixed_view_mut::<12, 9>(0, 0).copy_from(&k);
        let ikh = SMatrix::<f64, 12, 12>::identity() - kh;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        self.symmetrize();
        Ok(())
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }
}
