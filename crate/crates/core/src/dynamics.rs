//! Multirotor model: nonlinear translational dynamics with thrust-proportional
//! rotor drag, first-order inner-loop attitude response, hover linearization,
//! zero-order-hold discretization, and the heading-free command transforms.
//!
//! State ordering used throughout the crate for the 9-entry vector form:
//! `(p_x, p_y, p_z, v_x, v_y, v_z, phi, theta, psi)`. The linear model works
//! on the 8-entry subset without `psi`, with roll/pitch expressed as
//! heading-free (inertial-frame) angles.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Controller-visible vehicle state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MavState<T: Real> {
    /// Inertial position [m].
    pub p: Vector3<T>,
    /// Inertial velocity [m/s].
    pub v: Vector3<T>,
    /// Roll [rad].
    pub phi: T,
    /// Pitch [rad].
    pub theta: T,
    /// Heading [rad].
    pub psi: T,
}

impl<T: Real> MavState<T> {
    pub fn hover(p: Vector3<T>) -> Self {
        Self { p, v: Vector3::zeros(), phi: T::zero(), theta: T::zero(), psi: T::zero() }
    }

    pub fn to_vector(&self) -> SVector<T, 9> {
        SVector::<T, 9>::from_column_slice(&[
            self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.phi, self.theta,
            self.psi,
        ])
    }

    pub fn from_vector(x: &SVector<T, 9>) -> Self {
        Self {
            p: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
            phi: x[6],
            theta: x[7],
            psi: x[8],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|e| e.is_finite())
    }

    /// Model validity region: both tilt angles strictly inside +-pi/2.
    pub fn is_valid(&self) -> bool {
        let half_pi = T::frac_pi_2();
        self.is_finite() && self.phi.abs() < half_pi && self.theta.abs() < half_pi
    }
}

/// Cascade interface command: attitude setpoints, heading rate, and
/// mass-normalized collective thrust.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeThrustCommand<T: Real> {
    pub phi_cmd: T,
    pub theta_cmd: T,
    pub psi_rate_cmd: T,
    /// Collective thrust [m/s^2], mass-normalized.
    pub thrust_cmd: T,
}

impl<T: Real> AttitudeThrustCommand<T> {
    pub fn hover(g: T) -> Self {
        Self { phi_cmd: T::zero(), theta_cmd: T::zero(), psi_rate_cmd: T::zero(), thrust_cmd: g }
    }

    pub fn is_finite(&self) -> bool {
        self.phi_cmd.is_finite()
            && self.theta_cmd.is_finite()
            && self.psi_rate_cmd.is_finite()
            && self.thrust_cmd.is_finite()
    }
}

/// External force acting on the vehicle, inertial frame [N].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce<T: Real>(pub Vector3<T>);

impl<T: Real> ExternalForce<T> {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

/// Box constraints on the command vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLimits<T: Real> {
    pub phi_min: T,
    pub phi_max: T,
    pub theta_min: T,
    pub theta_max: T,
    /// Mass-normalized thrust bounds [m/s^2].
    pub thrust_min: T,
    pub thrust_max: T,
}

impl<T: Real> InputLimits<T> {
    pub fn validate(&self) -> Result<()> {
        if self.phi_min < self.phi_max
            && self.theta_min < self.theta_max
            && self.thrust_min < self.thrust_max
        {
            Ok(())
        } else {
            Err(Error::InvalidParams("input limits must satisfy min < max".into()))
        }
    }

    pub fn contains(&self, u: &AttitudeThrustCommand<T>) -> bool {
        u.phi_cmd >= self.phi_min
            && u.phi_cmd <= self.phi_max
            && u.theta_cmd >= self.theta_min
            && u.theta_cmd <= self.theta_max
            && u.thrust_cmd >= self.thrust_min
            && u.thrust_cmd <= self.thrust_max
    }
}

/// Vehicle parameters. Defaults come from the NEO hexacopter identification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T: Real> {
    /// Mass [kg].
    pub mass: T,
    /// Gravity [m/s^2].
    pub g: T,
    /// Lumped rotor drag coefficient (per unit mass-normalized thrust).
    pub k_drag: T,
    /// Roll closed-loop time constant [s].
    pub tau_phi: T,
    /// Pitch closed-loop time constant [s].
    pub tau_theta: T,
    /// Roll closed-loop gain.
    pub k_phi: T,
    /// Pitch closed-loop gain.
    pub k_theta: T,
    pub limits: InputLimits<T>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        let mass: T = lit(3.42);
        Self {
            mass,
            g: lit(9.81),
            k_drag: lit(0.01),
            tau_phi: lit(0.1901),
            tau_theta: lit(0.1721),
            k_phi: lit(0.91),
            k_theta: lit(0.96),
            limits: InputLimits {
                phi_min: lit(-std::f64::consts::FRAC_PI_4),
                phi_max: lit(std::f64::consts::FRAC_PI_4),
                theta_min: lit(-std::f64::consts::FRAC_PI_4),
                theta_max: lit(std::f64::consts::FRAC_PI_4),
                // Newton limits from the identification, divided by mass once.
                thrust_min: lit::<T>(13.5) / mass,
                thrust_max: lit::<T>(40.3) / mass,
            },
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = self.mass > T::zero()
            && self.g > T::zero()
            && self.k_drag >= T::zero()
            && self.tau_phi > T::zero()
            && self.tau_theta > T::zero()
            && self.k_phi > T::zero()
            && self.k_theta > T::zero();
        if !pos {
            return Err(Error::InvalidParams(
                "mass, g, time constants and gains must be positive; k_drag non-negative".into(),
            ));
        }
        self.limits.validate()
    }
}

/// Rotation from body to inertial frame, Z-Y-X convention:
/// `R = Rz(psi) * Ry(theta) * Rx(phi)`.
pub fn rotation<T: Real>(phi: T, theta: T, psi: T) -> Matrix3<T> {
    let (sph, cph) = (phi.sin(), phi.cos());
    let (sth, cth) = (theta.sin(), theta.cos());
    let (sps, cps) = (psi.sin(), psi.cos());
    Matrix3::new(
        cps * cth,
        cps * sth * sph - sps * cph,
        cps * sth * cph + sps * sph,
        sps * cth,
        sps * sth * sph + cps * cph,
        sps * sth * cph - cps * sph,
        -sth,
        cth * sph,
        cth * cph,
    )
}

/// Rotation matrix together with its partial derivatives w.r.t. the three
/// Euler angles.
pub fn rotation_derivs<T: Real>(
    phi: T,
    theta: T,
    psi: T,
) -> (Matrix3<T>, Matrix3<T>, Matrix3<T>, Matrix3<T>) {
    let (sph, cph) = (phi.sin(), phi.cos());
    let (sth, cth) = (theta.sin(), theta.cos());
    let (sps, cps) = (psi.sin(), psi.cos());
    let o = T::zero();

    let rz = Matrix3::new(cps, -sps, o, sps, cps, o, o, o, T::one());
    let ry = Matrix3::new(cth, o, sth, o, T::one(), o, -sth, o, cth);
    let rx = Matrix3::new(T::one(), o, o, o, cph, -sph, o, sph, cph);

    let drz = Matrix3::new(-sps, -cps, o, cps, -sps, o, o, o, o);
    let dry = Matrix3::new(-sth, o, cth, o, o, o, -cth, o, -sth);
    let drx = Matrix3::new(o, o, o, o, -sph, -cph, o, cph, -sph);

    let r = rz * ry * rx;
    (r, rz * ry * drx, rz * dry * rx, drz * ry * rx)
}

fn drag_matrix<T: Real>(k_drag: T) -> Matrix3<T> {
    Matrix3::from_diagonal(&Vector3::new(k_drag, k_drag, T::zero()))
}

/// Continuous-time dynamics of the cascade model.
///
/// Translational part: `v_dot = R e_z T - R (T K_drag) R^T v - g e_z + F/m`,
/// with `T` the mass-normalized collective thrust and
/// `K_drag = diag(k_D, k_D, 0)`. Attitude follows the identified first-order
/// inner loop; heading rate is passed through.
pub fn eval_dynamics<T: Real>(
    x: &MavState<T>,
    u: &AttitudeThrustCommand<T>,
    f_ext: &ExternalForce<T>,
    params: &ModelParams<T>,
) -> Result<SVector<T, 9>> {
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "eval_dynamics state" });
    }
    if !u.is_finite() {
        return Err(Error::NonFinite { context: "eval_dynamics command" });
    }
    if !f_ext.0.iter().all(|e| e.is_finite()) {
        return Err(Error::NonFinite { context: "eval_dynamics external force" });
    }

    let r = rotation(x.phi, x.theta, x.psi);
    let ez = Vector3::new(T::zero(), T::zero(), T::one());
    let thrust = r * ez * u.thrust_cmd;
    let drag = r * drag_matrix(params.k_drag) * (r.transpose() * x.v) * u.thrust_cmd;
    let gravity = ez * params.g;
    let v_dot = thrust - drag - gravity + f_ext.0 / params.mass;

    let phi_dot = (params.k_phi * u.phi_cmd - x.phi) / params.tau_phi;
    let theta_dot = (params.k_theta * u.theta_cmd - x.theta) / params.tau_theta;

    Ok(SVector::<T, 9>::from_column_slice(&[
        x.v.x,
        x.v.y,
        x.v.z,
        v_dot.x,
        v_dot.y,
        v_dot.z,
        phi_dot,
        theta_dot,
        u.psi_rate_cmd,
    ]))
}

/// Analytic Jacobians of [`eval_dynamics`]: w.r.t. the 9-entry state, the
/// decision inputs `(phi_cmd, theta_cmd, thrust_cmd)`, and the external force.
pub fn dynamics_jacobians<T: Real>(
    x: &MavState<T>,
    u: &AttitudeThrustCommand<T>,
    params: &ModelParams<T>,
) -> (SMatrix<T, 9, 9>, SMatrix<T, 9, 3>, SMatrix<T, 9, 3>) {
    let (r, dr_phi, dr_theta, dr_psi) = rotation_derivs(x.phi, x.theta, x.psi);
    let kd = drag_matrix(params.k_drag);
    let ez = Vector3::new(T::zero(), T::zero(), T::one());
    let t = u.thrust_cmd;

    let mut a = SMatrix::<T, 9, 9>::zeros();
    // p_dot = v
    for i in 0..3 {
        a[(i, i + 3)] = T::one();
    }
    // v_dot w.r.t. v
    let dv_dv = -(r * kd * r.transpose()) * t;
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&dv_dv);
    // v_dot w.r.t. attitude angles
    for (col, dr) in [(6usize, &dr_phi), (7, &dr_theta), (8, &dr_psi)] {
        let d = *dr * ez * t
            - (*dr * kd * r.transpose() + r * kd * dr.transpose()) * x.v * t;
        a.fixed_view_mut::<3, 1>(3, col).copy_from(&d);
    }
    // attitude diagonal
    a[(6, 6)] = -T::one() / params.tau_phi;
    a[(7, 7)] = -T::one() / params.tau_theta;

    let mut b = SMatrix::<T, 9, 3>::zeros();
    let dv_dt = r * ez - r * kd * (r.transpose() * x.v);
    b.fixed_view_mut::<3, 1>(3, 2).copy_from(&dv_dt);
    b[(6, 0)] = params.k_phi / params.tau_phi;
    b[(7, 1)] = params.k_theta / params.tau_theta;

    let mut bf = SMatrix::<T, 9, 3>::zeros();
    let inv_m = T::one() / params.mass;
    for i in 0..3 {
        bf[(3 + i, i)] = inv_m;
    }

    (a, b, bf)
}

/// Heading-free to body-frame attitude command rotation.
///
/// `(phi, theta) = [[cos psi, sin psi], [-sin psi, cos psi]] (phi_I, theta_I)`
pub fn rotate_cmd_to_body<T: Real>(phi_i: T, theta_i: T, psi: T) -> (T, T) {
    let (s, c) = (psi.sin(), psi.cos());
    (c * phi_i + s * theta_i, -s * phi_i + c * theta_i)
}

/// Inverse of [`rotate_cmd_to_body`]: body-frame angles to heading-free.
pub fn body_to_inertial_angles<T: Real>(phi: T, theta: T, psi: T) -> (T, T) {
    let (s, c) = (psi.sin(), psi.cos());
    (c * phi - s * theta, s * phi + c * theta)
}

/// Attitude-dependent lift compensation: maps the controller's thrust
/// deviation `T_cmd` into the physical collective thrust
/// `(T_cmd + g) / (cos phi cos theta)`, clamped to the thrust limits.
pub fn compensate_thrust<T: Real>(
    t_cmd: T,
    phi: T,
    theta: T,
    params: &ModelParams<T>,
) -> Result<T> {
    let half_pi = T::frac_pi_2();
    if phi.abs() >= half_pi || theta.abs() >= half_pi {
        return Err(Error::SingularCompensation);
    }
    let raw = (t_cmd + params.g) / (phi.cos() * theta.cos());
    Ok(raw.clamp(params.limits.thrust_min, params.limits.thrust_max))
}

/// Continuous-time hover linearization on the 8-entry heading-free state
/// `(p, v, phi_I, theta_I)` with inputs `(phi_cmd_I, theta_cmd_I, T_cmd)`,
/// where `T_cmd` is the thrust deviation from gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearModel<T: Real> {
    pub a: SMatrix<T, 8, 8>,
    pub b: SMatrix<T, 8, 3>,
    pub bd: SMatrix<T, 8, 3>,
}

/// Discrete linear state-space model
/// `x_{k+1} = A x_k + B u_k + B_d F_ext_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real> {
    pub a: SMatrix<T, 8, 8>,
    pub b: SMatrix<T, 8, 3>,
    pub bd: SMatrix<T, 8, 3>,
    pub dt: T,
}

/// Jacobians of the nonlinear model at the hover equilibrium
/// (`v = 0`, level attitude, thrust = g), reduced to the 8-entry state.
pub fn linearize_hover<T: Real>(params: &ModelParams<T>) -> Result<ContinuousLinearModel<T>> {
    params.validate()?;
    let g = params.g;
    let mut a = SMatrix::<T, 8, 8>::zeros();
    for i in 0..3 {
        a[(i, i + 3)] = T::one();
    }
    // Drag linearized at hover thrust: -g * k_D on horizontal velocities.
    a[(3, 3)] = -g * params.k_drag;
    a[(4, 4)] = -g * params.k_drag;
    // Small-angle gravity tilt.
    a[(3, 7)] = g;
    a[(4, 6)] = -g;
    a[(6, 6)] = -T::one() / params.tau_phi;
    a[(7, 7)] = -T::one() / params.tau_theta;

    let mut b = SMatrix::<T, 8, 3>::zeros();
    b[(5, 2)] = T::one();
    b[(6, 0)] = params.k_phi / params.tau_phi;
    b[(7, 1)] = params.k_theta / params.tau_theta;

    let mut bd = SMatrix::<T, 8, 3>::zeros();
    let inv_m = T::one() / params.mass;
    for i in 0..3 {
        bd[(3 + i, i)] = inv_m;
    }

    Ok(ContinuousLinearModel { a, b, bd })
}

/// Exact zero-order-hold discretization via the matrix exponential of the
/// augmented system `[[A, B, Bd], [0, 0, 0], [0, 0, 0]]`.
pub fn discretize_zoh<T: Real>(cont: &ContinuousLinearModel<T>, dt: T) -> Result<LinearModel<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("discretization step must be positive".into()));
    }
    let mut aug = SMatrix::<T, 14, 14>::zeros();
    aug.fixed_view_mut::<8, 8>(0, 0).copy_from(&cont.a);
    aug.fixed_view_mut::<8, 3>(0, 8).copy_from(&cont.b);
    aug.fixed_view_mut::<8, 3>(0, 11).copy_from(&cont.bd);
    let e = (aug * dt).exp();
    Ok(LinearModel {
        a: e.fixed_view::<8, 8>(0, 0).into_owned(),
        b: e.fixed_view::<8, 3>(0, 8).into_owned(),
        bd: e.fixed_view::<8, 3>(0, 11).into_owned(),
        dt,
    })
}

/// Heading-free 2-vector rotation as a matrix, handy for references.
pub fn heading_rotation<T: Real>(psi: T) -> Matrix2<T> {
    let (s, c) = (psi.sin(), psi.cos());
    Matrix2::new(c, s, -s, c)
}

/// Rotate an inertial horizontal vector into the heading frame.
pub fn heading_rotate<T: Real>(v: Vector2<T>, psi: T) -> Vector2<T> {
    heading_rotation(psi) * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> ModelParams<f64> {
        ModelParams::default()
    }

    fn finite_diff_jacobian(
        x: &MavState<f64>,
        u: &AttitudeThrustCommand<f64>,
        params: &ModelParams<f64>,
    ) -> (SMatrix<f64, 9, 9>, SMatrix<f64, 9, 3>) {
        let f = ExternalForce::zero();
        let h = 1e-6;
        let mut ja = SMatrix::<f64, 9, 9>::zeros();
        let xv = x.to_vector();
        for j in 0..9 {
            let mut xp = xv;
            let mut xm = xv;
            xp[j] += h;
            xm[j] -= h;
            let fp = eval_dynamics(&MavState::from_vector(&xp), u, &f, params).unwrap();
            let fm = eval_dynamics(&MavState::from_vector(&xm), u, &f, params).unwrap();
            ja.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        let mut jb = SMatrix::<f64, 9, 3>::zeros();
        for j in 0..3 {
            let mut up = *u;
            let mut um = *u;
            match j {
                0 => {
                    up.phi_cmd += h;
                    um.phi_cmd -= h;
                }
                1 => {
                    up.theta_cmd += h;
                    um.theta_cmd -= h;
                }
                _ => {
                    up.thrust_cmd += h;
                    um.thrust_cmd -= h;
                }
            }
            let fp = eval_dynamics(x, &up, &f, params).unwrap();
            let fm = eval_dynamics(x, &um, &f, params).unwrap();
            jb.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        (ja, jb)
    }

    #[test]
    fn hover_equilibrium_is_exact() {
        let p = params();
        let x = MavState::hover(Vector3::new(1.0, -2.0, 3.0));
        let u = AttitudeThrustCommand::hover(p.g);
        let dx = eval_dynamics(&x, &u, &ExternalForce::zero(), &p).unwrap();
        assert_eq!(dx, SVector::<f64, 9>::zeros());
    }

    #[test]
    fn roll_rate_matches_first_order_response() {
        let p = params();
        let x = MavState::hover(Vector3::zeros());
        let u = AttitudeThrustCommand { phi_cmd: 1.0, ..AttitudeThrustCommand::hover(p.g) };
        let dx = eval_dynamics(&x, &u, &ExternalForce::zero(), &p).unwrap();
        // k_phi / tau_phi = 0.91 / 0.1901
        assert_relative_eq!(dx[6], 0.91 / 0.1901, max_relative = 1e-12);
        assert_relative_eq!(dx[6], 4.787, max_relative = 1e-3);
    }

    #[test]
    fn drag_decelerates_forward_flight() {
        let p = params();
        let mut x = MavState::hover(Vector3::zeros());
        x.v = Vector3::new(1.0, 0.0, 0.0);
        let u = AttitudeThrustCommand::hover(p.g);
        let dx = eval_dynamics(&x, &u, &ExternalForce::zero(), &p).unwrap();
        assert_relative_eq!(dx[3], -p.g * p.k_drag, max_relative = 1e-12);
        assert!(dx[3] < 0.0);
    }

    #[test]
    fn rejects_non_finite_state() {
        let p = params();
        let mut x = MavState::hover(Vector3::zeros());
        x.v.x = f64::NAN;
        let u = AttitudeThrustCommand::hover(p.g);
        assert!(matches!(
            eval_dynamics(&x, &u, &ExternalForce::zero(), &p),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = params();
        let x = MavState {
            p: Vector3::new(0.3, -0.2, 1.1),
            v: Vector3::new(0.5, -0.4, 0.2),
            phi: 0.1,
            theta: -0.15,
            psi: 0.7,
        };
        let u = AttitudeThrustCommand {
            phi_cmd: 0.05,
            theta_cmd: -0.1,
            psi_rate_cmd: 0.2,
            thrust_cmd: 10.5,
        };
        let (ja, jb, _) = dynamics_jacobians(&x, &u, &p);
        let (fa, fb) = finite_diff_jacobian(&x, &u, &p);
        assert_abs_diff_eq!(ja, fa, epsilon = 1e-7);
        assert_abs_diff_eq!(jb, fb, epsilon = 1e-7);
    }

    #[test]
    fn heading_rotation_quarter_turn() {
        let (a, b) = (0.3, -0.7);
        let (phi, theta) = rotate_cmd_to_body(a, b, std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(phi, b, max_relative = 1e-12);
        assert_relative_eq!(theta, -a, epsilon = 1e-12);
        let (phi0, theta0) = rotate_cmd_to_body(a, b, 0.0);
        assert_eq!((phi0, theta0), (a, b));
    }

    #[test]
    fn heading_rotation_roundtrip() {
        for psi in [-2.5, -0.3, 0.0, 0.9, 3.0] {
            let (a, b) = (0.21, -0.47);
            let (phi, theta) = rotate_cmd_to_body(a, b, psi);
            let (ai, bi) = body_to_inertial_angles(phi, theta, psi);
            assert_abs_diff_eq!(ai, a, epsilon = 1e-12);
            assert_abs_diff_eq!(bi, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn thrust_compensation_values() {
        let p = params();
        assert_relative_eq!(compensate_thrust(0.0, 0.0, 0.0, &p).unwrap(), 9.81);
        let th30 = 30.0_f64.to_radians();
        assert_relative_eq!(
            compensate_thrust(0.0, 0.0, th30, &p).unwrap(),
            9.81 / th30.cos(),
            max_relative = 1e-12
        );
        // 40.3 N / 3.42 kg clamp
        let clamped = compensate_thrust(5.0, 0.6, 0.6, &p).unwrap();
        assert_relative_eq!(clamped, 40.3 / 3.42, max_relative = 1e-12);
        assert!(matches!(
            compensate_thrust(0.0, std::f64::consts::FRAC_PI_2, 0.0, &p),
            Err(Error::SingularCompensation)
        ));
    }

    #[test]
    fn hover_linearization_entries() {
        let p = params();
        let lin = linearize_hover(&p).unwrap();
        assert_relative_eq!(lin.a[(3, 7)], p.g);
        assert_relative_eq!(lin.a[(4, 6)], -p.g);
        assert_relative_eq!(lin.a[(6, 6)], -1.0 / 0.1901, max_relative = 1e-12);
        assert_relative_eq!(lin.a[(6, 6)], -5.260, max_relative = 1e-3);
        assert_relative_eq!(lin.bd[(3, 0)], 1.0 / p.mass);
    }

    #[test]
    fn hover_linearization_matches_finite_differences() {
        let p = params();
        let lin = linearize_hover(&p).unwrap();
        let x = MavState::hover(Vector3::zeros());
        let u = AttitudeThrustCommand::hover(p.g);
        let (fa, fb) = finite_diff_jacobian(&x, &u, &p);
        // 8-state reduction: drop the psi row/column (index 8). At psi = 0 the
        // heading-free angles coincide with the body angles.
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(lin.a[(i, j)], fa[(i, j)], epsilon = 1e-6);
            }
            for j in 0..3 {
                let expected = if j == 2 {
                    // Linear model thrust input is the deviation from g; the
                    // partial derivative is the same.
                    fb[(i, 2)]
                } else {
                    fb[(i, j)]
                };
                assert_abs_diff_eq!(lin.b[(i, j)], expected, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn zoh_double_integrator_closed_form() {
        // Position/velocity pair driven by the thrust column.
        let p = params();
        let mut noslip = p;
        noslip.k_drag = 0.0;
        let lin = linearize_hover(&noslip).unwrap();
        let model = discretize_zoh(&lin, 0.1).unwrap();
        // z / vz / thrust chain is an exact double integrator.
        assert_relative_eq!(model.a[(2, 2)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(model.a[(2, 5)], 0.1, max_relative = 1e-12);
        assert_relative_eq!(model.a[(5, 5)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(model.b[(2, 2)], 0.005, max_relative = 1e-10);
        assert_relative_eq!(model.b[(5, 2)], 0.1, max_relative = 1e-10);
        // First-order attitude row.
        assert_relative_eq!(model.a[(6, 6)], (-0.1_f64 / 0.1901).exp(), max_relative = 1e-10);
    }

    #[test]
    fn zoh_matches_fine_rk4_propagation() {
        let p = params();
        let lin = linearize_hover(&p).unwrap();
        let dt = 0.1;
        let model = discretize_zoh(&lin, dt).unwrap();
        // Fine-step RK4 oracle on the augmented linear system.
        let u = nalgebra::Vector3::new(0.07, -0.05, 0.4);
        let fext = nalgebra::Vector3::new(0.5, -1.0, 0.2);
        let x0 = SVector::<f64, 8>::from_fn(|i, _| 0.1 * (i as f64 + 1.0));
        let deriv = |x: &SVector<f64, 8>| lin.a * x + lin.b * u + lin.bd * fext;
        let mut x = x0;
        let n = 10_000;
        let h = dt / n as f64;
        for _ in 0..n {
            let k1 = deriv(&x);
            let k2 = deriv(&(x + k1 * (h / 2.0)));
            let k3 = deriv(&(x + k2 * (h / 2.0)));
            let k4 = deriv(&(x + k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let xd = model.a * x0 + model.b * u + model.bd * fext;
        assert_abs_diff_eq!(xd, x, epsilon = 1e-8);
    }

    #[test]
    fn zoh_rejects_non_positive_dt() {
        let lin = linearize_hover(&params()).unwrap();
        assert!(discretize_zoh(&lin, 0.0).is_err());
        assert!(discretize_zoh(&lin, -0.1).is_err());
    }

    #[test]
    fn attitude_subblock_is_strictly_stable() {
        let lin = linearize_hover(&params()).unwrap();
        let model = discretize_zoh(&lin, 0.25).unwrap();
        assert!(model.a[(6, 6)].abs() < 1.0);
        assert!(model.a[(7, 7)].abs() < 1.0);
    }

    #[test]
    fn heading_invariance_of_inertial_acceleration() {
        // Rotating the command into the body frame for heading psi must give
        // the same inertial acceleration as psi = 0 with heading-free angles,
        // at small angles.
        let p = params();
        let (phi_i, theta_i) = (0.01, -0.013);
        let a_ref = {
            let mut x = MavState::hover(Vector3::zeros());
            x.phi = phi_i;
            x.theta = theta_i;
            let u = AttitudeThrustCommand::hover(p.g);
            eval_dynamics(&x, &u, &ExternalForce::zero(), &p)
                .unwrap()
                .fixed_rows::<3>(3)
                .into_owned()
        };
        for psi in [0.4, -1.3, 2.2] {
            // Linearized heading-free construction: exact for the small-angle
            // model. The full nonlinear model agrees to second order in the
            // tilt angles.
            let (phi_b, theta_b) = rotate_cmd_to_body(phi_i, theta_i, psi);
            let mut x = MavState::hover(Vector3::zeros());
            x.phi = phi_b;
            x.theta = theta_b;
            x.psi = psi;
            let u = AttitudeThrustCommand::hover(p.g);
            let acc = eval_dynamics(&x, &u, &ExternalForce::zero(), &p)
                .unwrap()
                .fixed_rows::<3>(3)
                .into_owned();
            assert_abs_diff_eq!(acc, a_ref, epsilon = 1e-5);
        }
    }

    #[test]
    fn drag_never_increases_horizontal_speed() {
        // With thrust fixed at hover and no wind, the horizontal speed
        // magnitude decays along simulated motion at level attitude.
        let p = params();
        let mut x = MavState::hover(Vector3::zeros());
        x.v = Vector3::new(2.0, -1.0, 0.0);
        let u = AttitudeThrustCommand::hover(p.g);
        let mut speed = x.v.xy().norm();
        let h = 1e-3;
        for _ in 0..2000 {
            let dx = eval_dynamics(&x, &u, &ExternalForce::zero(), &p).unwrap();
            let xv = x.to_vector() + dx * h;
            x = MavState::from_vector(&xv);
            let s = x.v.xy().norm();
            assert!(s <= speed + 1e-12);
            speed = s;
        }
    }
}
