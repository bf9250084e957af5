//! Reference trajectories: hover setpoints, step references, and polynomial
//! segments sampled for position, velocity, acceleration and yaw.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::ocp::ReferenceWindow;

/// Per-axis polynomial segment, coefficients in ascending powers of the
/// segment-local time. Degree is capped at 11.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySegment {
    pub duration: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub yaw: Vec<f64>,
}

impl PolySegment {
    pub fn constant(p: Vector3<f64>, yaw: f64, duration: f64) -> Self {
        Self { duration, x: vec![p.x], y: vec![p.y], z: vec![p.z], yaw: vec![yaw] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument("segment duration must be positive".into()));
        }
        for c in [&self.x, &self.y, &self.z, &self.yaw] {
            if c.is_empty() || c.len() > 12 {
                return Err(Error::InvalidArgument(
                    "segment polynomials need 1..=12 coefficients (degree <= 11)".into(),
                ));
            }
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { context: "polynomial coefficients" });
            }
        }
        Ok(())
    }
}

/// Horner evaluation of a polynomial and its first two derivatives.
fn eval_poly(coeffs: &[f64], t: f64) -> (f64, f64, f64) {
    let mut p = 0.0;
    let mut v = 0.0;
    let mut a = 0.0;
    for &c in coeffs.iter().rev() {
        a = a * t + 2.0 * v;
        v = v * t + p;
        p = p * t + c;
    }
    (p, v, a)
}

/// One sampled reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Piecewise-polynomial reference trajectory. Sampling beyond the span
/// clamps to the endpoints, holding position with zero derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<PolySegment>,
}

impl Trajectory {
    pub fn new(segments: Vec<PolySegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one segment".into()));
        }
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[PolySegment] {
        &self.segments
    }

    pub fn span(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn sample(&self, t: f64) -> RefSample {
        if t <= 0.0 {
            let (p, yaw) = self.endpoint(true);
            return RefSample { p, v: Vector3::zeros(), a: Vector3::zeros(), yaw, yaw_rate: 0.0 };
        }
        let mut local = t;
        for seg in &self.segments {
            if local <= seg.duration {
                let (px, vx, ax) = eval_poly(&seg.x, local);
                let (py, vy, ay) = eval_poly(&seg.y, local);
                let (pz, vz, az) = eval_poly(&seg.z, local);
                let (yaw, yaw_rate, _) = eval_poly(&seg.yaw, local);
                return RefSample {
                    p: Vector3::new(px, py, pz),
                    v: Vector3::new(vx, vy, vz),
                    a: Vector3::new(ax, ay, az),
                    yaw,
                    yaw_rate,
                };
            }
            local -= seg.duration;
        }
        let (p, yaw) = self.endpoint(false);
        RefSample { p, v: Vector3::zeros(), a: Vector3::zeros(), yaw, yaw_rate: 0.0 }
    }

    fn endpoint(&self, start: bool) -> (Vector3<f64>, f64) {
        let (seg, t) = if start {
            (&self.segments[0], 0.0)
        } else {
            let seg = self.segments.last().unwrap();
            (seg, seg.duration)
        };
        let (px, _, _) = eval_poly(&seg.x, t);
        let (py, _, _) = eval_poly(&seg.y, t);
        let (pz, _, _) = eval_poly(&seg.z, t);
        let (yaw, _, _) = eval_poly(&seg.yaw, t);
        (Vector3::new(px, py, pz), yaw)
    }

    /// Reference window on the prediction grid: `n + 1` samples spaced
    /// `dt_pred` starting at `t0`.
    pub fn window(&self, t0: f64, n: usize, dt_pred: f64, g: f64) -> ReferenceWindow {
        let samples =
            (0..=n).map(|k| self.sample(t0 + k as f64 * dt_pred)).collect::<Vec<_>>();
        ReferenceWindow::new(samples, g)
    }

    /// Constant hover setpoint.
    pub fn hover(p: Vector3<f64>, yaw: f64) -> Self {
        Self::new(vec![PolySegment::constant(p, yaw, 1.0)]).unwrap()
    }

    /// Position step from `p0` to `p1` at `t_step`, holding `p1` for `hold`
    /// seconds (and beyond, via endpoint clamping).
    pub fn step(p0: Vector3<f64>, p1: Vector3<f64>, t_step: f64, hold: f64) -> Result<Self> {
        if !(t_step > 0.0) || !(hold > 0.0) {
            return Err(Error::InvalidArgument("step times must be positive".into()));
        }
        Self::new(vec![
            PolySegment::constant(p0, 0.0, t_step),
            PolySegment::constant(p1, 0.0, hold),
        ])
    }

    /// Figure-eight (lemniscate-like) benchmark trajectory fit by two
    /// polynomial segments per period:
    /// `x = ax sin(w t)`, `y = ay sin(2 w t)` at constant altitude.
    ///
    /// Defaults (`ax = 3.2 m`, `ay = 1.1 m`, `period = 6 s`) give a peak
    /// speed of about 4 m/s and peak acceleration around 0.5 g.
    pub fn figure_eight(
        center: Vector3<f64>,
        ax: f64,
        ay: f64,
        period: f64,
        laps: usize,
    ) -> Result<Self> {
        if !(period > 0.0) || laps == 0 {
            return Err(Error::InvalidArgument("figure-eight needs period > 0 and laps > 0".into()));
        }
        let w = 2.0 * std::f64::consts::PI / period;
        let half = period / 2.0;
        let mut segments = Vec::new();
        for lap in 0..laps {
            for half_idx in 0..2 {
                let t_off = lap as f64 * period + half_idx as f64 * half;
                let fit = |f: &dyn Fn(f64) -> f64| fit_poly(f, t_off, half, 11);
                segments.push(PolySegment {
                    duration: half,
                    x: fit(&|t| center.x + ax * (w * t).sin()),
                    y: fit(&|t| center.y + ay * (2.0 * w * t).sin()),
                    z: vec![center.z],
                    yaw: vec![0.0],
                });
            }
        }
        Self::new(segments)
    }
}

/// Least-squares polynomial fit of `f` on `[t0, t0 + duration]`, returned in
/// segment-local time. Fitting happens on normalized time for conditioning.
fn fit_poly(f: &dyn Fn(f64) -> f64, t0: f64, duration: f64, degree: usize) -> Vec<f64> {
    let m = 4 * (degree + 1);
    let mut vander = DMatrix::<f64>::zeros(m, degree + 1);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..m {
        let s = i as f64 / (m - 1) as f64; // normalized in [0, 1]
        let mut pow = 1.0;
        for j in 0..=degree {
            vander[(i, j)] = pow;
            pow *= s;
        }
        rhs[i] = f(t0 + s * duration);
    }
    let coeffs_norm = vander
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("polynomial fit is a well-posed least-squares problem");
    // Rescale from normalized time back to seconds.
    let mut coeffs = Vec::with_capacity(degree + 1);
    let mut scale = 1.0;
    for j in 0..=degree {
        coeffs.push(coeffs_norm[j] * scale);
        scale /= duration;
    }
    coeffs
}
