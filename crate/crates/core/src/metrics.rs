//! Tracking and timing metrics computed from a simulation log.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::LogRow;

/// Position tracking errors, reported in centimeters.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingMetrics {
    pub rmse_x_cm: f64,
    pub rmse_y_cm: f64,
    pub rmse_z_cm: f64,
    pub rmse_total_cm: f64,
    pub max_error_cm: f64,
    /// Seconds of initial transient excluded from the averages.
    pub skip_transient_s: f64,
}

/// Step-response shape metrics along the dominant step axis.
#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    /// 10% to 90% rise time [s].
    pub rise_time_s: f64,
    /// Peak excursion beyond the target, in percent of the step amplitude.
    pub overshoot_pct: f64,
    pub step_amplitude_m: f64,
    pub step_time_s: f64,
}

/// Wall-clock controller timing statistics [ms].
#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub mean_ms: f64,
    pub max_ms: f64,
    pub ticks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub controller: String,
    pub tracking: TrackingMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<StepMetrics>,
    pub solve: SolveStats,
    pub faults: usize,
}

/// RMS position errors over the log, skipping the first `skip_transient_s`
/// seconds.
pub fn tracking_metrics(rows: &[LogRow], skip_transient_s: f64) -> Result<TrackingMetrics> {
    let t0 = rows.first().ok_or(Error::Metrics("empty log".into()))?.t;
    let used: Vec<&LogRow> = rows.iter().filter(|r| r.t - t0 >= skip_transient_s).collect();
    if used.is_empty() {
        return Err(Error::Metrics("transient skip leaves no samples".into()));
    }
    let n = used.len() as f64;
    let mut sq = [0.0; 3];
    let mut max_err: f64 = 0.0;
    for r in &used {
        let e = r.x.p - r.p_ref;
        for i in 0..3 {
            sq[i] += e[i] * e[i];
        }
        max_err = max_err.max(e.norm());
    }
    let rmse = |s: f64| (s / n).sqrt() * 100.0;
    Ok(TrackingMetrics {
        rmse_x_cm: rmse(sq[0]),
        rmse_y_cm: rmse(sq[1]),
        rmse_z_cm: rmse(sq[2]),
        rmse_total_cm: rmse(sq[0] + sq[1] + sq[2]),
        max_error_cm: max_err * 100.0,
        skip_transient_s,
    })
}

/// Locate a reference step in the log and measure the response along the
/// step axis. Errors if the reference contains no position step.
pub fn step_metrics(rows: &[LogRow]) -> Result<StepMetrics> {
    if rows.len() < 3 {
        return Err(Error::Metrics("log too short for step analysis".into()));
    }
    // Find the largest instantaneous reference jump.
    let mut step_idx = 0;
    let mut jump = nalgebra::Vector3::zeros();
    for i in 1..rows.len() {
        let d = rows[i].p_ref - rows[i - 1].p_ref;
        if d.norm() > jump.norm() {
            jump = d;
            step_idx = i;
        }
    }
    let amplitude = jump.norm();
    if amplitude < 1e-6 {
        return Err(Error::Metrics("reference contains no position step".into()));
    }
    let axis = jump / amplitude;
    let origin = rows[step_idx - 1].p_ref;
    let project = |r: &LogRow| (r.x.p - origin).dot(&axis);

    let mut t10 = None;
    let mut t90 = None;
    let mut peak = f64::NEG_INFINITY;
    for r in &rows[step_idx..] {
        let s = project(r);
        peak = peak.max(s);
        if t10.is_none() && s >= 0.1 * amplitude {
            t10 = Some(r.t);
        }
        if t90.is_none() && s >= 0.9 * amplitude {
            t90 = Some(r.t);
        }
    }
    let (t10, t90) = match (t10, t90) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Metrics("response never reached 90% of the step".into())),
    };
    Ok(StepMetrics {
        rise_time_s: t90 - t10,
        overshoot_pct: ((peak - amplitude) / amplitude).max(0.0) * 100.0,
        step_amplitude_m: amplitude,
        step_time_s: rows[step_idx].t,
    })
}

/// Statistics over per-tick solve times given in seconds, reported in
/// milliseconds.
pub fn solve_stats(times: &[f64]) -> SolveStats {
    if times.is_empty() {
        return SolveStats { mean_ms: 0.0, max_ms: 0.0, ticks: 0 };
    }
    SolveStats {
        mean_ms: times.iter().sum::<f64>() / times.len() as f64 * 1e3,
        max_ms: times.iter().copied().fold(0.0, f64::max) * 1e3,
        ticks: times.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AttitudeThrustCommand, MavState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector3;

    fn row(t: f64, p: Vector3<f64>, p_ref: Vector3<f64>) -> LogRow {
        LogRow {
            t,
            x: MavState { p, v: Vector3::zeros(), phi: 0.0, theta: 0.0, psi: 0.0 },
            p_ref,
            v_ref: Vector3::zeros(),
            command: AttitudeThrustCommand::hover(9.81),
            f_wind: Vector3::zeros(),
            f_est: Vector3::zeros(),
            qp_iterations: 0,
            fault: false,
        }
    }

    #[test]
    fn perfect_tracking_gives_zero_errors() {
        let rows: Vec<LogRow> = (0..100)
            .map(|i| {
                let p = Vector3::new(i as f64 * 0.01, 0.0, 1.0);
                row(i as f64 * 0.01, p, p)
            })
            .collect();
        let m = tracking_metrics(&rows, 0.0).unwrap();
        assert_abs_diff_eq!(m.rmse_total_cm, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.max_error_cm, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_offset_rmse_equals_the_offset() {
        let rows: Vec<LogRow> = (0..100)
            .map(|i| {
                let p_ref = Vector3::new(0.0, 0.0, 1.0);
                row(i as f64 * 0.01, p_ref + Vector3::new(0.03, 0.0, 0.04), p_ref)
            })
            .collect();
        let m = tracking_metrics(&rows, 0.0).unwrap();
        assert_relative_eq!(m.rmse_x_cm, 3.0, max_relative = 1e-12);
        assert_relative_eq!(m.rmse_z_cm, 4.0, max_relative = 1e-12);
        assert_relative_eq!(m.rmse_total_cm, 5.0, max_relative = 1e-12);
        assert_relative_eq!(m.max_error_cm, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn transient_skip_removes_early_samples() {
        let mut rows = Vec::new();
        // 1 s of large error, then perfect tracking.
        for i in 0..200 {
            let t = i as f64 * 0.01;
            let p_ref = Vector3::new(0.0, 0.0, 1.0);
            let p = if t < 1.0 { p_ref + Vector3::new(1.0, 0.0, 0.0) } else { p_ref };
            rows.push(row(t, p, p_ref));
        }
        let m = tracking_metrics(&rows, 1.0).unwrap();
        assert_abs_diff_eq!(m.rmse_total_cm, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn first_order_step_rise_time_is_tau_ln_nine() {
        // Response 1 - exp(-t / tau): t90 - t10 = tau * ln(81/9... ) = tau*ln 9.
        let tau = 0.4;
        let amp = 2.0;
        let t_step = 0.5;
        let rows: Vec<LogRow> = (0..1000)
            .map(|i| {
                let t = i as f64 * 0.005;
                let p_ref = if t < t_step {
                    Vector3::zeros()
                } else {
                    Vector3::new(amp, 0.0, 0.0)
                };
                let s = if t < t_step { 0.0 } else { amp * (1.0 - (-(t - t_step) / tau).exp()) };
                row(t, Vector3::new(s, 0.0, 0.0), p_ref)
            })
            .collect();
        let m = step_metrics(&rows).unwrap();
        assert_abs_diff_eq!(m.rise_time_s, tau * 9.0_f64.ln(), epsilon = 0.02);
        assert_abs_diff_eq!(m.overshoot_pct, 0.0, epsilon = 1e-9);
        assert_relative_eq!(m.step_amplitude_m, amp, max_relative = 1e-12);
    }

    #[test]
    fn overshoot_is_measured_beyond_the_target() {
        let amp = 1.0;
        let rows: Vec<LogRow> = (0..400)
            .map(|i| {
                let t = i as f64 * 0.01;
                let p_ref = if t < 0.1 { Vector3::zeros() } else { Vector3::new(amp, 0.0, 0.0) };
                // Damped oscillation peaking at 1.2.
                let s = if t < 0.1 {
                    0.0
                } else {
                    let tt = t - 0.1;
                    amp * (1.0 - (-3.0 * tt).exp() * (6.0 * tt).cos())
                };
                row(t, Vector3::new(s, 0.0, 0.0), p_ref)
            })
            .collect();
        let m = step_metrics(&rows).unwrap();
        assert!(m.overshoot_pct > 5.0 && m.overshoot_pct < 40.0, "{}", m.overshoot_pct);
    }

    #[test]
    fn step_metrics_reject_steady_references() {
        let rows: Vec<LogRow> = (0..50)
            .map(|i| row(i as f64 * 0.01, Vector3::zeros(), Vector3::zeros()))
            .collect();
        assert!(matches!(step_metrics(&rows), Err(Error::Metrics(_))));
    }

    #[test]
    fn solve_stats_mean_and_max() {
        let s = solve_stats(&[1e-3, 2e-3, 3e-3]);
        assert_relative_eq!(s.mean_ms, 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.max_ms, 3.0, max_relative = 1e-12);
        assert_eq!(s.ticks, 3);
    }
}
