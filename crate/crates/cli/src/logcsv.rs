//! Parser for the trajectory log CSV written by the simulator, so metrics
//! can be recomputed from files without re-running a scenario.

use mpcbench_core::dynamics::{AttitudeThrustCommand, MavState};
use mpcbench_core::error::{Error, Result};
use mpcbench_core::sim::LogRow;
use nalgebra::Vector3;

const COLUMNS: usize = 28;

pub fn parse_log_csv(csv: &str) -> Result<Vec<LogRow>> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Metrics("empty log file".into()))?;
    if !header.starts_with("t,px,py,pz") {
        return Err(Error::Metrics("unrecognized log header".into()));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(Error::Metrics(format!(
                "line {}: expected {COLUMNS} columns, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Metrics(format!("line {}: {e}", lineno + 2)))
        };
        rows.push(LogRow {
            t: num(0)?,
            x: MavState {
                p: Vector3::new(num(1)?, num(2)?, num(3)?),
                v: Vector3::new(num(4)?, num(5)?, num(6)?),
                phi: num(7)?,
                theta: num(8)?,
                psi: num(9)?,
            },
            p_ref: Vector3::new(num(10)?, num(11)?, num(12)?),
            v_ref: Vector3::new(num(13)?, num(14)?, num(15)?),
            command: AttitudeThrustCommand {
                phi_cmd: num(16)?,
                theta_cmd: num(17)?,
                psi_rate_cmd: num(18)?,
                thrust_cmd: num(19)?,
            },
            f_wind: Vector3::new(num(20)?, num(21)?, num(22)?),
            f_est: Vector3::new(num(23)?, num(24)?, num(25)?),
            qp_iterations: num(26)? as usize,
            fault: num(27)? != 0.0,
        });
    }
    Ok(rows)
}
