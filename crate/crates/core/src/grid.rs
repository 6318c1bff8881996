//! Time grids in units of `hbar/d0` (Heisenberg time `2*pi`).

use crate::error::{Error, Result};

/// Heisenberg time `2*pi*hbar/d0` in the crate's units (`hbar = d0 = 1`).
pub const HEISENBERG_TIME: f64 = std::f64::consts::TAU;

/// Strictly increasing time grid starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    step_hint: f64,
}

impl TimeGrid {
    /// Uniform grid `0, dt_out, ..., t_max` (last point within one part in
    /// 1e9 of `t_max` is kept).
    pub fn uniform(t_max: f64, dt_out: f64) -> Result<Self> {
        if !(t_max > 0.0) || !(dt_out > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uniform grid needs t_max > 0 and dt_out > 0, got {t_max}, {dt_out}"
            )));
        }
        let n = (t_max / dt_out + 1e-9).floor() as usize;
        if n == 0 {
            return Err(Error::InvalidParameter(
                "uniform grid would contain only t = 0".into(),
            ));
        }
        let points = (0..=n).map(|k| k as f64 * dt_out).collect();
        Ok(Self {
            points,
            step_hint: dt_out,
        })
    }

    /// Grid from explicit points; must start at 0 and increase strictly.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty time grid".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time grid must start at 0, got {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "time grid must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let step_hint = if points.len() > 1 {
            points[1] - points[0]
        } else {
            0.0
        };
        Ok(Self { points, step_hint })
    }

    /// Default grid `t in [0, 30]` with step 0.1 (covers the fit window
    /// `0 < t < 15` twice over).
    pub fn default_grid() -> Self {
        Self::uniform(30.0, 0.1).expect("default grid parameters are valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step_hint(&self) -> f64 {
        self.step_hint
    }

    pub fn t_max(&self) -> f64 {
        *self.points.last().expect("grid is non-empty")
    }
}
