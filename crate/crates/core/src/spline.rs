//! Natural cubic spline interpolation for complex-valued samples.
//!
//! Real and imaginary parts are interpolated separately (the spec of the
//! fidelity traces); the coefficients are stored jointly as complex
//! polynomials per interval.

use ndarray_linalg::c64;

use crate::error::{Error, Result};

/// Piecewise-cubic interpolant through complex samples at ascending knots.
///
/// On `[t_k, t_{k+1}]`: `S(t) = a + b*dx + c*dx^2 + d*dx^3`, `dx = t - t_k`.
/// Natural boundary conditions (`S'' = 0` at both ends), C2-continuous.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    /// `[a, b, c, d]` per interval; `coeffs.len() == knots.len() - 1`.
    coeffs: Vec<[c64; 4]>,
}

impl CubicSpline {
    /// Natural cubic spline through `(knots[i], values[i])`.
    pub fn natural(knots: &[f64], values: &[c64]) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} knots but {} values",
                n,
                values.len()
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "cubic spline needs at least 3 points, got {n}"
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(
                    "spline knots must be strictly increasing".into(),
                ));
            }
        }

        // Solve for second derivatives m_i with natural ends (m_0 = m_{n-1} = 0)
        // via the standard tridiagonal system on interior nodes.
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let m = second_derivatives(&h, values);

        let mut coeffs = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let hk = h[k];
            let a = values[k];
            let c = m[k] * 0.5;
            let d = (m[k + 1] - m[k]) / (6.0 * hk);
            let b = (values[k + 1] - values[k]) / hk - (m[k + 1] + m[k] * 2.0) * (hk / 6.0);
            coeffs.push([a, b, c, d]);
        }
        Ok(Self {
            knots: knots.to_vec(),
            coeffs,
        })
    }

    /// Evaluate at `t`. Outside the knot range the boundary polynomial is
    /// extrapolated.
    pub fn eval(&self, t: f64) -> c64 {
        let k = self.interval(t);
        let dx = t - self.knots[k];
        let [a, b, c, d] = self.coeffs[k];
        ((d * dx + c) * dx + b) * dx + a
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return 0;
        }
        if t >= self.knots[n - 1] {
            return n - 2;
        }
        // partition_point: first knot > t, minus one
        let idx = self.knots.partition_point(|&k| k <= t);
        idx - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `[a, b, c, d]` coefficients per interval, in knot order.
    pub fn coefficients(&self) -> &[[c64; 4]] {
        &self.coeffs
    }

    /// Rebuild from previously exported knots and coefficients.
    pub fn from_raw_parts(knots: Vec<f64>, coeffs: Vec<[c64; 4]>) -> Result<Self> {
        if knots.len() < 2 || coeffs.len() + 1 != knots.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} knots with {} coefficient rows",
                knots.len(),
                coeffs.len()
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(
                    "spline knots must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { knots, coeffs })
    }

    pub fn t_min(&self) -> f64 {
        self.knots[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.knots.last().expect("spline has knots")
    }
}

/// Natural-spline second derivatives by the Thomas algorithm.
fn second_derivatives(h: &[f64], values: &[c64]) -> Vec<c64> {
    let n = values.len();
    let mut m = vec![c64::new(0.0, 0.0); n];
    if n == 3 {
        // single interior equation
        let rhs = ((values[2] - values[1]) / h[1] - (values[1] - values[0]) / h[0]) * 6.0;
        m[1] = rhs / (2.0 * (h[0] + h[1]));
        return m;
    }
    let interior = n - 2;
    let mut diag = vec![0.0; interior];
    let mut rhs = vec![c64::new(0.0, 0.0); interior];
    for i in 0..interior {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = ((values[i + 2] - values[i + 1]) / h[i + 1]
            - (values[i + 1] - values[i]) / h[i])
            * 6.0;
    }
    // forward sweep (sub/super diagonals are h[1..n-2])
    let mut c_prime = vec![0.0; interior];
    c_prime[0] = h[1] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..interior {
        let denom = diag[i] - h[i] * c_prime[i - 1];
        if i < interior - 1 {
            c_prime[i] = h[i + 1] / denom;
        }
        rhs[i] = (rhs[i] - rhs[i - 1] * h[i]) / denom;
    }
    for i in (0..interior - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * c_prime[i];
    }
    m[1..=interior].copy_from_slice(&rhs);
    m
}
