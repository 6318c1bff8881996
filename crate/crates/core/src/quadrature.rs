//! Adaptive composite Simpson quadrature.

use ndarray_linalg::c64;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

/// Adaptive Simpson integral of a real integrand with absolute tolerance.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let g = |x: f64| c64::new(f(x), 0.0);
    adaptive_simpson_complex(g, a, b, abs_tol).map(|z| z.re)
}

/// Adaptive Simpson integral of a complex integrand with absolute tolerance
/// (applied to the complex modulus of the error estimate).
pub fn adaptive_simpson_complex<F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<c64>
where
    F: Fn(f64) -> c64,
{
    if !(abs_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadrature tolerance must be positive, got {abs_tol}"
        )));
    }
    if a == b {
        return Ok(c64::new(0.0, 0.0));
    }
    if !(b > a) {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must satisfy a <= b, got [{a}, {b}]"
        )));
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(&f, a, b, fa, fm, fb, whole, abs_tol, 0)
}

fn simpson(fa: c64, fm: c64, fb: c64, h: f64) -> c64 {
    (fa + fm * 4.0 + fb) * (h / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: c64,
    fm: c64,
    fb: c64,
    whole: c64,
    tol: f64,
    depth: u32,
) -> Result<c64>
where
    F: Fn(f64) -> c64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.norm() <= 15.0 * tol || (b - a) < 1e-14 {
        // Richardson extrapolation of the composite estimate.
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numerical(format!(
            "adaptive Simpson did not converge on [{a:.6e}, {b:.6e}] \
             (residual {:.3e}, tolerance {tol:.3e}, depth {depth})",
            delta.norm()
        )));
    }
    let half_tol = 0.5 * tol;
    let l = recurse(f, a, m, fa, flm, fm, left, half_tol, depth + 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, half_tol, depth + 1)?;
    Ok(l + r)
}
