//! Closed-form and semi-analytic predictions: the linear-response
//! convolution, its perturbative closed form `g_alpha`, the exponentiated
//! linear response with the two-point form factor, and the
//! pre-self-averaged matrix formula.

use ndarray_linalg::c64;

use crate::echo::{eval_overlap_sum, overlap_weights};
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, HEISENBERG_TIME};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_complex};
use crate::rmt::{dagger, EnsembleKind, HamiltonianPair};
use crate::spline::CubicSpline;
use crate::state::DensityMatrix;
use crate::trace::CoherenceTrace;

/// Which prediction a [`TheoryCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryKind {
    LrConvolution,
    PerturbativeG,
    Elr,
    FullMatrixLr,
}

impl TheoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TheoryKind::LrConvolution => "lr_convolution",
            TheoryKind::PerturbativeG => "perturbative_g",
            TheoryKind::Elr => "elr",
            TheoryKind::FullMatrixLr => "full_matrix_lr",
        }
    }
}

/// Theory prediction on a time grid; `values[0] = 1`.
#[derive(Debug, Clone)]
pub struct TheoryCurve {
    pub grid: TimeGrid,
    pub values: Vec<c64>,
    pub kind: TheoryKind,
}

impl TheoryCurve {
    fn new(grid: TimeGrid, values: Vec<c64>, kind: TheoryKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        let defect = (values[0] - c64::new(1.0, 0.0)).norm();
        if defect > 1e-9 {
            return Err(Error::Validation(format!(
                "theory curve must start at 1, got deviation {defect:.3e}"
            )));
        }
        Ok(Self { grid, values, kind })
    }
}

/// Two-point spectral form factor `b_2(tau)` in Heisenberg-time units.
pub fn form_factor_b2(tau: f64, kind: EnsembleKind) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "form factor argument must be >= 0, got {tau}"
        )));
    }
    Ok(match kind {
        EnsembleKind::Goe => {
            if tau <= 1.0 {
                1.0 - 2.0 * tau + tau * (1.0 + 2.0 * tau).ln()
            } else {
                -1.0 + tau * ((2.0 * tau + 1.0) / (2.0 * tau - 1.0)).ln()
            }
        }
        EnsembleKind::Gue => {
            if tau <= 1.0 {
                1.0 - tau
            } else {
                0.0
            }
        }
    })
}

/// `C(t) = t^2 + pi t - 4 pi^2 \int_0^{t/2pi} dt' \int_0^{t'} dt'' b_2(t'')`
/// for the GOE, time in units with `t_H = 2 pi`. Both integrals are
/// evaluated adaptively; the composite absolute tolerance is 1e-10.
pub fn elr_exponent(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ELR exponent time must be >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let tau_max = t / HEISENBERG_TIME;
    let inner = |tau: f64| -> f64 {
        // B(tau) = int_0^tau b2; split at the branch point
        let b2 = |x: f64| form_factor_b2(x, EnsembleKind::Goe).expect("tau >= 0");
        let val = if tau <= 1.0 {
            adaptive_simpson(b2, 0.0, tau, 1e-13)
        } else {
            adaptive_simpson(b2, 0.0, 1.0, 1e-13)
                .and_then(|a| adaptive_simpson(b2, 1.0, tau, 1e-13).map(|b| a + b))
        };
        val.expect("b2 is smooth on [0, tau]")
    };
    let outer_tol = 1e-10 / (4.0 * std::f64::consts::PI.powi(2));
    let double = if tau_max <= 1.0 {
        adaptive_simpson(inner, 0.0, tau_max, outer_tol)?
    } else {
        adaptive_simpson(inner, 0.0, 1.0, 0.5 * outer_tol)?
            + adaptive_simpson(inner, 1.0, tau_max, 0.5 * outer_tol)?
    };
    Ok(t * t + std::f64::consts::PI * t - 4.0 * std::f64::consts::PI.powi(2) * double)
}

/// Exponentiated linear response `f(t) = exp(-lambda^2 C(t))` (GOE).
pub fn elr_fidelity(lambda: f64, grid: &TimeGrid, kind: EnsembleKind) -> Result<TheoryCurve> {
    if kind != EnsembleKind::Goe {
        return Err(Error::InvalidParameter(
            "ELR fidelity is implemented for the GOE (beta = 1) only".into(),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let values: Result<Vec<c64>> = grid
        .points()
        .iter()
        .map(|&t| elr_exponent(t).map(|c| c64::new((-lambda * lambda * c).exp(), 0.0)))
        .collect();
    TheoryCurve::new(grid.clone(), values?, TheoryKind::Elr)
}

/// Perturbative-regime closed form
/// `g_alpha(x) = (1 - alpha x) e^{-x^2}
///             + alpha sqrt(pi/2) e^{-x^2/2} erf(x/sqrt(2))`.
pub fn perturbative_g(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "perturbative_g needs alpha >= 0 and x >= 0, got alpha={alpha}, x={x}"
        )));
    }
    let gauss = (-x * x).exp();
    let half = (-0.5 * x * x).exp();
    Ok((1.0 - alpha * x) * gauss
        + alpha * (std::f64::consts::PI / 2.0).sqrt() * half * libm::erf(x / std::f64::consts::SQRT_2))
}

/// Natural cubic spline through the real and imaginary parts of a trace.
pub fn fit_spline(trace: &CoherenceTrace) -> Result<CubicSpline> {
    if trace.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "spline fit needs at least 4 points, got {}",
            trace.len()
        )));
    }
    CubicSpline::natural(trace.grid.points(), &trace.values)
}

/// The damping-independent convolution kernel
/// `I(t) = \int_0^t f(tau) f(t - tau) dtau` on the grid points.
pub fn lr_convolution_kernel(f_base: &CubicSpline, grid: &TimeGrid) -> Result<Vec<c64>> {
    let t_max = grid.t_max();
    if t_max > f_base.t_max() + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "convolution grid extends to {t_max} but the base spline ends at {}",
            f_base.t_max()
        )));
    }
    grid.points()
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(c64::new(0.0, 0.0));
            }
            adaptive_simpson_complex(
                |tau| f_base.eval(tau) * f_base.eval(t - tau),
                0.0,
                t,
                1e-10,
            )
        })
        .collect()
}

/// Main-result convolution:
/// `f_{lambda,Gamma}(t) = (1 - Gamma t) f(t)
///                      + Gamma \int_0^t f(tau) f(t-tau) dtau`.
pub fn lr_convolution(
    f_base: &CubicSpline,
    gamma_rate: f64,
    grid: &TimeGrid,
) -> Result<TheoryCurve> {
    if !(gamma_rate >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay rate must be >= 0, got {gamma_rate}"
        )));
    }
    let f0 = f_base.eval(0.0);
    if (f0 - c64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Validation(format!(
            "base spline must interpolate f(0) = 1, got {f0}"
        )));
    }
    let kernel = lr_convolution_kernel(f_base, grid)?;
    let values: Vec<c64> = grid
        .points()
        .iter()
        .zip(kernel.iter())
        .map(|(&t, &conv)| f_base.eval(t) * (1.0 - gamma_rate * t) + conv * gamma_rate)
        .collect();
    TheoryCurve::new(grid.clone(), values, TheoryKind::LrConvolution)
}

/// Pre-self-averaged matrix formula from the echo-operator picture:
/// `f(t) = (1 - Gamma t) tr[rho M(t)]
///       + (Gamma/N) \int_0^t tr[rho M(tau)] tr[M(tau)^† M(t)] dtau`.
///
/// `tr[M(tau)^† M(t)] = tr[M(t - tau)]` in the spectral representation,
/// so the integrand reduces to two scalar functions of one variable that
/// are interpolated on the grid and convolved.
pub fn full_lr_matrix(
    pair: &HamiltonianPair,
    rho: &DensityMatrix,
    gamma_rate: f64,
    grid: &TimeGrid,
) -> Result<TheoryCurve> {
    if !(gamma_rate >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay rate must be >= 0, got {gamma_rate}"
        )));
    }
    if rho.dim() != pair.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rho dimension {} but pair dimension {}",
            rho.dim(),
            pair.dim()
        )));
    }
    let n = pair.dim();
    // p(t) = tr[rho M(t)]
    let w_rho = overlap_weights(pair, rho);
    let p_vals = eval_overlap_sum(&w_rho, pair, grid);
    // q(s) = tr[M(s)]: overlap weights |O_ab|^2
    let overlap = dagger(&pair.eig0.eigenvectors).dot(&pair.eig_lambda.eigenvectors);
    let w_trace = overlap.mapv(|z| c64::new(z.norm_sqr(), 0.0));
    let q_vals = eval_overlap_sum(&w_trace, pair, grid);

    let p_spline = CubicSpline::natural(grid.points(), &p_vals)?;
    let q_spline = CubicSpline::natural(grid.points(), &q_vals)?;

    let values: Result<Vec<c64>> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let leading = p_vals[k] * (1.0 - gamma_rate * t);
            if t == 0.0 || gamma_rate == 0.0 {
                return Ok(leading);
            }
            let integral = adaptive_simpson_complex(
                |tau| p_spline.eval(tau) * q_spline.eval(t - tau),
                0.0,
                t,
                1e-10,
            )?;
            Ok(leading + integral * (gamma_rate / n as f64))
        })
        .collect();
    TheoryCurve::new(grid.clone(), values?, TheoryKind::FullMatrixLr)
}
