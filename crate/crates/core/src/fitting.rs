//! Least-squares extraction of the effective damping rate and the
//! saturation law across scenarios.

use ndarray_linalg::c64;

use crate::error::{Error, Result};
use crate::spline::CubicSpline;
use crate::theory::lr_convolution_kernel;
use crate::trace::CoherenceTrace;

/// Fit window `(t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for FitWindow {
    /// `(0, 15]`, the region where the theory best matches at
    /// `lambda = 0.1`. For other couplings the window should scale with
    /// the decay time (`t_max ~ 1.5 / lambda`).
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 15.0,
        }
    }
}

impl FitWindow {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "fit window must satisfy t_min < t_max, got ({t_min}, {t_max}]"
            )));
        }
        Ok(Self { t_min, t_max })
    }
}

/// Residual definition used by [`fit_gamma`]. The coherence is complex;
/// the paper plots real quantities, so all three readings are provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitObjective {
    /// |sim - theory|^2 (real and imaginary parts both fitted).
    #[default]
    ComplexModulus,
    /// (Re sim - Re theory)^2.
    RealPart,
    /// (|sim| - |theory|)^2.
    AbsDifference,
}

impl std::str::FromStr for FitObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complex" | "complex_modulus" => Ok(FitObjective::ComplexModulus),
            "real" | "real_part" => Ok(FitObjective::RealPart),
            "abs" | "modulus" => Ok(FitObjective::AbsDifference),
            other => Err(Error::InvalidParameter(format!(
                "unknown fit objective '{other}'"
            ))),
        }
    }
}

/// Configuration for [`fit_gamma`].
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub window: FitWindow,
    pub objective: FitObjective,
    /// Upper end of the search bracket for the rate.
    pub gamma_max: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: FitWindow::default(),
            objective: FitObjective::default(),
            gamma_max: 1.0,
        }
    }
}

/// Fitted parameter with its diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// `Gamma_fit` or the saturation constant `b`.
    pub parameter: f64,
    /// Root-mean-square misfit over the window.
    pub residual: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Asymptotic (Gauss-Newton) standard error of the parameter.
    pub stderr_param: f64,
    pub iterations: usize,
}

const MAX_FIT_ITERATIONS: usize = 200;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Golden-section minimization on `[a, b]`; ties break toward the left
/// (smaller argument). Returns `(x_min, f_min, iterations)`.
fn golden_section_min<F: Fn(f64) -> f64>(
    f: &F,
    mut a: f64,
    mut b: f64,
    rel_tol: f64,
) -> Result<(f64, f64, usize)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let span = b - a;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 2;
    while (b - a) > rel_tol * span.max(f64::MIN_POSITIVE) {
        if iterations >= MAX_FIT_ITERATIONS {
            return Err(Error::Fit(format!(
                "golden-section search did not converge after {iterations} iterations \
                 (bracket [{a:.6e}, {b:.6e}], values {fc:.6e}/{fd:.6e})"
            )));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok((x, fx, iterations))
}

/// One parabolic refinement step through `(x-h, x, x+h)`, clamped to the
/// bracket; keeps the refined point only when it improves the objective.
fn parabolic_refine<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64, lo: f64, hi: f64) -> (f64, f64) {
    let xs = [x - h, x, x + h];
    let fs = [f(xs[0]), f(xs[1]), f(xs[2])];
    let denom = (xs[1] - xs[0]) * (fs[1] - fs[2]) - (xs[1] - xs[2]) * (fs[1] - fs[0]);
    if denom.abs() < 1e-300 {
        return (x, fs[1]);
    }
    let num = (xs[1] - xs[0]).powi(2) * (fs[1] - fs[2]) - (xs[1] - xs[2]).powi(2) * (fs[1] - fs[0]);
    let cand = (xs[1] - 0.5 * num / denom).clamp(lo, hi);
    let fcand = f(cand);
    if fcand < fs[1] || (fcand == fs[1] && cand < x) {
        (cand, fcand)
    } else {
        (x, fs[1])
    }
}

/// Extract `Gamma_fit` by least squares of the simulated trace against the
/// linear-response convolution built on `f_base`.
pub fn fit_gamma(
    sim: &CoherenceTrace,
    f_base: &CubicSpline,
    config: &FitConfig,
) -> Result<FitResult> {
    let FitWindow { t_min, t_max } = config.window;
    FitWindow::new(t_min, t_max)?;
    if !(config.gamma_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_max must be positive, got {}",
            config.gamma_max
        )));
    }

    let mut ts = Vec::new();
    let mut svals = Vec::new();
    for (k, &t) in sim.grid.points().iter().enumerate() {
        if t > t_min && t <= t_max + 1e-12 {
            ts.push(t);
            svals.push(sim.values[k]);
        }
    }
    let n = ts.len();
    if n < 2 {
        return Err(Error::Fit(format!(
            "window ({t_min}, {t_max}] selects {n} grid points; need at least 2"
        )));
    }
    if t_max > f_base.t_max() + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "fit window reaches {t_max} but the base spline ends at {}",
            f_base.t_max()
        )));
    }

    // Gamma-independent pieces: theory(Gamma) = (1 - Gamma t) f + Gamma I
    let window_grid = crate::grid::TimeGrid::from_points(
        std::iter::once(0.0).chain(ts.iter().cloned()).collect(),
    )?;
    let kernel = lr_convolution_kernel(f_base, &window_grid)?;
    let fvals: Vec<c64> = ts.iter().map(|&t| f_base.eval(t)).collect();
    let ivals = &kernel[1..];

    let objective = |gamma: f64| -> f64 {
        let mut rss = 0.0;
        for k in 0..n {
            let model = fvals[k] * (1.0 - gamma * ts[k]) + ivals[k] * gamma;
            rss += residual_sq(svals[k], model, config.objective);
        }
        rss
    };

    let (x0, _f0, iters) = golden_section_min(&objective, 0.0, config.gamma_max, GOLDEN_REL_TOL)?;
    let h = (config.gamma_max * GOLDEN_REL_TOL).max(1e-12);
    let (gamma_fit, rss) = parabolic_refine(
        &objective,
        x0.clamp(h, config.gamma_max - h),
        h,
        0.0,
        config.gamma_max,
    );

    // Gauss-Newton asymptotic standard error at the fitted rate.
    let mut jtj = 0.0;
    let mut m_res = 0usize;
    for k in 0..n {
        let j = ivals[k] - fvals[k] * ts[k]; // d model / d Gamma
        let model = fvals[k] * (1.0 - gamma_fit * ts[k]) + ivals[k] * gamma_fit;
        match config.objective {
            FitObjective::ComplexModulus => {
                jtj += j.norm_sqr();
                m_res = 2 * n;
            }
            FitObjective::RealPart => {
                jtj += j.re * j.re;
                m_res = n;
            }
            FitObjective::AbsDifference => {
                let mn = model.norm().max(1e-300);
                let dj = (model.conj() * j).re / mn;
                jtj += dj * dj;
                m_res = n;
            }
        }
    }
    let dof = m_res.saturating_sub(1).max(1) as f64;
    let stderr_param = if jtj > 0.0 {
        (rss / dof / jtj).sqrt()
    } else {
        f64::INFINITY
    };

    Ok(FitResult {
        parameter: gamma_fit,
        residual: (rss / n as f64).sqrt(),
        window: (t_min, t_max),
        n_points: n,
        stderr_param,
        iterations: iters,
    })
}

/// [`fit_gamma`] with the default window `(0, 15]` and complex objective.
pub fn fit_gamma_default(sim: &CoherenceTrace, f_base: &CubicSpline) -> Result<FitResult> {
    fit_gamma(sim, f_base, &FitConfig::default())
}

fn residual_sq(sim: c64, model: c64, objective: FitObjective) -> f64 {
    match objective {
        FitObjective::ComplexModulus => (sim - model).norm_sqr(),
        FitObjective::RealPart => (sim.re - model.re).powi(2),
        FitObjective::AbsDifference => (sim.norm() - model.norm()).powi(2),
    }
}

/// Fit the saturation law `g(alpha) = b alpha / (b + alpha)` to
/// `(alpha, Gamma_fit/lambda)` points by one-dimensional least squares
/// over `b` (searched on a log scale).
pub fn fit_saturation(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "saturation fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(a, _)| !(a >= 0.0)) {
        return Err(Error::InvalidParameter(
            "saturation fit requires alpha >= 0".into(),
        ));
    }
    if points.iter().all(|&(a, _)| a == 0.0) {
        return Err(Error::Fit(
            "degenerate saturation data: all alpha are zero".into(),
        ));
    }

    let rss_of_ln = |ln_b: f64| -> f64 {
        let b = ln_b.exp();
        points
            .iter()
            .map(|&(alpha, g)| {
                let model = b * alpha / (b + alpha);
                (g - model).powi(2)
            })
            .sum()
    };

    let (lo, hi) = ((1e-6f64).ln(), (1e9f64).ln());
    let (ln0, _f, iters) = golden_section_min(&rss_of_ln, lo, hi, GOLDEN_REL_TOL)?;
    let h = 1e-6;
    let (ln_fit, rss) = parabolic_refine(&rss_of_ln, ln0.clamp(lo + h, hi - h), h, lo, hi);
    let b = ln_fit.exp();

    let n = points.len();
    let jtj: f64 = points
        .iter()
        .map(|&(alpha, _)| (alpha * alpha / (b + alpha).powi(2)).powi(2))
        .sum();
    let stderr_param = if jtj > 0.0 {
        (rss / (n - 1).max(1) as f64 / jtj).sqrt()
    } else {
        f64::INFINITY
    };
    let alphas: Vec<f64> = points.iter().map(|p| p.0).collect();
    let window = (
        alphas.iter().cloned().fold(f64::INFINITY, f64::min),
        alphas.iter().cloned().fold(0.0, f64::max),
    );

    Ok(FitResult {
        parameter: b,
        residual: (rss / n as f64).sqrt(),
        window,
        n_points: n,
        stderr_param,
        iterations: iters,
    })
}
