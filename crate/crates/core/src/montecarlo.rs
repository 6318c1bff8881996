//! Reproducible Monte Carlo ensemble averaging.
//!
//! Realization `i` draws from ChaCha stream `(base_seed, i)` in the fixed
//! order H0, Veff, V', then the initial state, so results are independent
//! of worker scheduling. Aggregation reduces in realization-index order
//! with compensated summation, making outputs bit-identical for any
//! worker count.

use ndarray_linalg::c64;
use rayon::prelude::*;

use crate::echo::fidelity_amplitude;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lindblad::{
    propagate_coherence, sample_vprime, DissipatorSpec, PropagationSettings,
};
use crate::rmt::{build_h_lambda, normalize_center_spacing, EnsembleKind, EnsembleSampler, EnsembleSpec};
use crate::state::{DensityMatrix, InitialState};
use crate::trace::CoherenceTrace;

/// Stream reserved for a Veff frozen across realizations.
const FROZEN_VEFF_STREAM: u64 = u64::MAX;
/// Stream reserved for a V' fixed across realizations.
const FIXED_VPRIME_STREAM: u64 = u64::MAX - 1;

/// How one realization is propagated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagation {
    /// Exact eigendecomposition propagation; valid only at `Gamma = 0`.
    ExactEcho,
    /// Strang-split master equation stepping.
    Strang(PropagationSettings),
}

/// Physics of one ensemble run (everything except count/seed/workers).
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: EnsembleKind,
    pub dimension: usize,
    pub lambda: f64,
    pub gamma_rate: f64,
    pub vprime_kind: EnsembleKind,
    /// Resample V' per realization (default); otherwise one fixed draw.
    pub resample_vprime: bool,
    /// Freeze Veff across realizations (variance studies).
    pub freeze_veff: bool,
    pub initial_state: InitialState,
    pub grid: TimeGrid,
    pub propagation: Propagation,
}

impl Scenario {
    /// `Gamma = 0` baseline via exact echo propagation.
    pub fn baseline(kind: EnsembleKind, dimension: usize, lambda: f64, grid: TimeGrid) -> Self {
        Self {
            kind,
            dimension,
            lambda,
            gamma_rate: 0.0,
            vprime_kind: EnsembleKind::Gue,
            resample_vprime: true,
            freeze_veff: false,
            initial_state: InitialState::MaximallyMixed,
            grid,
            propagation: Propagation::ExactEcho,
        }
    }

    /// Damped run with the given integrator settings.
    pub fn damped(
        kind: EnsembleKind,
        dimension: usize,
        lambda: f64,
        gamma_rate: f64,
        grid: TimeGrid,
        settings: PropagationSettings,
    ) -> Self {
        Self {
            kind,
            dimension,
            lambda,
            gamma_rate,
            vprime_kind: EnsembleKind::Gue,
            resample_vprime: true,
            freeze_veff: false,
            initial_state: InitialState::MaximallyMixed,
            grid,
            propagation: Propagation::Strang(settings),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be >= 2, got {}",
                self.dimension
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        if !(self.gamma_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma_rate
            )));
        }
        if matches!(self.propagation, Propagation::ExactEcho) && self.gamma_rate != 0.0 {
            return Err(Error::InvalidParameter(
                "exact echo propagation is only valid at Gamma = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Full run description: scenario, count, base seed, concurrency budget.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub scenario: Scenario,
    pub n_run: usize,
    pub base_seed: u64,
    /// 0 = rayon default.
    pub workers: usize,
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_run == 0 {
            return Err(Error::InvalidParameter("n_run must be >= 1".into()));
        }
        self.scenario.validate()
    }
}

/// One realization: sample, build the pair, propagate.
pub fn run_realization(plan: &RunPlan, index: usize) -> Result<CoherenceTrace> {
    let sc = &plan.scenario;
    let spec = EnsembleSpec::new(sc.kind, sc.dimension, plan.base_seed)?;
    let mut sampler = EnsembleSampler::for_stream(spec, index as u64);

    // Fixed draw order; frozen variants replace the drawn matrix without
    // shifting the stream, so other matrices are unaffected by the flags.
    let h0_raw = sampler.sample(1.0)?;
    let veff_drawn = sampler.sample(1.0)?;
    let vprime_drawn = sample_vprime(&mut sampler, sc.vprime_kind)?;

    let veff = if sc.freeze_veff {
        EnsembleSampler::for_stream(spec, FROZEN_VEFF_STREAM).sample(1.0)?
    } else {
        veff_drawn
    };
    let vprime = if sc.resample_vprime {
        vprime_drawn
    } else {
        let mut frozen = EnsembleSampler::for_stream(spec, FIXED_VPRIME_STREAM);
        sample_vprime(&mut frozen, sc.vprime_kind)?
    };

    let h0 = normalize_center_spacing(&h0_raw, sc.kind);
    let pair = build_h_lambda(h0, veff, sc.lambda)?;
    let rho = match sc.initial_state {
        InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(sc.dimension),
        InitialState::RandomPure => DensityMatrix::random_pure(&mut sampler, sc.dimension),
    };

    match sc.propagation {
        Propagation::ExactEcho => fidelity_amplitude(&pair, &rho, &sc.grid),
        Propagation::Strang(settings) => {
            let diss = DissipatorSpec::new(sc.gamma_rate, vprime)?;
            propagate_coherence(&pair, &diss, &rho, &sc.grid, &settings)
        }
    }
}

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Pointwise mean and standard error over equal-grid traces.
///
/// `stderr = sample standard deviation / sqrt(n)` separately for the real
/// and imaginary parts; a single trace reports zero error by convention.
pub fn aggregate_traces(traces: &[CoherenceTrace]) -> Result<CoherenceTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot aggregate zero traces".into()))?;
    let n_pts = first.len();
    for tr in traces {
        if tr.grid.points() != first.grid.points() {
            return Err(Error::DimensionMismatch(
                "aggregated traces must share one grid".into(),
            ));
        }
    }
    let n = traces.len();
    let mut mean = Vec::with_capacity(n_pts);
    for k in 0..n_pts {
        let mut re = KahanSum::default();
        let mut im = KahanSum::default();
        for tr in traces {
            re.add(tr.values[k].re);
            im.add(tr.values[k].im);
        }
        mean.push(c64::new(re.value() / n as f64, im.value() / n as f64));
    }
    let mut stderr_re = vec![0.0; n_pts];
    let mut stderr_im = vec![0.0; n_pts];
    if n > 1 {
        let denom = ((n - 1) as f64 * n as f64).sqrt();
        for k in 0..n_pts {
            let mut sq_re = KahanSum::default();
            let mut sq_im = KahanSum::default();
            for tr in traces {
                sq_re.add((tr.values[k].re - mean[k].re).powi(2));
                sq_im.add((tr.values[k].im - mean[k].im).powi(2));
            }
            stderr_re[k] = sq_re.value().sqrt() / denom;
            stderr_im[k] = sq_im.value().sqrt() / denom;
        }
    }
    let mut meta = first.meta.clone();
    meta.n_run = n;
    CoherenceTrace::with_stderr(first.grid.clone(), mean, stderr_re, stderr_im, meta)
}

/// Ensemble mean over `plan.n_run` realizations.
///
/// Realizations run concurrently; the reduction is keyed by realization
/// index, so the result does not depend on the worker count.
pub fn run_ensemble(plan: &RunPlan) -> Result<CoherenceTrace> {
    plan.validate()?;
    let indices: Vec<usize> = (0..plan.n_run).collect();
    let run_all = || -> Result<Vec<CoherenceTrace>> {
        indices
            .par_iter()
            .map(|&i| {
                run_realization(plan, i).map_err(|e| Error::Realization {
                    index: i,
                    seed: plan.base_seed,
                    stream: i as u64,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let traces = if plan.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool construction failed: {e}")))?;
        pool.install(run_all)?
    } else {
        run_all()?
    };

    let mut out = aggregate_traces(&traces)?;
    out.meta.base_seed = Some(plan.base_seed);
    out.meta.vprime = Some(plan.scenario.vprime_kind.as_str().into());
    out.meta.initial_state = Some(plan.scenario.initial_state.as_str().into());
    if let Propagation::Strang(settings) = plan.scenario.propagation {
        out.meta.dt = Some(settings.dt);
        out.meta.integrator = Some(settings.substep.as_str().into());
    } else {
        out.meta.kind = "fidelity".into();
    }
    Ok(out)
}

/// Map [`run_ensemble`] over plans, preserving order.
pub fn run_scenario_sweep(plans: &[RunPlan]) -> Result<Vec<CoherenceTrace>> {
    plans.iter().map(run_ensemble).collect()
}
