//! Implementations of the CLI subcommands.

use anyhow::Context;
use serde::Serialize;

use nestenv_core::{
    c64, elr_fidelity, fit_gamma, fit_saturation, fit_spline, lr_convolution, run_ensemble,
    CoherenceTrace, CubicSpline, EnsembleKind, Propagation, RunPlan, Scenario,
    TimeGrid,
};

use crate::config::{load, Overrides, Resolved};
use crate::output::{gamma_tag, FitRow, OutputWriter, VERSION};

fn scenario(resolved: &Resolved, gamma: f64) -> Scenario {
    Scenario {
        kind: resolved.kind,
        dimension: resolved.dimension,
        lambda: resolved.lambda,
        gamma_rate: gamma,
        vprime_kind: resolved.vprime_kind,
        resample_vprime: resolved.resample_vprime,
        freeze_veff: resolved.freeze_veff,
        initial_state: resolved.initial_state,
        grid: resolved.grid.clone(),
        propagation: if gamma == 0.0 {
            Propagation::ExactEcho
        } else {
            Propagation::Strang(resolved.settings)
        },
    }
}

fn plan(resolved: &Resolved, gamma: f64) -> RunPlan {
    RunPlan {
        scenario: scenario(resolved, gamma),
        n_run: resolved.n_run,
        base_seed: resolved.base_seed,
        workers: resolved.workers,
    }
}

fn baseline_with_spline(resolved: &Resolved) -> anyhow::Result<(CoherenceTrace, CubicSpline)> {
    let trace = run_ensemble(&plan(resolved, 0.0))?;
    let spline = fit_spline(&trace)?;
    Ok((trace, spline))
}

/// `fidelity`: the Gamma = 0 ensemble trace and its spline cache.
pub fn cmd_fidelity(resolved: &Resolved) -> anyhow::Result<()> {
    let (trace, spline) = baseline_with_spline(resolved)?;
    let mut out = OutputWriter::create(&resolved.out_dir, &resolved.config, resolved.base_seed)?;
    out.write_trace("fidelity.csv", &trace)?;
    out.write_spline("fidelity_spline.json", &spline)?;
    out.finish("fidelity", &resolved.config)?;
    eprintln!(
        "fidelity: lambda={}, N_e={}, n_run={} -> {}",
        resolved.lambda,
        resolved.dimension,
        resolved.n_run,
        resolved.out_dir.display()
    );
    Ok(())
}

/// `simulate`: one damped trace CSV per configured rate.
pub fn cmd_simulate(resolved: &Resolved) -> anyhow::Result<()> {
    if resolved.gammas.is_empty() {
        anyhow::bail!("simulate needs a non-empty damping-rate list");
    }
    let mut out = OutputWriter::create(&resolved.out_dir, &resolved.config, resolved.base_seed)?;
    for &gamma in &resolved.gammas {
        let trace = run_ensemble(&plan(resolved, gamma))?;
        out.write_trace(&format!("sim_gamma_{}.csv", gamma_tag(gamma)), &trace)?;
        eprintln!("simulate: gamma={gamma} done");
    }
    out.finish("simulate", &resolved.config)?;
    Ok(())
}

/// `compare`: simulation vs Eq.-8 theory vs ELR, plus the fitted-rate table.
pub fn cmd_compare(resolved: &Resolved) -> anyhow::Result<Vec<FitRow>> {
    let (base, spline) = baseline_with_spline(resolved)?;
    let elr = elr_fidelity(resolved.lambda.abs(), &resolved.grid, EnsembleKind::Goe)
        .context("ELR reference (GOE) for the comparison")?;

    let mut out = OutputWriter::create(&resolved.out_dir, &resolved.config, resolved.base_seed)?;
    out.write_trace("fidelity.csv", &base)?;
    let elr_trace = CoherenceTrace::new(
        resolved.grid.clone(),
        elr.values.clone(),
        nestenv_core::TraceMeta {
            kind: "elr".into(),
            lambda: resolved.lambda,
            gamma: 0.0,
            dim: resolved.dimension,
            n_run: 0,
            ..Default::default()
        },
    )?;
    out.write_trace("elr.csv", &elr_trace)?;

    let mut rows = Vec::new();
    for &gamma in &resolved.gammas {
        if gamma == 0.0 {
            // theory at Gamma = 0 is the baseline itself
            out.write_compare(
                "compare_gamma_0.csv",
                resolved.grid.points(),
                &base,
                &base.values,
                &base.values,
                &elr.values,
                0.0,
                0.0,
            )?;
            continue;
        }
        let sim = run_ensemble(&plan(resolved, gamma))?;
        let theory = lr_convolution(&spline, gamma, &resolved.grid)?;
        let fit = fit_gamma(&sim, &spline, &resolved.fit)?;
        let fit_theory = lr_convolution(&spline, fit.parameter, &resolved.grid)?;
        out.write_compare(
            &format!("compare_gamma_{}.csv", gamma_tag(gamma)),
            resolved.grid.points(),
            &sim,
            &theory.values,
            &fit_theory.values,
            &elr.values,
            gamma,
            fit.parameter,
        )?;
        eprintln!(
            "compare: gamma={gamma} -> gamma_fit={:.6} (residual {:.3e})",
            fit.parameter, fit.residual
        );
        rows.push(FitRow {
            lambda: resolved.lambda,
            n_e: resolved.dimension,
            gamma_nominal: gamma,
            gamma_fit: fit.parameter,
            residual: fit.residual,
            stderr: fit.stderr_param,
            window: fit.window,
        });
    }
    out.write_fit_table("gamma_fit.csv", &rows)?;
    out.finish("compare", &resolved.config)?;
    Ok(rows)
}

/// `saturation`: run the compare pipeline for each referenced scenario,
/// collect the fitted rates, and fit the saturation law.
pub fn cmd_saturation(resolved: &Resolved) -> anyhow::Result<()> {
    let section = resolved
        .config
        .saturation
        .as_ref()
        .context("saturation command needs a [saturation] section with configs")?;
    if section.configs.is_empty() {
        anyhow::bail!("saturation.configs must list at least one scenario config");
    }

    let mut points = Vec::new();
    for (i, rel) in section.configs.iter().enumerate() {
        let path = resolved.config_dir.join(rel);
        let sub_out = resolved.out_dir.join(format!("scenario_{i}"));
        let sub = load(
            &path,
            Overrides {
                seed: None,
                workers: None,
                out: Some(&sub_out),
            },
        )
        .with_context(|| format!("loading saturation scenario {}", path.display()))?;
        let rows = cmd_compare(&sub)?;
        for row in rows {
            points.push((
                row.gamma_nominal / row.lambda,
                row.gamma_fit / row.lambda,
                row.lambda,
                row.n_e,
            ));
        }
    }

    let fit_input: Vec<(f64, f64)> = points.iter().map(|&(a, r, _, _)| (a, r)).collect();
    let fit = fit_saturation(&fit_input)?;

    let mut out = OutputWriter::create(&resolved.out_dir, &resolved.config, resolved.base_seed)?;
    out.write_saturation_points("saturation_points.csv", &points)?;
    #[derive(Serialize)]
    struct SaturationFit {
        b: f64,
        residual_rms: f64,
        stderr: f64,
        n_points: usize,
        alpha_range: (f64, f64),
    }
    out.write_json(
        "saturation_fit.json",
        &SaturationFit {
            b: fit.parameter,
            residual_rms: fit.residual,
            stderr: fit.stderr_param,
            n_points: fit.n_points,
            alpha_range: fit.window,
        },
    )?;
    out.finish("saturation", &resolved.config)?;
    eprintln!(
        "saturation: b = {:.4} +- {:.4} over {} points",
        fit.parameter, fit.stderr_param, fit.n_points
    );
    Ok(())
}

/// `selftest`: quick closed-form and oracle checks; exits nonzero on any
/// failure. Runs in a few seconds.
pub fn cmd_selftest() -> anyhow::Result<()> {
    use nestenv_core::{
        build_h_lambda, elr_exponent, form_factor_b2, normalize_center_spacing, perturbative_g,
        propagate_coherence, sample_vprime, superoperator_reference, DensityMatrix,
        DissipatorSpec, EnsembleSampler, EnsembleSpec, PropagationSettings,
    };

    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("PASS: {name}: {detail}");
        } else {
            println!("FAIL: {name}: {detail}");
            failures += 1;
        }
    };

    // closed forms
    let mut worst: f64 = 0.0;
    for k in 0..=200 {
        let x = 0.02 * k as f64;
        worst = worst.max((perturbative_g(0.0, x)? - (-x * x).exp()).abs());
    }
    check(
        "perturbative limit",
        worst < 1e-14,
        format!("g_0 vs Gaussian, worst {worst:.2e}"),
    );

    let b2_gap = (form_factor_b2(1.0, EnsembleKind::Goe)? - (3f64.ln() - 1.0)).abs();
    check(
        "form factor continuity",
        b2_gap < 1e-12,
        format!("b2(1) vs ln3 - 1: {b2_gap:.2e}"),
    );

    let slope = (elr_exponent(1e-6)? - elr_exponent(0.0)?) / 1e-6;
    check(
        "ELR slope",
        (slope - std::f64::consts::PI).abs() < 1e-4,
        format!("C'(0) = {slope:.8}"),
    );

    // small oracle equivalence
    let n = 6;
    let spec = EnsembleSpec::new(EnsembleKind::Goe, n, 12345)?;
    let mut sampler = EnsembleSampler::new(spec);
    let h0 = normalize_center_spacing(&sampler.sample(1.0)?, EnsembleKind::Goe);
    let veff = sampler.sample(1.0)?;
    let pair = build_h_lambda(h0, veff, 0.1)?;
    let vprime = sample_vprime(&mut sampler, EnsembleKind::Gue)?;
    let diss = DissipatorSpec::new(0.1, vprime)?;
    let rho = DensityMatrix::maximally_mixed(n);
    let grid = TimeGrid::uniform(10.0, 0.5)?;
    let oracle = superoperator_reference(&pair, &diss, &rho, &grid)?;
    let stepped = propagate_coherence(&pair, &diss, &rho, &grid, &PropagationSettings::rk4(0.005))?;
    let gap = oracle
        .values
        .iter()
        .zip(stepped.values.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    check(
        "propagator oracle",
        gap < 1e-7,
        format!("Strang vs superoperator, sup gap {gap:.2e}"),
    );

    // Gamma = 0 exactness against the echo kernel
    let diss0 = DissipatorSpec::new(0.0, sample_vprime(&mut sampler, EnsembleKind::Gue)?)?;
    let exact = nestenv_core::fidelity_amplitude(&pair, &rho, &grid)?;
    let stepped0 =
        propagate_coherence(&pair, &diss0, &rho, &grid, &PropagationSettings::spectral(0.01))?;
    let gap0 = exact
        .values
        .iter()
        .zip(stepped0.values.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    check(
        "echo limit",
        gap0 < 1e-8,
        format!("Gamma=0 stepping vs exact echo, sup gap {gap0:.2e}"),
    );

    // convolution identity
    let lambda = 0.02;
    let base_grid = TimeGrid::uniform(40.0, 0.1)?;
    let base_values: Vec<c64> = base_grid
        .points()
        .iter()
        .map(|&t| c64::new((-lambda * lambda * t * t).exp(), 0.0))
        .collect();
    let spline = CubicSpline::natural(base_grid.points(), &base_values)?;
    let conv_grid = TimeGrid::uniform(15.0, 1.0)?;
    let conv = lr_convolution(&spline, lambda, &conv_grid)?;
    let mut conv_gap: f64 = 0.0;
    for (kk, &t) in conv_grid.points().iter().enumerate() {
        conv_gap = conv_gap.max((conv.values[kk].re - perturbative_g(1.0, lambda * t)?).abs());
    }
    check(
        "convolution identity",
        conv_gap < 1e-8,
        format!("Gaussian base vs g_alpha, worst {conv_gap:.2e}"),
    );

    println!("selftest version {VERSION}: {} checks failed", failures);
    if failures > 0 {
        anyhow::bail!("{failures} selftest checks failed");
    }
    Ok(())
}

