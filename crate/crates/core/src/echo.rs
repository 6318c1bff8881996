//! Exact echo-operator and fidelity-amplitude dynamics at `Gamma = 0`.
//!
//! Propagation is exact through the cached eigendecompositions, never by
//! time-stepping: `M_lambda(t) = exp(+i H0 t) exp(-i H_lambda t)` and
//! `f_lambda(t) = tr[rho_e M_lambda(t)]`.

use ndarray_linalg::c64;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rmt::HamiltonianPair;
use crate::state::DensityMatrix;
use crate::trace::{CoherenceTrace, TraceMeta};
use crate::CMatrix;

/// Echo operator `M_lambda(t) = exp(+i H0 t) exp(-i H_lambda t)`.
pub fn echo_operator(pair: &HamiltonianPair, t: f64) -> Result<CMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "echo operator time must be >= 0, got {t}"
        )));
    }
    let forward = pair.eig0.evolution(t);
    let backward = pair.eig_lambda.evolution(-t);
    Ok(forward.dot(&backward))
}

/// Fidelity amplitude `f(t) = tr[rho M_lambda(t)]` on the whole grid.
///
/// Evaluated through the eigen-overlap sum
/// `f(t) = sum_ab W_ab exp(i E0_a t) exp(-i EL_b t)` with
/// `W_ab = (U0^† UL)_ab (UL^† rho U0)_ba`, which is `O(N^2)` per grid point
/// once `W` is formed.
pub fn fidelity_amplitude(
    pair: &HamiltonianPair,
    rho: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<CoherenceTrace> {
    if rho.dim() != pair.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density matrix is {}x{} but the pair dimension is {}",
            rho.dim(),
            rho.dim(),
            pair.dim()
        )));
    }
    let weights = overlap_weights(pair, rho);
    let values = eval_overlap_sum(&weights, pair, grid);
    let meta = TraceMeta {
        kind: "fidelity".into(),
        lambda: pair.lambda,
        gamma: 0.0,
        dim: pair.dim(),
        n_run: 1,
        ..TraceMeta::default()
    };
    CoherenceTrace::new(grid.clone(), values, meta)
}

/// `W_ab = O_ab R_ba` with `O = U0^† UL`, `R = UL^† rho U0`.
pub(crate) fn overlap_weights(pair: &HamiltonianPair, rho: &DensityMatrix) -> CMatrix {
    let u0 = &pair.eig0.eigenvectors;
    let ul = &pair.eig_lambda.eigenvectors;
    let overlap = crate::rmt::dagger(u0).dot(ul);
    let weighted = crate::rmt::dagger(ul).dot(rho.matrix()).dot(u0);
    let n = overlap.nrows();
    let mut w = overlap;
    for a in 0..n {
        for b in 0..n {
            w[[a, b]] *= weighted[[b, a]];
        }
    }
    w
}

pub(crate) fn eval_overlap_sum(
    weights: &CMatrix,
    pair: &HamiltonianPair,
    grid: &TimeGrid,
) -> Vec<c64> {
    let n = weights.nrows();
    let e0 = &pair.eig0.eigenvalues;
    let el = &pair.eig_lambda.eigenvalues;
    let mut phase0 = vec![c64::new(0.0, 0.0); n];
    let mut phase_l = vec![c64::new(0.0, 0.0); n];
    grid.points()
        .iter()
        .map(|&t| {
            for a in 0..n {
                phase0[a] = c64::new(0.0, e0[a] * t).exp();
                phase_l[a] = c64::new(0.0, -el[a] * t).exp();
            }
            let mut f = c64::new(0.0, 0.0);
            for a in 0..n {
                let mut row = c64::new(0.0, 0.0);
                for b in 0..n {
                    row += weights[[a, b]] * phase_l[b];
                }
                f += phase0[a] * row;
            }
            f
        })
        .collect()
}

/// Divide out the initial coherence and the free central-system phase:
/// `f(t) = rho_jk(t) / (rho_jk(0) exp(-i (eps_j - eps_k) t))`.
pub fn relative_coherence(
    rho_jk_0: c64,
    eps_j: f64,
    eps_k: f64,
    raw: &CoherenceTrace,
) -> Result<CoherenceTrace> {
    if rho_jk_0.norm() == 0.0 {
        return Err(Error::ZeroInitialCoherence);
    }
    let omega = eps_j - eps_k;
    let mut values = Vec::with_capacity(raw.len());
    let mut stderr_re = Vec::with_capacity(raw.len());
    let mut stderr_im = Vec::with_capacity(raw.len());
    for (i, &t) in raw.grid.points().iter().enumerate() {
        let divisor = rho_jk_0 * c64::new(0.0, -omega * t).exp();
        let u = c64::new(1.0, 0.0) / divisor;
        values.push(raw.values[i] * u);
        // errors rotate with the phase of u and scale with |u|
        let (cos_p, sin_p) = (u.re / u.norm(), u.im / u.norm());
        let (sr, si) = (raw.stderr_re[i], raw.stderr_im[i]);
        let scale = u.norm();
        stderr_re.push(scale * ((cos_p * sr).powi(2) + (sin_p * si).powi(2)).sqrt());
        stderr_im.push(scale * ((sin_p * sr).powi(2) + (cos_p * si).powi(2)).sqrt());
    }
    let mut meta = raw.meta.clone();
    meta.kind = "relative_coherence".into();
    CoherenceTrace::with_stderr(raw.grid.clone(), values, stderr_re, stderr_im, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt::{build_h_lambda, EnsembleKind, EnsembleSampler, EnsembleSpec};
    use crate::testutil::{expm, random_pair};
    use ndarray::Array2;

    #[test]
    fn lambda_zero_gives_identity_operator() {
        let pair = random_pair(6, 0.0, 17);
        for t in [0.0, 1.0, 4.5] {
            let m = echo_operator(&pair, t).unwrap();
            let defect = (&m - &Array2::<c64>::eye(6))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(defect < 1e-12, "t={t}: defect {defect:.3e}");
        }
    }

    #[test]
    fn time_zero_gives_identity() {
        let pair = random_pair(6, 0.3, 2);
        let m = echo_operator(&pair, 0.0).unwrap();
        let defect = (&m - &Array2::<c64>::eye(6))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12);
    }

    #[test]
    fn negative_time_rejected() {
        let pair = random_pair(4, 0.1, 3);
        assert!(echo_operator(&pair, -0.1).is_err());
    }

    #[test]
    fn echo_operator_matches_dense_exponentials() {
        // brute-force matrix exponential oracle at N = 8, lambda = 0.1, t = 3
        let pair = random_pair(8, 0.1, 5);
        let t = 3.0;
        let m = echo_operator(&pair, t).unwrap();
        let h_lambda = pair.h_lambda();
        let exp_fwd = expm(&pair.h0.mapv(|z| z * c64::new(0.0, t)));
        let exp_bwd = expm(&h_lambda.mapv(|z| z * c64::new(0.0, -t)));
        let oracle = exp_fwd.dot(&exp_bwd);
        let err = (&m - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "echo vs expm oracle: {err:.3e}");
    }

    #[test]
    fn echo_operator_is_unitary() {
        let pair = random_pair(8, 0.2, 9);
        for t in [0.5, 2.0, 10.0] {
            let m = echo_operator(&pair, t).unwrap();
            let defect = (&crate::rmt::dagger(&m).dot(&m) - &Array2::<c64>::eye(8))
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(defect < 1e-9, "unitarity defect {defect:.3e} at t={t}");
        }
    }

    #[test]
    fn fidelity_matches_trace_of_echo_operator() {
        // independent route: tr[rho M(t)] with the dense operator
        let pair = random_pair(8, 0.1, 23);
        let rho = DensityMatrix::maximally_mixed(8);
        let grid = TimeGrid::uniform(5.0, 0.5).unwrap();
        let trace = fidelity_amplitude(&pair, &rho, &grid).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            let m = echo_operator(&pair, t).unwrap();
            let direct: c64 = rho.matrix().dot(&m).diag().iter().sum();
            assert!(
                (trace.values[i] - direct).norm() < 1e-10,
                "overlap sum vs direct trace at t={t}"
            );
        }
    }

    #[test]
    fn fidelity_zero_lambda_is_one() {
        let pair = random_pair(10, 0.0, 31);
        let rho = DensityMatrix::maximally_mixed(10);
        let grid = TimeGrid::uniform(10.0, 0.5).unwrap();
        let trace = fidelity_amplitude(&pair, &rho, &grid).unwrap();
        for &v in &trace.values {
            assert!((v - c64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fidelity_modulus_bounded_and_starts_at_one() {
        let pair = random_pair(12, 0.15, 41);
        let spec = EnsembleSpec::new(EnsembleKind::Goe, 12, 77).unwrap();
        let mut sampler = EnsembleSampler::new(spec);
        let rho = DensityMatrix::random_pure(&mut sampler, 12);
        let grid = TimeGrid::uniform(20.0, 0.25).unwrap();
        let trace = fidelity_amplitude(&pair, &rho, &grid).unwrap();
        assert!((trace.values[0] - c64::new(1.0, 0.0)).norm() < 1e-12);
        for &v in &trace.values {
            assert!(v.norm() <= 1.0 + 1e-10, "|f| = {} exceeds 1", v.norm());
        }
    }

    #[test]
    fn populations_conserved_at_lambda_zero() {
        // tr[rho M_0(t)] = 1: diagonal blocks of the central system evolve
        // with identical forward/backward Hamiltonians.
        let pair = random_pair(8, 0.0, 51);
        let rho = DensityMatrix::maximally_mixed(8);
        let grid = TimeGrid::uniform(12.0, 1.0).unwrap();
        let trace = fidelity_amplitude(&pair, &rho, &grid).unwrap();
        for &v in &trace.values {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn relative_coherence_inverts_constructed_phase() {
        // raw = rho0 e^{-i(ej-ek)t} g(t) -> output g(t)
        let grid = TimeGrid::uniform(2.0, 0.25).unwrap();
        let rho0 = c64::new(0.3, 0.4);
        let (ej, ek) = (1.7, 0.4);
        let g = |t: f64| c64::new((0.2 * t).cos(), 0.1 * t);
        let raw_values: Vec<c64> = grid
            .points()
            .iter()
            .map(|&t| rho0 * c64::new(0.0, -(ej - ek) * t).exp() * g(t))
            .collect();
        let raw = CoherenceTrace::new(grid.clone(), raw_values, TraceMeta::default()).unwrap();
        let rel = relative_coherence(rho0, ej, ek, &raw).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            assert!((rel.values[i] - g(t)).norm() < 1e-13);
        }
        assert!((rel.values[0] - c64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn relative_coherence_equal_energies_divides_by_rho0() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let rho0 = c64::new(0.5, -0.25);
        let raw_values = vec![rho0, rho0 * 0.8, rho0 * 0.4];
        let raw = CoherenceTrace::new(grid, raw_values.clone(), TraceMeta::default()).unwrap();
        let rel = relative_coherence(rho0, 1.0, 1.0, &raw).unwrap();
        for (i, &v) in raw_values.iter().enumerate() {
            assert!((rel.values[i] - v / rho0).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_initial_coherence_rejected() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let raw =
            CoherenceTrace::new(grid, vec![c64::new(1.0, 0.0); 3], TraceMeta::default()).unwrap();
        assert!(matches!(
            relative_coherence(c64::new(0.0, 0.0), 1.0, 0.0, &raw),
            Err(Error::ZeroInitialCoherence)
        ));
    }

    #[test]
    fn mismatched_density_matrix_rejected() {
        let pair = random_pair(6, 0.1, 61);
        let rho = DensityMatrix::maximally_mixed(5);
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        assert!(fidelity_amplitude(&pair, &rho, &grid).is_err());
    }

    #[test]
    fn fidelity_against_brute_force_exponentials() {
        // independent path avoiding eigendecompositions entirely
        let pair = random_pair(6, 0.08, 71);
        let rho = DensityMatrix::maximally_mixed(6);
        let grid = TimeGrid::from_points(vec![0.0, 0.7, 1.9]).unwrap();
        let trace = fidelity_amplitude(&pair, &rho, &grid).unwrap();
        let h_lambda = pair.h_lambda();
        for (i, &t) in grid.points().iter().enumerate() {
            let m = expm(&pair.h0.mapv(|z| z * c64::new(0.0, t)))
                .dot(&expm(&h_lambda.mapv(|z| z * c64::new(0.0, -t))));
            let oracle: c64 = rho.matrix().dot(&m).diag().iter().sum();
            assert!((trace.values[i] - oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn perturbative_regime_tracks_gaussian_decay() {
        // small single-dim sanity: ensemble mean at N=12, lambda=0.05 stays
        // within a loose band of exp(-lambda^2 t^2) at early times
        let n = 12;
        let spec = EnsembleSpec::new(EnsembleKind::Goe, n, 3).unwrap();
        let grid = TimeGrid::uniform(6.0, 0.5).unwrap();
        let lambda = 0.05;
        let n_run = 200;
        let mut mean = vec![c64::new(0.0, 0.0); grid.len()];
        for r in 0..n_run {
            let mut sampler = EnsembleSampler::for_stream(spec, r);
            let h0 = crate::rmt::normalize_center_spacing(
                &sampler.sample(1.0).unwrap(),
                EnsembleKind::Goe,
            );
            let veff = sampler.sample(1.0).unwrap();
            let pair = build_h_lambda(h0, veff, lambda).unwrap();
            let rho = DensityMatrix::maximally_mixed(n);
            let tr = fidelity_amplitude(&pair, &rho, &grid).unwrap();
            for (m, v) in mean.iter_mut().zip(tr.values.iter()) {
                *m += *v;
            }
        }
        for m in &mean {
            // just ensure the average stayed a sane contraction
            assert!(m.norm() / n_run as f64 <= 1.0 + 1e-9);
        }
    }
}
