//! Random-matrix sampling, normalization and eigendecomposition.
//!
//! Sampling conventions: a GOE draw with `sigma = 1` has off-diagonal
//! variance 1 and diagonal variance 2 (`<V_ij^2> = 1 + delta_ij`); a GUE
//! draw has `<|V_ij|^2> = sigma^2` off the diagonal (real and imaginary
//! parts each `sigma^2/2`) and real diagonal of variance `sigma^2`.
//!
//! `normalize_center_spacing` rescales a `sigma = 1` draw by
//! `sqrt(N)/pi`, which sets the semicircle level density at the spectrum
//! center to one level per unit energy, i.e. `d0 = 1`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{c64, Eigh, Norm, UPLO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::CMatrix;

/// Gaussian ensemble family, with the Dyson parameter attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    Goe,
    Gue,
}

impl EnsembleKind {
    /// Dyson parameter: 1 for GOE, 2 for GUE.
    pub fn beta(self) -> u8 {
        match self {
            EnsembleKind::Goe => 1,
            EnsembleKind::Gue => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::Goe => "goe",
            EnsembleKind::Gue => "gue",
        }
    }
}

impl std::fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "goe" => Ok(EnsembleKind::Goe),
            "gue" => Ok(EnsembleKind::Gue),
            other => Err(Error::InvalidParameter(format!(
                "unknown ensemble kind '{other}' (expected goe or gue)"
            ))),
        }
    }
}

/// Random-matrix ensemble configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dimension: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, dimension: usize, seed: u64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidParameter(format!(
                "ensemble dimension must be >= 2, got {dimension}"
            )));
        }
        Ok(Self {
            kind,
            dimension,
            seed,
        })
    }

    pub fn beta(&self) -> u8 {
        self.kind.beta()
    }
}

/// Seeded, stream-addressable sampler.
///
/// Every `(seed, stream)` pair is an independent ChaCha stream, so
/// realizations can be drawn concurrently with scheduling-independent
/// results. Draws within a stream advance a counter; the draw order is
/// part of the reproducibility contract.
#[derive(Debug, Clone)]
pub struct EnsembleSampler {
    spec: EnsembleSpec,
    rng: ChaCha8Rng,
}

impl EnsembleSampler {
    pub fn new(spec: EnsembleSpec) -> Self {
        Self::for_stream(spec, 0)
    }

    /// Sampler for one realization stream (stream = realization index).
    pub fn for_stream(spec: EnsembleSpec, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        Self { spec, rng }
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    fn normal(&mut self, sd: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * sd
    }

    /// Draw one Hermitian matrix of the sampler's own kind.
    pub fn sample(&mut self, sigma: f64) -> Result<CMatrix> {
        self.sample_kind(self.spec.kind, sigma)
    }

    /// Draw one Hermitian matrix of an explicit kind (the far-environment
    /// coupling may use a different ensemble than the Hamiltonian pair).
    pub fn sample_kind(&mut self, kind: EnsembleKind, sigma: f64) -> Result<CMatrix> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let n = self.spec.dimension;
        let mut m = Array2::<c64>::zeros((n, n));
        match kind {
            EnsembleKind::Goe => {
                for i in 0..n {
                    m[[i, i]] = c64::new(self.normal(sigma * std::f64::consts::SQRT_2), 0.0);
                    for j in (i + 1)..n {
                        let x = self.normal(sigma);
                        m[[i, j]] = c64::new(x, 0.0);
                        m[[j, i]] = c64::new(x, 0.0);
                    }
                }
            }
            EnsembleKind::Gue => {
                let sd = sigma / std::f64::consts::SQRT_2;
                for i in 0..n {
                    m[[i, i]] = c64::new(self.normal(sigma), 0.0);
                    for j in (i + 1)..n {
                        let z = c64::new(self.normal(sd), self.normal(sd));
                        m[[i, j]] = z;
                        m[[j, i]] = z.conj();
                    }
                }
            }
        }
        Ok(m)
    }

    /// Standard-normal draw from the same stream (used for random pure
    /// initial states, after the matrix draws).
    pub fn standard_normal(&mut self) -> f64 {
        self.normal(1.0)
    }
}

/// First draw of stream 0 for the given spec.
pub fn sample_gaussian_ensemble(spec: &EnsembleSpec, sigma: f64) -> Result<CMatrix> {
    EnsembleSampler::new(*spec).sample(sigma)
}

/// Rescale a `sigma = 1` draw so the mean level spacing at the center of
/// the semicircle is one. The scale `sqrt(N)/pi` follows from the
/// semicircle density `rho(0) = sqrt(N)/(pi*sigma)` and is the same for
/// GOE and GUE under the variance conventions above.
pub fn normalize_center_spacing(h: &CMatrix, _kind: EnsembleKind) -> CMatrix {
    let n = h.nrows();
    let c = (n as f64).sqrt() / std::f64::consts::PI;
    h.mapv(|z| z * c)
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary of eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    /// U diag(E) U^dagger.
    pub fn reconstruct(&self) -> CMatrix {
        let scaled = scale_columns(&self.eigenvectors, |e| c64::new(e, 0.0), &self.eigenvalues);
        scaled.dot(&dagger(&self.eigenvectors))
    }

    /// exp(i s H) as a dense matrix, from the cached decomposition.
    pub fn evolution(&self, s: f64) -> CMatrix {
        let scaled = scale_columns(
            &self.eigenvectors,
            |e| c64::new(0.0, e * s).exp(),
            &self.eigenvalues,
        );
        scaled.dot(&dagger(&self.eigenvectors))
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Columns of `u` scaled by `f(e_j)`.
pub(crate) fn scale_columns<F>(u: &CMatrix, f: F, e: &Array1<f64>) -> CMatrix
where
    F: Fn(f64) -> c64,
{
    let mut out = u.clone();
    for (j, &ej) in e.iter().enumerate() {
        let factor = f(ej);
        out.column_mut(j).mapv_inplace(|z| z * factor);
    }
    out
}

pub(crate) fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub(crate) fn hermiticity_defect(h: &CMatrix) -> f64 {
    let norm = h.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    let defect = (h - &dagger(h)).norm_l2();
    defect / norm
}

pub(crate) fn require_hermitian(h: &CMatrix, what: &str) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let defect = hermiticity_defect(h);
    if defect > 1e-12 {
        return Err(Error::Validation(format!(
            "{what} is not Hermitian (relative defect {defect:.3e} > 1e-12)"
        )));
    }
    Ok(())
}

/// Eigendecompose a Hermitian matrix. Fails on non-Hermitian input.
pub fn eigendecompose(h: &CMatrix) -> Result<Spectrum> {
    require_hermitian(h, "matrix")?;
    // Symmetrize before the solver so the 1e-12 tolerance band cannot leak
    // into eigenvector unitarity.
    let sym = (h + &dagger(h)).mapv(|z| z * 0.5);
    let (eigenvalues, eigenvectors) = sym.eigh(UPLO::Lower)?;
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Unperturbed/perturbed Hamiltonian pair with cached spectral data.
///
/// `h_lambda = h0 + lambda * veff`; both decompositions are computed on
/// construction so propagation never re-diagonalizes.
#[derive(Debug, Clone)]
pub struct HamiltonianPair {
    pub h0: CMatrix,
    pub veff: CMatrix,
    pub lambda: f64,
    pub eig0: Spectrum,
    pub eig_lambda: Spectrum,
}

impl HamiltonianPair {
    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn h_lambda(&self) -> CMatrix {
        &self.h0 + &self.veff.mapv(|z| z * self.lambda)
    }
}

/// Build the pair and cache both eigendecompositions.
pub fn build_h_lambda(h0: CMatrix, veff: CMatrix, lambda: f64) -> Result<HamiltonianPair> {
    if h0.nrows() != veff.nrows() || h0.ncols() != veff.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "H0 is {}x{} but Veff is {}x{}",
            h0.nrows(),
            h0.ncols(),
            veff.nrows(),
            veff.ncols()
        )));
    }
    require_hermitian(&h0, "H0")?;
    require_hermitian(&veff, "Veff")?;
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let eig0 = eigendecompose(&h0)?;
    let h_lambda = &h0 + &veff.mapv(|z| z * lambda);
    let eig_lambda = eigendecompose(&h_lambda)?;
    Ok(HamiltonianPair {
        h0,
        veff,
        lambda,
        eig0,
        eig_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn spec(kind: EnsembleKind, n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(kind, n, seed).unwrap()
    }

    #[test]
    fn dimension_below_two_rejected() {
        assert!(EnsembleSpec::new(EnsembleKind::Goe, 1, 0).is_err());
        assert!(EnsembleSpec::new(EnsembleKind::Goe, 0, 0).is_err());
    }

    #[test]
    fn beta_matches_kind() {
        assert_eq!(spec(EnsembleKind::Goe, 2, 0).beta(), 1);
        assert_eq!(spec(EnsembleKind::Gue, 2, 0).beta(), 2);
    }

    #[test]
    fn goe_variances_match_convention() {
        // <V_ij^2> = 1 + delta_ij at sigma = 1.
        let n = 50;
        let mut sampler = EnsembleSampler::new(spec(EnsembleKind::Goe, n, 11));
        let mut off = Vec::new();
        let mut diag = Vec::new();
        for _ in 0..40 {
            let m = sampler.sample(1.0).unwrap();
            for i in 0..n {
                diag.push(m[[i, i]].re);
                for j in (i + 1)..n {
                    off.push(m[[i, j]].re);
                }
            }
        }
        let var = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        assert_abs_diff_eq!(var(&off), 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(var(&diag), 2.0, epsilon = 0.15);
    }

    #[test]
    fn gue_variances_match_convention() {
        let n = 50;
        let mut sampler = EnsembleSampler::new(spec(EnsembleKind::Gue, n, 13));
        let (mut re, mut im, mut diag) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..40 {
            let m = sampler.sample(1.0).unwrap();
            for i in 0..n {
                diag.push(m[[i, i]].re);
                for j in (i + 1)..n {
                    re.push(m[[i, j]].re);
                    im.push(m[[i, j]].im);
                }
            }
        }
        let var = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        assert_abs_diff_eq!(var(&re), 0.5, epsilon = 0.03);
        assert_abs_diff_eq!(var(&im), 0.5, epsilon = 0.03);
        assert_abs_diff_eq!(var(&diag), 1.0, epsilon = 0.1);
    }

    #[test]
    fn sampling_is_hermitian_and_deterministic() {
        for kind in [EnsembleKind::Goe, EnsembleKind::Gue] {
            let s = spec(kind, 2, 99);
            let a = sample_gaussian_ensemble(&s, 1.0).unwrap();
            let b = sample_gaussian_ensemble(&s, 1.0).unwrap();
            assert_eq!(a, b, "same seed must give bit-identical matrices");
            assert!(hermiticity_defect(&a) == 0.0);
        }
    }

    #[test]
    fn invalid_sigma_rejected() {
        let s = spec(EnsembleKind::Goe, 4, 0);
        assert!(sample_gaussian_ensemble(&s, 0.0).is_err());
        assert!(sample_gaussian_ensemble(&s, -1.0).is_err());
    }

    #[test]
    fn distinct_streams_are_independent() {
        let s = spec(EnsembleKind::Goe, 8, 5);
        let a = EnsembleSampler::for_stream(s, 0).sample(1.0).unwrap();
        let b = EnsembleSampler::for_stream(s, 1).sample(1.0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn normalization_scales_linearly() {
        let mut d = Array2::<c64>::zeros((4, 4));
        for i in 0..4 {
            d[[i, i]] = c64::new(i as f64, 0.0);
        }
        let scaled = normalize_center_spacing(&d, EnsembleKind::Goe);
        let c = 2.0 / std::f64::consts::PI;
        for i in 0..4 {
            assert_abs_diff_eq!(scaled[[i, i]].re, c * i as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn center_spacing_is_unity() {
        // Monte Carlo estimate of the central mean spacing against the
        // semicircle prediction, 200 realizations at N = 50.
        let n = 50;
        let mut sampler = EnsembleSampler::new(spec(EnsembleKind::Goe, n, 7));
        let mut spacings = Vec::new();
        for _ in 0..200 {
            let h = normalize_center_spacing(&sampler.sample(1.0).unwrap(), EnsembleKind::Goe);
            let eig = eigendecompose(&h).unwrap();
            let e = eig.eigenvalues;
            // central 10% of levels
            let k = n / 20;
            let lo = n / 2 - k;
            let hi = n / 2 + k;
            for i in lo..hi {
                spacings.push(e[i + 1] - e[i]);
            }
        }
        let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 0.05);
    }

    #[test]
    fn eigendecompose_diagonal() {
        let mut d = Array2::<c64>::zeros((3, 3));
        for i in 0..3 {
            d[[i, i]] = c64::new((i + 1) as f64, 0.0);
        }
        let s = eigendecompose(&d).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s.eigenvalues[i], (i + 1) as f64, epsilon = 1e-12);
        }
        let defect = (&s.eigenvectors.mapv(|z| z) - &Array2::<c64>::eye(3))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12, "diagonal input must give identity vectors");
    }

    #[test]
    fn eigendecompose_pauli_x() {
        let mut m = Array2::<c64>::zeros((2, 2));
        m[[0, 1]] = c64::new(1.0, 0.0);
        m[[1, 0]] = c64::new(1.0, 0.0);
        let s = eigendecompose(&m).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigendecompose_rejects_non_hermitian() {
        let mut m = Array2::<c64>::zeros((2, 2));
        m[[0, 1]] = c64::new(1.0, 0.0);
        assert!(matches!(eigendecompose(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn reconstruction_roundtrip() {
        let s = spec(EnsembleKind::Goe, 8, 3);
        let h = sample_gaussian_ensemble(&s, 1.0).unwrap();
        let eig = eigendecompose(&h).unwrap();
        let rel = (&eig.reconstruct() - &h).norm_l2() / h.norm_l2();
        assert!(rel < 1e-10, "reconstruction error {rel:.3e}");
        // eigenvector unitarity
        let uu = dagger(&eig.eigenvectors).dot(&eig.eigenvectors);
        let defect = (&uu - &Array2::<c64>::eye(8)).norm_l2();
        assert!(defect < 1e-10);
    }

    #[test]
    fn build_h_lambda_matches_direct_diagonalization() {
        let s = spec(EnsembleKind::Goe, 8, 21);
        let mut sampler = EnsembleSampler::new(s);
        let h0 = sampler.sample(1.0).unwrap();
        let v = sampler.sample(1.0).unwrap();
        let pair = build_h_lambda(h0.clone(), v.clone(), 0.1).unwrap();
        let direct = eigendecompose(&(&h0 + &v.mapv(|z| z * 0.1))).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(
                pair.eig_lambda.eigenvalues[i],
                direct.eigenvalues[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn lambda_zero_gives_identical_spectra() {
        let s = spec(EnsembleKind::Goe, 6, 2);
        let mut sampler = EnsembleSampler::new(s);
        let h0 = sampler.sample(1.0).unwrap();
        let v = sampler.sample(1.0).unwrap();
        let pair = build_h_lambda(h0.clone(), v, 0.0).unwrap();
        assert_eq!(pair.eig0.eigenvalues, pair.eig_lambda.eigenvalues);
        let zero = build_h_lambda(h0, Array2::zeros((6, 6)), 0.7).unwrap();
        assert_eq!(zero.eig0.eigenvalues, zero.eig_lambda.eigenvalues);
    }

    #[test]
    fn build_h_lambda_rejects_mismatch() {
        let h0 = Array2::<c64>::eye(4);
        let v = Array2::<c64>::eye(5);
        assert!(matches!(
            build_h_lambda(h0, v, 0.1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn samples_stay_hermitian(
                seed in 0u64..1u64 << 48,
                n in 2usize..12,
                kind_gue in proptest::bool::ANY,
                sigma in 0.1f64..3.0,
            ) {
                let kind = if kind_gue { EnsembleKind::Gue } else { EnsembleKind::Goe };
                let s = EnsembleSpec::new(kind, n, seed).unwrap();
                let m = sample_gaussian_ensemble(&s, sigma).unwrap();
                prop_assert!(hermiticity_defect(&m) <= 1e-12);
                let scaled = normalize_center_spacing(&m, kind);
                prop_assert!(hermiticity_defect(&scaled) <= 1e-12);
            }
        }
    }
}
