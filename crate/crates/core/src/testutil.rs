//! Shared helpers for unit tests: brute-force oracles kept independent of
//! the eigendecomposition-based implementation paths.

use ndarray::Array2;
use ndarray_linalg::{c64, Norm};

use crate::rmt::{build_h_lambda, normalize_center_spacing, EnsembleKind, EnsembleSampler, EnsembleSpec, HamiltonianPair};
use crate::CMatrix;

/// Matrix exponential by scaling-and-squaring with a Taylor series.
/// Independent of any spectral decomposition.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.norm_l2();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings as i32));
    let mut result = Array2::<c64>::eye(n);
    let mut term = Array2::<c64>::eye(n);
    for k in 1..60 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        let t_norm = term.norm_l2();
        result += &term;
        if t_norm < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Normalized GOE `H0` with raw `Veff`, cached spectra.
pub fn random_pair(n: usize, lambda: f64, seed: u64) -> HamiltonianPair {
    let spec = EnsembleSpec::new(EnsembleKind::Goe, n, seed).unwrap();
    let mut sampler = EnsembleSampler::new(spec);
    let h0 = normalize_center_spacing(&sampler.sample(1.0).unwrap(), EnsembleKind::Goe);
    let veff = sampler.sample(1.0).unwrap();
    build_h_lambda(h0, veff, lambda).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Array2::<c64>::zeros((4, 4));
        let e = expm(&z);
        let defect = (&e - &Array2::<c64>::eye(4))
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max);
        assert!(defect == 0.0);
    }

    #[test]
    fn expm_diagonal() {
        let mut d = Array2::<c64>::zeros((3, 3));
        for i in 0..3 {
            d[[i, i]] = c64::new(0.0, (i + 1) as f64);
        }
        let e = expm(&d);
        for i in 0..3 {
            let expect = c64::new(0.0, (i + 1) as f64).exp();
            assert!((e[[i, i]] - expect).norm() < 1e-14);
        }
    }
}
