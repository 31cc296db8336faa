//! Independent numerical oracles for the univariate spectra.

use nalgebra::DMatrix;
use stdinfo::numeric::gauss_legendre;
use stdinfo::spectra::{BasisFamily, UnivariateSpectrum};

/// Eigenvalues of the covariance `min(s, t)` discretized by the midpoint
/// rule on 512 cells agree with the closed form of the Brownian spectrum.
#[test]
fn brownian_eigenvalues_match_kernel_diagonalization() {
    let n = 512;
    let h = 1.0 / n as f64;
    let k = DMatrix::from_fn(n, n, |i, j| {
        let s = (i as f64 + 0.5) * h;
        let t = (j as f64 + 0.5) * h;
        s.min(t) * h
    });
    let mut eig: Vec<f64> = k.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let spec = UnivariateSpectrum::brownian_motion();
    for i in 1..=8 {
        let exact = spec.eigenvalue_sq(i).unwrap();
        let rel = (eig[i - 1] - exact).abs() / exact;
        assert!(rel < 1e-4 * (i * i) as f64, "i={i}: {} vs {exact}", eig[i - 1]);
    }
    let trace: f64 = eig.iter().sum();
    assert!((trace - spec.total_mass()).abs() < 1e-3);
}

/// The sine basis paired with the Brownian spectrum reproduces the kernel
/// `min(s, t)` pointwise.
#[test]
fn brownian_expansion_reproduces_kernel() {
    let spec = UnivariateSpectrum::brownian_motion();
    let basis = spec.basis();
    for &(s, t) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1), (0.33, 0.34)] {
        let sum: f64 = (1..=20_000)
            .map(|i| spec.eigenvalue_sq(i).unwrap() * basis.eval(i, s) * basis.eval(i, t))
            .sum();
        assert!((sum - f64::min(s, t)).abs() < 1e-4, "({s},{t}): {sum}");
    }
}

/// Every basis family is orthonormal under Gauss-Legendre quadrature.
#[test]
fn bases_are_orthonormal() {
    let (x, w) = gauss_legendre(96);
    for fam in [BasisFamily::Sine, BasisFamily::Cosine, BasisFamily::Legendre] {
        let b = stdinfo::spectra::Basis::new(fam);
        let first = if fam.has_constant() { 0 } else { 1 };
        for i in first..first + 8 {
            for j in first..first + 8 {
                let g: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| {
                        let t = 0.5 * (x + 1.0);
                        0.5 * w * b.eval(i, t) * b.eval(j, t)
                    })
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "{fam:?} ({i},{j}) = {g}");
            }
        }
    }
}
