//! Gaussian sample paths from truncated Karhunen-Loeve expansions.
//!
//! A [`Field`] fixes the retained index set (the `T` largest eigenvalues)
//! and the basis. Realizations carry coefficients `c_k = lambda_k xi_k`
//! with `xi_k` standard normal (ziggurat sampler over a ChaCha8 stream).
//! The retained field is the ground truth; the variance beyond `T` is
//! carried as `analytic_tail`.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::additive_spectrum::AdditiveModel;
use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;
use crate::seed::stream_rng;
use crate::spectra::{Basis, UnivariateSpectrum};
use crate::tensor_spectrum::{top_k, MultiIndex, RankedSpectrum};

/// Default number of retained terms for an approximation span of size `m`.
pub fn default_truncation(m: usize) -> usize {
    (4 * m).max(4096)
}

#[derive(Debug, Clone)]
pub struct Field {
    ranked: RankedSpectrum,
    std_devs: Vec<f64>,
    basis: Basis,
    max_index: Vec<usize>,
}

impl Field {
    /// Keeps the first `t` entries of `ranked`.
    pub fn new(ranked: &RankedSpectrum, t: usize, basis: Basis) -> Result<Self> {
        if t > ranked.len() {
            return Err(invalid(
                "T",
                format!("{t} terms requested, {} available", ranked.len()),
            ));
        }
        let ranked = ranked.truncated(t);
        let dim = ranked.dim();
        let mut max_index = vec![0usize; dim];
        for (k, _) in ranked.entries() {
            if k.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: k.len(),
                });
            }
            if !basis.has_constant() && k.contains(&0) {
                return Err(Error::Unsupported(
                    "index 0 needs a basis with a constant member".into(),
                ));
            }
            for (mx, &c) in max_index.iter_mut().zip(k) {
                *mx = (*mx).max(c as usize);
            }
        }
        let std_devs = ranked.values().map(f64::sqrt).collect();
        Ok(Field {
            ranked,
            std_devs,
            basis,
            max_index,
        })
    }

    pub fn tensor(spec: &UnivariateSpectrum, d: usize, t: usize) -> Result<Self> {
        let ranked = top_k(spec, d, t)?;
        Field::new(&ranked, ranked.len(), spec.basis().clone())
    }

    pub fn additive(model: &AdditiveModel, t: usize) -> Result<Self> {
        let ranked = model.merged_top_k(t)?;
        Field::new(&ranked, ranked.len(), model.spec().basis().clone())
    }

    /// Number of retained terms `T`.
    pub fn len(&self) -> usize {
        self.std_devs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.std_devs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ranked.dim()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn ranked(&self) -> &RankedSpectrum {
        &self.ranked
    }

    pub fn index(&self, k: usize) -> &MultiIndex {
        self.ranked.index(k)
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.ranked.value(k)
    }

    /// `E ||Y||^2` of the untruncated field.
    pub fn total_mass(&self) -> f64 {
        self.ranked.total_mass()
    }

    /// Expected squared norm of the terms beyond `T`.
    pub fn analytic_tail(&self) -> f64 {
        self.ranked.tail_after(self.len())
    }

    /// `E ||Y_m^perp||^2 = sum_{j > m} lambda_bar_j^2` for the full field.
    pub fn tail_after(&self, m: usize) -> f64 {
        self.ranked.tail_after(m)
    }

    /// Basis values per coordinate at the point `t`.
    fn coordinate_tables(&self, t: &[f64], tables: &mut [Vec<f64>]) {
        for ((table, &tc), &mx) in tables.iter_mut().zip(t).zip(&self.max_index) {
            table.resize(mx + 1, 0.0);
            self.basis.fill_values(tc, table);
        }
    }

    fn tables(&self) -> Vec<Vec<f64>> {
        self.max_index.iter().map(|&mx| vec![0.0; mx + 1]).collect()
    }

    /// `phi_k(t)` for the first `out.len()` retained modes.
    pub fn eval_modes(&self, t: &[f64], out: &mut [f64]) -> Result<()> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.len(),
            });
        }
        let mut tables = self.tables();
        self.eval_modes_with(t, &mut tables, out);
        Ok(())
    }

    fn eval_modes_with(&self, t: &[f64], tables: &mut [Vec<f64>], out: &mut [f64]) {
        self.coordinate_tables(t, tables);
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = self.ranked.index(k);
            let mut v = 1.0;
            for (table, &c) in tables.iter().zip(idx) {
                v *= table[c as usize];
            }
            *slot = v;
        }
    }

    /// Matrix of `phi_k(t_l)` for `n` points stored row-major in `points`
    /// and the first `cols` modes.
    pub fn mode_matrix(&self, points: &[f64], cols: usize) -> Array2<f64> {
        let d = self.dim();
        let n = points.len() / d;
        let cols = cols.min(self.len());
        let mut out = Array2::<f64>::zeros((n, cols));
        let mut tables = self.tables();
        for (l, mut row) in out.rows_mut().into_iter().enumerate() {
            let slice = row.as_slice_mut().expect("standard layout");
            self.eval_modes_with(&points[l * d..(l + 1) * d], &mut tables, slice);
        }
        out
    }

    /// Coefficients of one realization drawn from `rng`.
    pub fn draw_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.std_devs
            .iter()
            .map(|s| {
                let xi: f64 = rng.sample(StandardNormal);
                s * xi
            })
            .collect()
    }

    /// Rows `start..start+count` of the replication stream `(seed, domain)`.
    pub fn coefficient_batch(&self, seed: u64, domain: u64, start: u64, count: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((count, self.len()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let mut rng = stream_rng(seed, domain, start + i as u64);
            for (slot, s) in row.iter_mut().zip(&self.std_devs) {
                let xi: f64 = rng.sample(StandardNormal);
                *slot = s * xi;
            }
        }
        out
    }
}

/// One sample path over the retained index set.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    field: Arc<Field>,
    coefficients: Vec<f64>,
}

/// Squared L2 error split by Parseval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// `sum_{j <= m} (g_hat_j - g_j)^2`
    pub in_span: f64,
    /// `sum_{m < j <= T} g_j^2`
    pub out_span: f64,
    /// Expected mass beyond the retained terms.
    pub analytic_tail: f64,
}

impl ErrorDecomposition {
    /// Error against the retained field.
    pub fn retained(&self) -> f64 {
        self.in_span + self.out_span
    }

    /// Retained error plus the expected contribution of the omitted terms.
    pub fn total(&self) -> f64 {
        self.in_span + self.out_span + self.analytic_tail
    }
}

/// One realization of `field`, reproducible from `rng`.
pub fn simulate<R: Rng + ?Sized>(field: &Arc<Field>, rng: &mut R) -> FieldRealization {
    FieldRealization {
        coefficients: field.draw_coefficients(rng),
        field: Arc::clone(field),
    }
}

impl FieldRealization {
    pub fn from_coefficients(field: &Arc<Field>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != field.len() {
            return Err(Error::DimensionMismatch {
                expected: field.len(),
                got: coefficients.len(),
            });
        }
        Ok(FieldRealization {
            field: Arc::clone(field),
            coefficients,
        })
    }

    pub fn field(&self) -> &Arc<Field> {
        &self.field
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn analytic_tail(&self) -> f64 {
        self.field.analytic_tail()
    }

    /// `||Y||^2` of the retained field.
    pub fn sq_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).collect::<CompensatedSum>().value()
    }

    /// `Y(t) = sum_k c_k phi_k(t)`.
    pub fn eval_at(&self, t: &[f64]) -> Result<f64> {
        let mut phi = vec![0.0; self.field.len()];
        self.field.eval_modes(t, &mut phi)?;
        Ok(phi
            .iter()
            .zip(&self.coefficients)
            .map(|(p, c)| p * c)
            .collect::<CompensatedSum>()
            .value())
    }

    /// Parseval split of `||Y - sum_j g_hat_j phi_j||^2` for estimates of
    /// the first `estimates.len()` coefficients.
    pub fn exact_sq_error(&self, estimates: &[f64]) -> Result<ErrorDecomposition> {
        let m = estimates.len();
        if m > self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: m,
            });
        }
        let in_span = estimates
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| (e - c) * (e - c))
            .collect::<CompensatedSum>()
            .value();
        let out_span = self.coefficients[m..]
            .iter()
            .map(|c| c * c)
            .collect::<CompensatedSum>()
            .value();
        Ok(ErrorDecomposition {
            in_span,
            out_span,
            analytic_tail: self.analytic_tail(),
        })
    }

    /// Writes `k1,...,kd,coefficient` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.field.dim();
        let header: Vec<String> = (1..=d).map(|l| format!("k{l}")).collect();
        writeln!(w, "{},coefficient", header.join(","))?;
        for (k, c) in self.coefficients.iter().enumerate() {
            let idx: Vec<String> = self.field.index(k).iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{}", idx.join(","), crate::format_f64(*c))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gauss_legendre;
    use crate::seed::DOMAIN_FIELD;
    use crate::spectra::BasisFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn bm_field(d: usize, t: usize) -> Arc<Field> {
        Arc::new(Field::tensor(&UnivariateSpectrum::brownian_motion(), d, t).unwrap())
    }

    #[test]
    fn zero_spectrum_gives_zero_field() {
        let ranked = RankedSpectrum::from_sorted(vec![(vec![1], 0.0), (vec![2], 0.0)], 0.0, 1, true);
        let f = Arc::new(Field::new(&ranked, 2, Basis::new(BasisFamily::Sine)).unwrap());
        let fr = simulate(&f, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(fr.coefficients().iter().all(|&c| c == 0.0));
        assert_eq!(fr.eval_at(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn unit_variance_single_mode() {
        let ranked = RankedSpectrum::from_sorted(vec![(vec![1], 1.0)], 1.0, 1, true);
        let f = Field::new(&ranked, 1, Basis::new(BasisFamily::Sine)).unwrap();
        let b = f.coefficient_batch(3, DOMAIN_FIELD, 0, 10_000);
        let var = b.iter().map(|c| c * c).sum::<f64>() / 1e4;
        assert!((var - 1.0).abs() < 0.04, "{var}");
    }

    #[test]
    fn mean_square_norm_matches_mass() {
        let f = bm_field(1, 256);
        let b = f.coefficient_batch(5, DOMAIN_FIELD, 0, 1000);
        let norms: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mean = norms.iter().sum::<f64>() / 1000.0;
        let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        let retained = f.total_mass() - f.analytic_tail();
        assert!((mean - retained).abs() < 4.0 * (var / 1000.0).sqrt());
        assert!((retained + f.analytic_tail() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_tensor_mode_and_constant_mode() {
        let f = Arc::new(bm_field(2, 1).as_ref().clone());
        let fr = FieldRealization::from_coefficients(&f, vec![1.7]).unwrap();
        let (t1, t2) = (0.3, 0.8);
        let expected = 1.7 * 2.0 * (PI * t1 / 2.0).sin() * (PI * t2 / 2.0).sin();
        assert!((fr.eval_at(&[t1, t2]).unwrap() - expected).abs() < 1e-14);
        assert!(fr.eval_at(&[0.3]).is_err());

        let spec = UnivariateSpectrum::explicit(vec![0.5])
            .unwrap()
            .with_lambda0_sq(1.0)
            .unwrap()
            .with_basis(BasisFamily::Cosine);
        let model = AdditiveModel::new(3, 2, spec).unwrap();
        let ranked = model.merged_top_k(1).unwrap();
        assert_eq!(ranked.index(0), &vec![0, 0, 0]);
        let f = Arc::new(Field::new(&ranked, 1, model.spec().basis().clone()).unwrap());
        let fr = FieldRealization::from_coefficients(&f, vec![-0.4]).unwrap();
        for t in [[0.1, 0.5, 0.9], [0.0, 1.0, 0.3]] {
            assert_eq!(fr.eval_at(&t).unwrap(), -0.4);
        }
    }

    #[test]
    fn linearity_of_evaluation() {
        let f = bm_field(2, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = simulate(&f, &mut rng);
        let b = simulate(&f, &mut rng);
        let sum: Vec<f64> = a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| x + y).collect();
        let s = FieldRealization::from_coefficients(&f, sum).unwrap();
        for _ in 0..100 {
            let t = [rng.random::<f64>(), rng.random::<f64>()];
            let lhs = s.eval_at(&t).unwrap();
            let rhs = a.eval_at(&t).unwrap() + b.eval_at(&t).unwrap();
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn error_decomposition_cases() {
        let f = bm_field(1, 32);
        let fr = simulate(&f, &mut ChaCha8Rng::seed_from_u64(2));
        let c = fr.coefficients().to_vec();
        let exact = fr.exact_sq_error(&c[..8]).unwrap();
        assert_eq!(exact.in_span, 0.0);
        let zero = fr.exact_sq_error(&[0.0; 8]).unwrap();
        assert!((zero.retained() - fr.sq_norm()).abs() < 1e-15);
        let mut pert = c[..8].to_vec();
        pert[3] += 0.125;
        let e = fr.exact_sq_error(&pert).unwrap();
        assert!((e.in_span - 0.015625).abs() < 1e-16);
        assert_eq!(e.out_span, exact.out_span);
        assert!(fr.exact_sq_error(&[0.0; 40]).is_err());
    }

    #[test]
    fn seed_determinism() {
        let f = bm_field(2, 100);
        let a = simulate(&f, &mut ChaCha8Rng::seed_from_u64(4));
        let b = simulate(&f, &mut ChaCha8Rng::seed_from_u64(4));
        let bits = |x: &FieldRealization| x.coefficients().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn grid_norm_matches_coefficient_norm() {
        // Gauss-Legendre 128 x 128 product rule on [0,1]^2.
        let f = bm_field(2, 40);
        let fr = simulate(&f, &mut ChaCha8Rng::seed_from_u64(8));
        let (x, w) = gauss_legendre(128);
        let mut quad = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                let v = fr.eval_at(&[0.5 * (xi + 1.0), 0.5 * (xj + 1.0)]).unwrap();
                quad += 0.25 * wi * wj * v * v;
            }
        }
        let norm = fr.sq_norm();
        assert!((quad - norm).abs() < 1e-3 * norm, "{quad} {norm}");
    }

    #[test]
    fn realization_csv_layout() {
        let f = bm_field(2, 3);
        let fr = FieldRealization::from_coefficients(&f, vec![1.0, -0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        fr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k1,k2,coefficient");
        assert_eq!(lines[1], "1,1,1");
        assert_eq!(lines.len(), 4);
    }
}
