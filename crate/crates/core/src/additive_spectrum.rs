//! Spectra of additive random fields of order `b`.
//!
//! `X_{d,b}(t) = sum over b-subsets D of prod_{l in D} X_l(t_l)`, each
//! factor a copy of the univariate field including its constant mode
//! `lambda(0) phi_0`. Expanding the products groups the eigenvalues in
//! layers `h = 0..=b` (the number of non-constant coordinates): the
//! eigenvalue `C(d-h, b-h) lambda(0)^{2(b-h)} prod_{l<=h} lambda(k_l)^2`
//! occurs once for every h-subset of the `d` coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{binomial, binomial_u128, xlogy};
use crate::spectra::UnivariateSpectrum;
use crate::tensor_spectrum::{
    asymptotic_constants, AsymptoticConstants, MultiIndex, RankedSpectrum, TensorEnumerator,
    DEFAULT_ENTRY_CAP,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    d: usize,
    b: usize,
    spec: UnivariateSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HLayer {
    pub h: usize,
    /// `C(d-h, b-h) lambda(0)^{2(b-h)}`
    pub multiplier: f64,
    /// `C(d, h)`
    pub multiplicity: u128,
    /// `multiplier * multiplicity * Lambda_+^h`
    pub layer_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub m: usize,
    /// `m_h` for `h = 1..=b`
    pub m_h: Vec<usize>,
    /// `Q(h)` for `h = 1..=b`
    pub q_h: Vec<f64>,
    pub q: f64,
    pub r: f64,
    pub log_power: f64,
}

impl AllocationPlan {
    /// Both ends of the error display for this plan:
    /// `(2r-1)^{-1} sum_h Q(h) m_h^{1-2r} (ln m_h)^{2q}` and
    /// `Q m^{1-2r} (ln m)^{2q}`.
    pub fn display_chain(&self) -> (f64, f64) {
        let e = 1.0 - 2.0 * self.r;
        let lhs: f64 = self
            .q_h
            .iter()
            .zip(&self.m_h)
            .map(|(&q, &mh)| {
                let mh = mh as f64;
                q * mh.powf(e) * mh.ln().powf(self.log_power)
            })
            .sum::<f64>()
            / (2.0 * self.r - 1.0);
        let m = self.m as f64;
        (lhs, self.q * m.powf(e) * m.ln().powf(self.log_power))
    }

    /// The same comparison with the logarithmic factors left out, i.e. the
    /// algebraic step `sum_h Q(h) m_h^{1-2r} = (2r-1) Q m^{1-2r}` alone.
    pub fn display_chain_power_only(&self) -> (f64, f64) {
        let e = 1.0 - 2.0 * self.r;
        let lhs: f64 = self
            .q_h
            .iter()
            .zip(&self.m_h)
            .map(|(&q, &mh)| q * (mh as f64).powf(e))
            .sum::<f64>()
            / (2.0 * self.r - 1.0);
        (lhs, self.q * (self.m as f64).powf(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    pub power: f64,
    pub log_exp: f64,
}

impl AdditiveModel {
    pub fn new(d: usize, b: usize, spec: UnivariateSpectrum) -> Result<Self> {
        if b == 0 || b > d {
            return Err(invalid("b", format!("need 1 <= b <= d, got b = {b}, d = {d}")));
        }
        if !spec.basis().has_constant() {
            return Err(Error::Unsupported(format!(
                "additive fields need phi_0 = 1; the {} basis has no constant member",
                spec.basis().family().name()
            )));
        }
        Ok(AdditiveModel { d, b, spec })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn spec(&self) -> &UnivariateSpectrum {
        &self.spec
    }

    /// `Lambda_full = lambda(0)^2 + sum_{i>=1} lambda(i)^2`
    pub fn lambda_full(&self) -> f64 {
        self.spec.full_mass()
    }

    /// `E ||X_{d,b}||^2 = C(d, b) Lambda_full^b`
    pub fn total_variance(&self) -> f64 {
        binomial(self.d as u64, self.b as u64) * self.lambda_full().powi(self.b as i32)
    }

    pub fn layer(&self, h: usize) -> Result<HLayer> {
        if h > self.b {
            return Err(invalid("h", format!("layer {h} exceeds the order {}", self.b)));
        }
        let multiplier = binomial((self.d - h) as u64, (self.b - h) as u64)
            * self.spec.lambda0_sq().powi((self.b - h) as i32);
        let multiplicity = binomial_u128(self.d as u64, h as u64).ok_or_else(|| {
            Error::BudgetExceeded {
                limit: usize::MAX,
                context: format!("C({}, {h}) overflows", self.d),
            }
        })?;
        let layer_mass =
            multiplier * multiplicity as f64 * self.spec.total_mass().powi(h as i32);
        Ok(HLayer {
            h,
            multiplier,
            multiplicity,
            layer_mass,
        })
    }

    pub fn layers(&self) -> Result<Vec<HLayer>> {
        (0..=self.b).map(|h| self.layer(h)).collect()
    }

    /// `p = 1 - lambda(0)^2 / Lambda_full`
    pub fn p(&self) -> f64 {
        1.0 - self.spec.lambda0_sq() / self.lambda_full()
    }

    pub fn rate_exponents(&self) -> Result<RateExponents> {
        let (_, r, q) = self.spec.rate_params().ok_or_else(|| {
            Error::Unsupported("rate exponents need a power-log type spectrum".into())
        })?;
        if (q + r).abs() < 1e-12 * r {
            return Err(Error::Unsupported(
                "q = -r (alpha = -1) is excluded from the rate statements".into(),
            ));
        }
        let log_exp = if q > -r {
            2.0 * self.b as f64 * (r + q) - 1.0
        } else {
            2.0 * (q + r) - 1.0
        };
        Ok(RateExponents {
            power: 1.0 - 2.0 * r,
            log_exp,
        })
    }

    /// Quasi-optimal split of `m` spectral terms across the layers
    /// `h = 1..=b` when `alpha = q/r < -1`.
    pub fn allocation(&self, m: usize) -> Result<AllocationPlan> {
        let (_, r, q) = self.spec.rate_params().ok_or_else(|| {
            Error::Unsupported("allocation needs a power-log type spectrum".into())
        })?;
        if q / r >= -1.0 {
            return Err(Error::Unsupported(format!(
                "allocation is defined for alpha = q/r < -1 only, got {}",
                q / r
            )));
        }
        if m < self.b {
            return Err(invalid("m", format!("need m >= b = {}", self.b)));
        }
        let mut q_h = Vec::with_capacity(self.b);
        for h in 1..=self.b {
            let c: AsymptoticConstants = asymptotic_constants(&self.spec, h)?;
            let layer = self.layer(h)?;
            q_h.push(layer.multiplier * c.b_d * c.b_d * (layer.multiplicity as f64).powf(2.0 * r));
        }
        let roots: Vec<f64> = q_h.iter().map(|q| q.powf(0.5 / r)).collect();
        let total: f64 = roots.iter().sum();
        let m_h = roots
            .iter()
            .map(|w| (m as f64 * w / total).floor() as usize)
            .collect();
        Ok(AllocationPlan {
            m,
            m_h,
            q: total.powf(2.0 * r) / (2.0 * r - 1.0),
            q_h,
            r,
            log_power: 2.0 * q,
        })
    }

    /// `V` for this model, with `p` and `Lambda_tilde` taken over the
    /// spectrum including the constant mode.
    pub fn explosion_coefficient(&self, f: f64) -> Result<f64> {
        let lt = self.spec.spectral_moments_with_constant()?.lambda_tilde;
        explosion_coefficient(f, self.p(), lt)
    }

    /// The `eps -> 0` prediction `(d^b / b!) Lambda_full^{-b/(2r-1)} n_b(eps)`.
    pub fn cardinality_fixed_b(&self, eps: f64) -> Result<f64> {
        let nb = n_b_avr(&self.spec, self.b, eps)?;
        let (_, r, _) = self.spec.rate_params().expect("checked by n_b_avr");
        let b = self.b as i32;
        let fact: f64 = (1..=self.b).map(|k| k as f64).product();
        Ok((self.d as f64).powi(b) / fact
            * self.lambda_full().powf(-(b as f64) / (2.0 * r - 1.0))
            * nb)
    }

    /// Smallest number of terms whose omitted variance is at most
    /// `eps^2` times the total variance.
    pub fn cardinality_relative(&self, eps: f64) -> Result<u128> {
        crate::tensor_spectrum::check_eps(eps)?;
        let mut scan = crate::tensor_spectrum::ThresholdScan::new(self.total_variance(), eps);
        if scan.done_at_start() {
            return Ok(0);
        }
        let mut e = AdditiveEnumerator::new(self)?;
        let mut count = 0u128;
        while let Some((value, group)) = e.next_group()? {
            if let Some(m) = scan.feed(value, group.len() as u128) {
                return Ok(m);
            }
            count += group.len() as u128;
        }
        Ok(count)
    }

    /// The `n` largest covariance eigenvalues across all layers, each
    /// repeated once per coordinate subset.
    pub fn merged_top_k(&self, n: usize) -> Result<RankedSpectrum> {
        if n == 0 {
            return Err(invalid("N", "must be at least 1"));
        }
        let mut e = AdditiveEnumerator::new(self)?;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        while entries.len() < n {
            match e.next_entry()? {
                Some(x) => entries.push(x),
                None => break,
            }
        }
        let shortfall = entries.len() < n;
        let exhausted = shortfall || e.next_entry()?.is_none();
        let mut ranked =
            RankedSpectrum::from_sorted(entries, self.total_variance(), self.d, exhausted);
        if shortfall {
            ranked = ranked.with_shortfall();
        }
        Ok(ranked)
    }
}

/// `n_b(eps) = (B_b |ln eps|^{r beta} / (sqrt 2 (r - 1/2)^{r beta + 1/2} eps))^{1/(r - 1/2)}`
pub fn n_b_avr(spec: &UnivariateSpectrum, b: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfDomain {
            value: eps,
            domain: "(0, 1)",
        });
    }
    let c = asymptotic_constants(spec, b)?;
    let rb = c.r * c.beta;
    let base = c.b_d * eps.ln().abs().powf(rb)
        / (std::f64::consts::SQRT_2 * (c.r - 0.5).powf(rb + 0.5) * eps);
    Ok(base.powf(1.0 / (c.r - 0.5)))
}

/// `V = (1 - fp)^{fp - 1} f^{-fp} (1 - p)^{(1-p) f} Lambda_tilde^f`, with
/// `0^0 = 1`.
pub fn explosion_coefficient(f: f64, p: f64, lambda_tilde: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::OutOfDomain {
            value: f,
            domain: "[0, 1]",
        });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::OutOfDomain {
            value: p,
            domain: "(0, 1]",
        });
    }
    if !(lambda_tilde > 0.0 && lambda_tilde.is_finite()) {
        return Err(invalid("lambda_tilde", "must be positive"));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f == 1.0 {
        return Ok(lambda_tilde);
    }
    let fp = f * p;
    let ln_v = xlogy(fp - 1.0, 1.0 - fp) - xlogy(fp, f) + xlogy((1.0 - p) * f, 1.0 - p)
        + f * lambda_tilde.ln();
    Ok(ln_v.exp())
}

/// All `h`-subsets of `0..d` in lexicographic order.
fn subsets(d: usize, h: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..h).collect();
    loop {
        out.push(cur.clone());
        let mut i = h;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d - h + i {
                cur[i] += 1;
                for j in i + 1..h {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

struct LayerStream {
    h: usize,
    multiplier: f64,
    subsets: Vec<Vec<usize>>,
    inner: TensorEnumerator,
    head: Option<(f64, Vec<MultiIndex>)>,
}

impl LayerStream {
    fn refill(&mut self) -> Result<()> {
        self.head = self
            .inner
            .next_group()?
            .map(|(v, group)| (self.multiplier * v, group));
        Ok(())
    }
}

/// k-way merge of the per-layer rearrangements.
pub struct AdditiveEnumerator {
    d: usize,
    constant: Option<f64>,
    layers: Vec<LayerStream>,
    pending: std::collections::VecDeque<(MultiIndex, f64)>,
}

impl AdditiveEnumerator {
    pub fn new(model: &AdditiveModel) -> Result<Self> {
        let top = model.layer(0)?;
        let constant = (top.multiplier > 0.0).then_some(top.multiplier);
        let mut layers = Vec::new();
        for h in 1..=model.b {
            let layer = model.layer(h)?;
            if layer.multiplier == 0.0 {
                continue;
            }
            if layer.multiplicity > DEFAULT_ENTRY_CAP as u128 {
                return Err(Error::BudgetExceeded {
                    limit: DEFAULT_ENTRY_CAP,
                    context: format!("C({}, {h}) coordinate subsets", model.d),
                });
            }
            let mut s = LayerStream {
                h,
                multiplier: layer.multiplier,
                subsets: subsets(model.d, h),
                inner: TensorEnumerator::new(&model.spec, h)?,
                head: None,
            };
            s.refill()?;
            layers.push(s);
        }
        Ok(AdditiveEnumerator {
            d: model.d,
            constant,
            layers,
            pending: Default::default(),
        })
    }

    /// Next group of equal eigenvalues, ordered by layer and then by the
    /// full `d`-dimensional index.
    pub fn next_group(&mut self) -> Result<Option<(f64, Vec<MultiIndex>)>> {
        let best = self
            .layers
            .iter()
            .filter_map(|l| l.head.as_ref().map(|h| h.0))
            .chain(self.constant)
            .fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            return Ok(None);
        }
        let mut keyed: Vec<(usize, MultiIndex)> = Vec::new();
        if self.constant == Some(best) {
            keyed.push((0, vec![0; self.d]));
            self.constant = None;
        }
        for layer in &mut self.layers {
            while layer.head.as_ref().is_some_and(|h| h.0 == best) {
                let (_, group) = layer.head.take().expect("checked");
                if keyed.len() + group.len() * layer.subsets.len() > DEFAULT_ENTRY_CAP {
                    return Err(Error::BudgetExceeded {
                        limit: DEFAULT_ENTRY_CAP,
                        context: "tie group of an additive spectrum".into(),
                    });
                }
                for k in &group {
                    for s in &layer.subsets {
                        let mut full = vec![0u32; self.d];
                        for (pos, &c) in s.iter().zip(k) {
                            full[*pos] = c;
                        }
                        keyed.push((layer.h, full));
                    }
                }
                layer.refill()?;
            }
        }
        keyed.sort_unstable();
        Ok(Some((best, keyed.into_iter().map(|(_, k)| k).collect())))
    }

    pub fn next_entry(&mut self) -> Result<Option<(MultiIndex, f64)>> {
        if self.pending.is_empty() {
            match self.next_group()? {
                None => return Ok(None),
                Some((v, group)) => self.pending.extend(group.into_iter().map(|k| (k, v))),
            }
        }
        Ok(self.pending.pop_front())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::BasisFamily;
    use crate::tensor_spectrum::top_k;

    fn explicit(v: &[f64], l0: f64) -> UnivariateSpectrum {
        UnivariateSpectrum::explicit(v.to_vec())
            .unwrap()
            .with_lambda0_sq(l0)
            .unwrap()
            .with_basis(BasisFamily::Cosine)
    }

    fn pl(r: f64, q: f64, l0: f64) -> UnivariateSpectrum {
        UnivariateSpectrum::power_log(1.0, r, q)
            .unwrap()
            .with_lambda0_sq(l0)
            .unwrap()
            .with_basis(BasisFamily::Cosine)
    }

    #[test]
    fn layer_examples() {
        let m = AdditiveModel::new(3, 2, explicit(&[0.5], 1.0)).unwrap();
        let l = m.layer(1).unwrap();
        assert_eq!((l.multiplier, l.multiplicity), (2.0, 3));
        assert_eq!(m.layer(2).unwrap().multiplier, 1.0);
        let m = AdditiveModel::new(3, 2, explicit(&[0.5], 0.0)).unwrap();
        assert_eq!(m.layer(1).unwrap().multiplier, 0.0);
        assert!(m.layer(3).is_err());
    }

    #[test]
    fn construction_rejects_sine_basis_and_bad_order() {
        let s = UnivariateSpectrum::brownian_motion();
        assert!(matches!(AdditiveModel::new(3, 2, s), Err(Error::Unsupported(_))));
        assert!(AdditiveModel::new(3, 4, explicit(&[0.5], 0.0)).is_err());
        assert!(AdditiveModel::new(3, 0, explicit(&[0.5], 0.0)).is_err());
    }

    #[test]
    fn mass_conservation() {
        for d in 1..=12 {
            for b in 1..=d {
                let m = AdditiveModel::new(d, b, explicit(&[0.6, 0.3, 0.1], 0.7)).unwrap();
                let sum: f64 = m.layers().unwrap().iter().map(|l| l.layer_mass).sum();
                let total = m.total_variance();
                assert!((sum - total).abs() <= 1e-10 * total, "d={d} b={b}");
            }
        }
    }

    #[test]
    fn b1_merged_is_d_copies() {
        let atoms = [0.5, 0.3, 0.2];
        let m = AdditiveModel::new(3, 1, explicit(&atoms, 0.4)).unwrap();
        let r = m.merged_top_k(100).unwrap();
        let mut expected = vec![3.0 * 0.4];
        for a in atoms {
            expected.extend([a; 3]);
        }
        expected.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(r.values().collect::<Vec<_>>(), expected);
        assert!(r.is_shortfall());
        assert!(r.tail_after(r.len()) == 0.0);
    }

    #[test]
    fn d_equals_b_reduces_to_tensor() {
        let s = pl(1.0, 0.0, 0.0);
        let m = AdditiveModel::new(3, 3, s.clone()).unwrap();
        let merged = m.merged_top_k(200).unwrap();
        let tensor = top_k(&s, 3, 200).unwrap();
        assert_eq!(merged.entries(), tensor.entries());
    }

    #[test]
    fn d2_b2_exhaustive_table() {
        let (a, l0) = ([0.75, 0.25], 0.5);
        let m = AdditiveModel::new(2, 2, explicit(&a, l0)).unwrap();
        let mut all = Vec::new();
        for k1 in 0..=2usize {
            for k2 in 0..=2usize {
                let f = |k: usize| if k == 0 { l0 } else { a[k - 1] };
                all.push(f(k1) * f(k2));
            }
        }
        all.sort_by(|x, y| y.total_cmp(x));
        let r = m.merged_top_k(20).unwrap();
        let got: Vec<f64> = r.values().collect();
        assert_eq!(got.len(), 9);
        for (g, e) in got.iter().zip(&all) {
            assert!((g - e).abs() < 1e-16);
        }
        assert!((r.total_mass() - 1.5f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn allocation_examples() {
        let m = AdditiveModel::new(4, 1, pl(1.0, -2.0, 1.0)).unwrap();
        assert_eq!(m.allocation(1000).unwrap().m_h, vec![1000]);
        let m = AdditiveModel::new(4, 2, pl(1.0, -2.0, 1.0)).unwrap();
        let plan = m.allocation(1000).unwrap();
        assert_eq!(plan.m_h, vec![145, 854]);
        assert!((plan.q_h[1] - 1652.652_292_960_816_6).abs() < 1e-8);
        assert!((plan.q_h[0] - 48.0).abs() < 1e-9);
        assert!(plan.m_h.iter().sum::<usize>() <= 1000);
        // power part of the chain is an identity up to the floor
        let (l, r) = plan.display_chain_power_only();
        assert!((l / r - 1.0).abs() < 0.01);
        assert!(AdditiveModel::new(4, 2, pl(1.0, 0.0, 1.0)).unwrap().allocation(100).is_err());
    }

    #[test]
    fn rate_exponent_branches() {
        let m = AdditiveModel::new(5, 2, pl(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(m.rate_exponents().unwrap().log_exp, 3.0);
        let m = AdditiveModel::new(5, 3, pl(1.0, -2.0, 1.0)).unwrap();
        assert_eq!(m.rate_exponents().unwrap().log_exp, -3.0);
        let m = AdditiveModel::new(5, 1, pl(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(m.rate_exponents().unwrap().log_exp, 1.0);
        let m = AdditiveModel::new(5, 1, pl(1.0, -1.0, 1.0)).unwrap();
        assert!(m.rate_exponents().is_err());
    }

    #[test]
    fn explosion_endpoints_and_p1_formula() {
        assert_eq!(explosion_coefficient(0.0, 0.3, 2.5).unwrap(), 1.0);
        assert_eq!(explosion_coefficient(1.0, 0.3, 2.5).unwrap(), 2.5);
        let f: f64 = 0.3;
        let v = explosion_coefficient(f, 1.0, 2.5).unwrap();
        let expected = (1.0 - f).powf(f - 1.0) * f.powf(-f) * 2.5f64.powf(f);
        assert!((v - expected).abs() < 1e-14 * expected);
        assert!(explosion_coefficient(1.2, 0.5, 1.0).is_err());
        assert!(explosion_coefficient(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn explosion_is_continuous_in_f() {
        let (p, lt) = (0.6, 1.8);
        let mut prev = explosion_coefficient(0.0, p, lt).unwrap();
        for k in 1..=1000 {
            let v = explosion_coefficient(k as f64 / 1000.0, p, lt).unwrap();
            assert!((v - prev).abs() < 0.01, "jump at {k}");
            prev = v;
        }
        // refinement near the endpoints shrinks the gap
        for f0 in [0.0, 1.0] {
            let g1 = (explosion_coefficient((f0 - 1e-3f64).abs().min(1.0), p, lt).unwrap()
                - explosion_coefficient(f0, p, lt).unwrap())
            .abs();
            let g2 = (explosion_coefficient((f0 - 1e-7f64).abs().min(1.0), p, lt).unwrap()
                - explosion_coefficient(f0, p, lt).unwrap())
            .abs();
            assert!(g2 < g1 && g2 < 1e-4, "{f0}: {g1} {g2}");
        }
    }

    #[test]
    fn fixed_b_cardinality_scalings() {
        let s = pl(1.0, 0.0, 0.0);
        let eps = 0.01;
        let n1 = n_b_avr(&s, 1, eps).unwrap();
        assert!((n1 - 1.0 / (eps * eps)).abs() < 1e-6 * n1);
        let m = AdditiveModel::new(10, 2, pl(1.0, 0.0, 0.5)).unwrap();
        let m2 = AdditiveModel::new(20, 2, pl(1.0, 0.0, 0.5)).unwrap();
        let ratio = m2.cardinality_fixed_b(eps).unwrap() / m.cardinality_fixed_b(eps).unwrap();
        assert!((ratio - 4.0).abs() < 1e-12);
        let half = m.cardinality_fixed_b(eps / 2.0).unwrap() / m.cardinality_fixed_b(eps).unwrap();
        // x4 times a log correction (ln(2 eps)/ln(eps))^{...} > 1
        assert!(half > 4.0 && half < 6.0, "{half}");
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(4, 2)[1], vec![0, 2]);
        assert_eq!(subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn cardinality_full_order_matches_tensor() {
        let spec = UnivariateSpectrum::explicit(vec![0.75, 0.25])
            .unwrap()
            .with_basis(BasisFamily::Cosine);
        for d in [2, 4, 6] {
            let m = AdditiveModel::new(d, d, spec.clone()).unwrap();
            for eps in [0.3, 0.5] {
                let tensor = crate::tensor_spectrum::cardinality_relative(
                    &spec,
                    d,
                    eps,
                    crate::tensor_spectrum::CardinalityBackend::Heap,
                )
                .unwrap();
                assert_eq!(m.cardinality_relative(eps).unwrap(), tensor);
            }
        }
    }
}
