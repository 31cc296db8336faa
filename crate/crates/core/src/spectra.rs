//! Univariate Karhunen-Loeve spectra: eigenvalue sequences, orthonormal
//! bases on [0, 1], and the scalar spectral moments used by the
//! increasing-dimension results.
//!
//! Three eigenvalue families are supported:
//!
//! * `power_log`: `lambda(i)^2 = mu^2 i^{-2r} (ln(i+1))^{2q}`. The shifted
//!   logarithm keeps `i = 1` finite and positive while preserving the
//!   asymptotics `lambda(i) ~ mu i^{-r} (ln i)^q`.
//! * `explicit`: a finite list of eigenvalues, zeros allowed.
//! * `brownian_motion`: `lambda(i)^2 = 1 / (pi^2 (i - 1/2)^2)`, the exact
//!   spectrum of the covariance `min(s, t)`.
//!
//! Each spectrum carries a [`Basis`] and an optional `lambda0_sq`, the
//! variance attached to the constant function when the spectrum feeds an
//! additive field.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{gauss_legendre, series_sum};

/// Terms summed directly before the Euler-Maclaurin tail takes over.
const SERIES_CUTOFF: usize = 4096;
/// Grid used for tabulated CDFs of generic basis families.
const CDF_GRID: usize = 4096;
/// Bisection tolerance for inverse-CDF sampling.
const SAMPLE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Basis families
// ---------------------------------------------------------------------------

/// Orthonormal systems on L2[0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// `sqrt(2) sin((i - 1/2) pi t)`, `i >= 1`. Eigenfunctions of Brownian
    /// motion. Has no constant member.
    Sine,
    /// `phi_0 = 1`, `phi_i = sqrt(2) cos(i pi t)`.
    Cosine,
    /// Shifted orthonormal Legendre polynomials `sqrt(2i+1) P_i(2t - 1)`.
    Legendre,
}

impl BasisFamily {
    pub fn has_constant(self) -> bool {
        !matches!(self, BasisFamily::Sine)
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Sine => "sine",
            BasisFamily::Cosine => "cosine",
            BasisFamily::Legendre => "legendre",
        }
    }
}

/// Monotone piecewise-cubic CDF table.
#[derive(Debug)]
struct CdfTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CdfTable {
    fn eval(&self, x: f64) -> f64 {
        let g = CDF_GRID as f64;
        let pos = (x * g).clamp(0.0, g);
        let cell = (pos as usize).min(CDF_GRID - 1);
        let h = 1.0 / g;
        let s = pos - cell as f64;
        let (y0, y1) = (self.values[cell], self.values[cell + 1]);
        let (d0, d1) = (self.slopes[cell] * h, self.slopes[cell + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

/// A basis family together with lazily built CDF tables for the families
/// that have no closed-form `int_0^x phi_i^2`.
#[derive(Clone)]
pub struct Basis {
    family: BasisFamily,
    tables: Arc<RwLock<HashMap<usize, Arc<CdfTable>>>>,
}

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Basis").field(&self.family).finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

impl From<BasisFamily> for Basis {
    fn from(family: BasisFamily) -> Self {
        Basis::new(family)
    }
}

impl Basis {
    pub fn new(family: BasisFamily) -> Self {
        Basis {
            family,
            tables: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn has_constant(&self) -> bool {
        self.family.has_constant()
    }

    /// `phi_i(t)`. The sine family has no index 0 and yields NaN there.
    pub fn eval(&self, i: usize, t: f64) -> f64 {
        match self.family {
            BasisFamily::Sine => {
                if i == 0 {
                    f64::NAN
                } else {
                    SQRT_2 * ((i as f64 - 0.5) * PI * t).sin()
                }
            }
            BasisFamily::Cosine => {
                if i == 0 {
                    1.0
                } else {
                    SQRT_2 * (i as f64 * PI * t).cos()
                }
            }
            BasisFamily::Legendre => {
                let x = 2.0 * t - 1.0;
                let (mut p0, mut p1) = (1.0, x);
                if i == 0 {
                    return 1.0;
                }
                for k in 2..=i {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                (2.0 * i as f64 + 1.0).sqrt() * p1
            }
        }
    }

    /// Writes `phi_0(t), ..., phi_{out.len()-1}(t)` into `out`.
    pub fn fill_values(&self, t: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        match self.family {
            BasisFamily::Sine | BasisFamily::Cosine => {
                // Rotate e^{i theta} by e^{i pi t}; re-anchor periodically.
                let (offset, scale0) = if self.family == BasisFamily::Sine {
                    (-0.5, f64::NAN)
                } else {
                    (0.0, 1.0)
                };
                out[0] = scale0;
                let (ws, wc) = (PI * t).sin_cos();
                let (mut s, mut c) = (0.0, 0.0);
                for (i, slot) in out.iter_mut().enumerate().skip(1) {
                    if (i - 1) % 32 == 0 {
                        let (a, b) = ((i as f64 + offset) * PI * t).sin_cos();
                        s = a;
                        c = b;
                    } else {
                        let ns = s * wc + c * ws;
                        let nc = c * wc - s * ws;
                        s = ns;
                        c = nc;
                    }
                    *slot = SQRT_2 * if self.family == BasisFamily::Sine { s } else { c };
                }
            }
            BasisFamily::Legendre => {
                let x = 2.0 * t - 1.0;
                let (mut p0, mut p1) = (1.0, x);
                out[0] = 1.0;
                if out.len() > 1 {
                    out[1] = 3f64.sqrt() * x;
                }
                for k in 2..out.len() {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                    out[k] = (2.0 * kf + 1.0).sqrt() * p2;
                }
            }
        }
    }

    /// `F_i(x) = int_0^x phi_i(s)^2 ds` for `x` in [0, 1].
    pub fn sq_cdf(&self, i: usize, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain {
                value: x,
                domain: "[0, 1]",
            });
        }
        if i == 0 && !self.has_constant() {
            return Err(invalid("i", "sine basis has no index 0"));
        }
        Ok(self.sq_cdf_unchecked(i, x))
    }

    fn sq_cdf_unchecked(&self, i: usize, x: f64) -> f64 {
        if i == 0 {
            return x;
        }
        match self.family {
            BasisFamily::Sine => {
                let w = (2.0 * i as f64 - 1.0) * PI;
                x - (w * x).sin() / w
            }
            BasisFamily::Cosine => {
                let w = 2.0 * i as f64 * PI;
                x + (w * x).sin() / w
            }
            BasisFamily::Legendre => self.table(i).eval(x),
        }
    }

    fn table(&self, i: usize) -> Arc<CdfTable> {
        if let Some(t) = self.tables.read().expect("cdf cache poisoned").get(&i) {
            return Arc::clone(t);
        }
        let built = Arc::new(self.build_table(i));
        self.tables
            .write()
            .expect("cdf cache poisoned")
            .entry(i)
            .or_insert(built)
            .clone()
    }

    fn build_table(&self, i: usize) -> CdfTable {
        let (nodes, weights) = gauss_legendre(16);
        let h = 1.0 / CDF_GRID as f64;
        let mut values = Vec::with_capacity(CDF_GRID + 1);
        let mut acc = crate::numeric::CompensatedSum::new();
        values.push(0.0);
        for cell in 0..CDF_GRID {
            let a = cell as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let t = a + 0.5 * h * (x + 1.0);
                let v = self.eval(i, t);
                acc.add(0.5 * h * w * v * v);
            }
            values.push(acc.value());
        }
        let total = values[CDF_GRID];
        for v in &mut values {
            *v /= total;
        }
        let mut slopes: Vec<f64> = (0..=CDF_GRID)
            .map(|k| {
                let v = self.eval(i, k as f64 * h);
                v * v / total
            })
            .collect();
        // Fritsch-Carlson limiter keeps every cell monotone.
        for k in 0..CDF_GRID {
            let delta = (values[k + 1] - values[k]) / h;
            if delta <= 0.0 {
                slopes[k] = 0.0;
                slopes[k + 1] = 0.0;
                continue;
            }
            let a = slopes[k] / delta;
            let b = slopes[k + 1] / delta;
            let norm = a * a + b * b;
            if norm > 9.0 {
                let tau = 3.0 / norm.sqrt();
                slopes[k] = tau * a * delta;
                slopes[k + 1] = tau * b * delta;
            }
        }
        CdfTable { values, slopes }
    }

    /// One draw from the density `phi_i^2` on [0, 1] by bisection on the CDF.
    pub fn sample_sq<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<f64> {
        if i == 0 && !self.has_constant() {
            return Err(invalid("i", "sine basis has no index 0"));
        }
        Ok(self.sample_sq_unchecked(i, rng))
    }

    pub(crate) fn sample_sq_unchecked<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if i == 0 {
            return u;
        }
        let table = match self.family {
            BasisFamily::Legendre => Some(self.table(i)),
            _ => None,
        };
        let cdf = |x: f64| match &table {
            Some(t) => t.eval(x),
            None => self.sq_cdf_unchecked(i, x),
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > SAMPLE_TOL {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    PowerLog { mu: f64, r: f64, q: f64 },
    Explicit { values: Vec<f64> },
    BrownianMotion,
}

/// Eigenvalues `lambda(i)^2`, `i >= 1`, of a univariate covariance operator
/// plus its orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct UnivariateSpectrum {
    kind: SpectrumKind,
    lambda0_sq: f64,
    basis: Basis,
    /// Explicit spectra: nonzero `(index, value)` pairs in non-increasing order.
    sorted_explicit: Arc<Vec<(u32, f64)>>,
    /// Power-log: the sequence is non-increasing from this index on.
    monotone_from: usize,
    /// `sum_{i>=1} lambda(i)^2`.
    mass: f64,
}

impl PartialEq for UnivariateSpectrum {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.lambda0_sq == other.lambda0_sq && self.basis == other.basis
    }
}

/// The scalar moments of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMoments {
    /// `Lambda = sum lambda(i)^2`
    pub lambda: f64,
    /// `M = -sum ln lambda(i) lambda(i)^2 / Lambda`
    pub m: f64,
    /// `M_2 = sum |ln lambda(i)|^2 lambda(i)^2`
    pub m2: f64,
    /// `M_2 / Lambda - M^2`
    pub sigma_sq: f64,
    /// `Lambda e^{2M}`
    pub lambda_tilde: f64,
}

impl SpectralMoments {
    /// All nonzero eigenvalues are equal; the normal quantile downstream is
    /// then undefined.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_sq <= 1e-13 * (self.m2 / self.lambda).abs().max(f64::MIN_POSITIVE)
    }
}

impl UnivariateSpectrum {
    pub fn power_log(mu: f64, r: f64, q: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        if !r.is_finite() || !q.is_finite() {
            return Err(invalid("r", "r and q must be finite"));
        }
        if r <= 0.5 {
            return Err(Error::Divergent(format!(
                "sum of mu^2 i^(-2r) (ln(i+1))^(2q) diverges for r = {r} <= 1/2"
            )));
        }
        if q == r {
            return Err(invalid("q", "q = r is excluded"));
        }
        let ratio = q / r;
        if ratio > 16.0 {
            return Err(invalid("q", format!("q/r = {ratio} is too large to sort the spectrum")));
        }
        let monotone_from = if q > 0.0 { ratio.exp().ceil() as usize } else { 1 };
        let mut s = UnivariateSpectrum {
            kind: SpectrumKind::PowerLog { mu, r, q },
            lambda0_sq: 0.0,
            basis: Basis::new(BasisFamily::Sine),
            sorted_explicit: Arc::new(Vec::new()),
            monotone_from,
            mass: 0.0,
        };
        s.mass = s.series(|ln_l2| (1.0, ln_l2));
        Ok(s)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "explicit spectrum needs at least one value"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid("values", format!("eigenvalues must be finite and >= 0, got {v}")));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(invalid("values", "all eigenvalues are zero"));
        }
        let mut sorted: Vec<(u32, f64)> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (i as u32 + 1, v))
            .collect();
        sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mass = values.iter().sum();
        Ok(UnivariateSpectrum {
            kind: SpectrumKind::Explicit { values },
            lambda0_sq: 0.0,
            basis: Basis::new(BasisFamily::Sine),
            sorted_explicit: Arc::new(sorted),
            monotone_from: 1,
            mass,
        })
    }

    pub fn brownian_motion() -> Self {
        UnivariateSpectrum {
            kind: SpectrumKind::BrownianMotion,
            lambda0_sq: 0.0,
            basis: Basis::new(BasisFamily::Sine),
            sorted_explicit: Arc::new(Vec::new()),
            monotone_from: 1,
            mass: 0.5,
        }
    }

    pub fn with_lambda0_sq(mut self, lambda0_sq: f64) -> Result<Self> {
        if !(lambda0_sq.is_finite() && lambda0_sq >= 0.0) {
            return Err(invalid("lambda0_sq", format!("must be finite and >= 0, got {lambda0_sq}")));
        }
        self.lambda0_sq = lambda0_sq;
        Ok(self)
    }

    pub fn with_basis(mut self, family: BasisFamily) -> Self {
        self.basis = Basis::new(family);
        self
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn lambda0_sq(&self) -> f64 {
        self.lambda0_sq
    }

    /// Number of nonzero eigenvalues, `None` for infinite families.
    pub fn nonzero_count(&self) -> Option<usize> {
        match self.kind {
            SpectrumKind::Explicit { .. } => Some(self.sorted_explicit.len()),
            _ => None,
        }
    }

    /// `(mu, r, q)` of the power-log asymptotics, when the family has one.
    /// Brownian motion behaves like `mu = 1/pi`, `r = 1`, `q = 0`.
    pub fn rate_params(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            SpectrumKind::PowerLog { mu, r, q } => Some((mu, r, q)),
            SpectrumKind::BrownianMotion => Some((1.0 / PI, 1.0, 0.0)),
            SpectrumKind::Explicit { .. } => None,
        }
    }

    /// `lambda(i)^2` for `i >= 1`.
    pub fn eigenvalue_sq(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Err(invalid(
                "i",
                "index 0 is the constant mode; use lambda0_sq",
            ));
        }
        Ok(self.eigenvalue_sq_unchecked(i))
    }

    fn eigenvalue_sq_unchecked(&self, i: usize) -> f64 {
        match &self.kind {
            SpectrumKind::PowerLog { mu, r, q } => {
                let x = i as f64;
                let base = mu * mu * x.powf(-2.0 * r);
                if *q == 0.0 {
                    base
                } else {
                    base * (x + 1.0).ln().powf(2.0 * q)
                }
            }
            SpectrumKind::Explicit { values } => values.get(i - 1).copied().unwrap_or(0.0),
            SpectrumKind::BrownianMotion => {
                let h = i as f64 - 0.5;
                1.0 / (PI * PI * h * h)
            }
        }
    }

    /// `ln lambda(x)^2` at `x = e^lx` for the infinite families.
    fn ln_eigenvalue_sq(&self, lx: f64) -> f64 {
        match &self.kind {
            SpectrumKind::PowerLog { mu, r, q } => {
                let mut v = 2.0 * mu.ln() - 2.0 * r * lx;
                if *q != 0.0 {
                    let ln_x1 = lx + (-lx).exp().ln_1p();
                    v += 2.0 * q * ln_x1.ln();
                }
                v
            }
            SpectrumKind::BrownianMotion => {
                -2.0 * PI.ln() - 2.0 * (lx + (-0.5 * (-lx).exp()).ln_1p())
            }
            SpectrumKind::Explicit { .. } => unreachable!("explicit spectra are summed directly"),
        }
    }

    /// Sum over `i >= 1` of `g(ln lambda(i)^2)`, where `g` returns a
    /// `(sign, ln|term|)` pair.
    fn series<G: Fn(f64) -> (f64, f64)>(&self, g: G) -> f64 {
        let cutoff = SERIES_CUTOFF.max(4 * self.monotone_from);
        series_sum(|lx| g(self.ln_eigenvalue_sq(lx)), cutoff)
    }

    /// `Lambda = sum_{i>=1} lambda(i)^2`.
    pub fn total_mass(&self) -> f64 {
        self.mass
    }

    /// `lambda(0)^2 + sum_{i>=1} lambda(i)^2`, the total used by additive fields.
    pub fn full_mass(&self) -> f64 {
        self.lambda0_sq + self.mass
    }

    /// The first `count` eigenvalues in non-increasing order as
    /// `(original index, lambda^2)`. Ties keep the original order. Finite
    /// spectra may return fewer entries; zeros are never returned.
    pub fn sorted_eigenvalues(&self, count: usize) -> Vec<(u32, f64)> {
        match &self.kind {
            SpectrumKind::Explicit { .. } => {
                self.sorted_explicit.iter().take(count).copied().collect()
            }
            SpectrumKind::BrownianMotion => (1..=count)
                .map(|i| (i as u32, self.eigenvalue_sq_unchecked(i)))
                .collect(),
            SpectrumKind::PowerLog { .. } => {
                // Beyond `monotone_from` the sequence decreases, so the top
                // `count` of the first `monotone_from + count` are exact.
                let span = self.monotone_from + count;
                let mut all: Vec<(u32, f64)> = (1..=span)
                    .map(|i| (i as u32, self.eigenvalue_sq_unchecked(i)))
                    .collect();
                if self.monotone_from > 1 {
                    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                }
                all.truncate(count);
                all
            }
        }
    }

    /// Moments of the sequence `lambda(i)^2`, `i >= 1`.
    pub fn spectral_moments(&self) -> Result<SpectralMoments> {
        self.moments(false)
    }

    /// Moments of the sequence including the constant mode `lambda(0)^2`,
    /// the convention used for additive fields.
    pub fn spectral_moments_with_constant(&self) -> Result<SpectralMoments> {
        self.moments(true)
    }

    fn moments(&self, with_constant: bool) -> Result<SpectralMoments> {
        let extra: Vec<f64> = if with_constant && self.lambda0_sq > 0.0 {
            vec![self.lambda0_sq]
        } else {
            Vec::new()
        };
        match &self.kind {
            SpectrumKind::Explicit { values } => {
                let atoms: Vec<f64> = extra
                    .iter()
                    .chain(values.iter())
                    .copied()
                    .filter(|&v| v > 0.0)
                    .collect();
                Ok(finite_moments(&atoms))
            }
            _ => {
                let lambda = self.mass + extra.iter().sum::<f64>();
                let weighted_log = |ln_l2: f64| {
                    // -ln(lambda) lambda^2 / Lambda
                    let a = -0.5 * ln_l2;
                    (a.signum(), a.abs().ln() + ln_l2 - lambda.ln())
                };
                let mut m = self.series(weighted_log);
                for &x in &extra {
                    m += -0.5 * x.ln() * x / lambda;
                }
                let mut m2 = self.series(|ln_l2: f64| {
                    let a = 0.5 * ln_l2;
                    (1.0, 2.0 * a.abs().ln() + ln_l2)
                });
                let mut centered = self.series(|ln_l2: f64| {
                    let a = -0.5 * ln_l2 - m;
                    (1.0, 2.0 * a.abs().ln() + ln_l2 - lambda.ln())
                });
                for &x in &extra {
                    let l = 0.5 * x.ln();
                    m2 += l * l * x;
                    centered += (-l - m) * (-l - m) * x / lambda;
                }
                Ok(SpectralMoments {
                    lambda,
                    m,
                    m2,
                    sigma_sq: centered.max(0.0),
                    lambda_tilde: lambda * (2.0 * m).exp(),
                })
            }
        }
    }
}

/// Moments of a finite list of positive eigenvalues, left-to-right sums.
fn finite_moments(atoms: &[f64]) -> SpectralMoments {
    let lambda: f64 = atoms.iter().sum();
    let m: f64 = -atoms.iter().map(|&x| 0.5 * x.ln() * x / lambda).sum::<f64>();
    let m2: f64 = atoms
        .iter()
        .map(|&x| {
            let l = 0.5 * x.ln();
            l * l * x
        })
        .sum();
    let sigma_sq: f64 = atoms
        .iter()
        .map(|&x| {
            let c = -0.5 * x.ln() - m;
            c * c * x / lambda
        })
        .sum();
    SpectralMoments {
        lambda,
        m,
        m2,
        sigma_sq,
        lambda_tilde: lambda * (2.0 * m).exp(),
    }
}

/// Serializable description of a spectrum, as accepted by the CLI and the
/// C interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    PowerLog {
        mu: f64,
        r: f64,
        q: f64,
        #[serde(default)]
        lambda0_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<BasisFamily>,
    },
    Explicit {
        values: Vec<f64>,
        #[serde(default)]
        lambda0_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<BasisFamily>,
    },
    BrownianMotion {
        #[serde(default)]
        lambda0_sq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<BasisFamily>,
    },
}

impl SpectrumConfig {
    pub fn basis(&self) -> Option<BasisFamily> {
        match self {
            SpectrumConfig::PowerLog { basis, .. }
            | SpectrumConfig::Explicit { basis, .. }
            | SpectrumConfig::BrownianMotion { basis, .. } => *basis,
        }
    }

    /// Builds the spectrum; `default_basis` applies when the description
    /// does not name one.
    pub fn build(&self, default_basis: BasisFamily) -> Result<UnivariateSpectrum> {
        let family = self.basis().unwrap_or(default_basis);
        let (spec, l0) = match self {
            SpectrumConfig::PowerLog {
                mu, r, q, lambda0_sq, ..
            } => (UnivariateSpectrum::power_log(*mu, *r, *q)?, *lambda0_sq),
            SpectrumConfig::Explicit {
                values, lambda0_sq, ..
            } => (UnivariateSpectrum::explicit(values.clone())?, *lambda0_sq),
            SpectrumConfig::BrownianMotion { lambda0_sq, .. } => {
                (UnivariateSpectrum::brownian_motion(), *lambda0_sq)
            }
        };
        Ok(spec.with_lambda0_sq(l0)?.with_basis(family))
    }
}

impl std::str::FromStr for SpectrumConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigenvalue_examples() {
        let p = UnivariateSpectrum::power_log(1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.eigenvalue_sq(2).unwrap(), 0.25);
        let bm = UnivariateSpectrum::brownian_motion();
        assert!((bm.eigenvalue_sq(1).unwrap() - 4.0 / (PI * PI)).abs() < 1e-16);
        let e = UnivariateSpectrum::explicit(vec![0.75, 0.25]).unwrap();
        assert_eq!(e.eigenvalue_sq(2).unwrap(), 0.25);
        assert_eq!(e.eigenvalue_sq(3).unwrap(), 0.0);
        assert!(p.eigenvalue_sq(0).is_err());
    }

    #[test]
    fn construction_guards() {
        assert!(matches!(
            UnivariateSpectrum::power_log(1.0, 0.5, 0.0),
            Err(Error::Divergent(_))
        ));
        assert!(UnivariateSpectrum::power_log(1.0, 1.0, 1.0).is_err());
        // alpha = -1 is legal at construction
        assert!(UnivariateSpectrum::power_log(1.0, 1.0, -1.0).is_ok());
        assert!(UnivariateSpectrum::explicit(vec![]).is_err());
        assert!(UnivariateSpectrum::explicit(vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn power_log_asymptotic_ratio() {
        let (mu, r, q) = (1.3, 0.8, 1.5);
        let p = UnivariateSpectrum::power_log(mu, r, q).unwrap();
        let i = 1_000_000usize;
        let x = i as f64;
        let asym = mu * mu * x.powf(-2.0 * r) * x.ln().powf(2.0 * q);
        let ratio = p.eigenvalue_sq(i).unwrap() / asym;
        assert!((0.99..=1.01).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sorted_power_log_with_rising_prefix() {
        // q/r = 2: the sequence rises until about i = e^2.
        let p = UnivariateSpectrum::power_log(1.0, 1.0, 2.0).unwrap();
        let sorted = p.sorted_eigenvalues(50);
        let mut brute: Vec<(u32, f64)> = (1..=2000u32)
            .map(|i| (i, p.eigenvalue_sq(i as usize).unwrap()))
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(sorted, brute[..50].to_vec());
        assert_ne!(sorted[0].0, 1);
    }

    #[test]
    fn masses() {
        let p = UnivariateSpectrum::power_log(1.0, 1.0, 0.0).unwrap();
        assert!((p.total_mass() - PI * PI / 6.0).abs() < 1e-14);
        let bm = UnivariateSpectrum::brownian_motion()
            .with_lambda0_sq(0.25)
            .unwrap();
        assert_eq!(bm.total_mass(), 0.5);
        assert_eq!(bm.full_mass(), 0.75);
    }

    #[test]
    fn moments_examples() {
        let m = UnivariateSpectrum::explicit(vec![0.5, 0.5])
            .unwrap()
            .spectral_moments()
            .unwrap();
        assert_eq!(m.lambda, 1.0);
        assert!((m.m - 0.5 * 2f64.ln()).abs() < 1e-16);
        assert!((m.lambda_tilde - 2.0).abs() < 1e-15);
        assert_eq!(m.sigma_sq, 0.0);
        assert!(m.is_degenerate());

        let m = UnivariateSpectrum::explicit(vec![0.75, 0.25])
            .unwrap()
            .spectral_moments()
            .unwrap();
        // independent evaluation of the defining sums (Python, double precision)
        assert!((m.m - 0.28116757230940426).abs() < 1e-15);
        assert!((m.lambda_tilde - 1.7547653506033236).abs() < 1e-14);
        assert!((m.sigma_sq - 0.05657573253808974).abs() < 1e-15);
        assert!(!m.is_degenerate());
        assert_eq!(m.lambda_tilde, m.lambda * (2.0 * m.m).exp());

        let m = UnivariateSpectrum::explicit(vec![1.0])
            .unwrap()
            .spectral_moments()
            .unwrap();
        assert_eq!((m.lambda, m.m, m.lambda_tilde, m.sigma_sq), (1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn explicit_moments_match_brute_force_bitwise() {
        let vals = vec![0.4, 0.3, 0.0, 0.2, 0.1];
        let m = UnivariateSpectrum::explicit(vals.clone())
            .unwrap()
            .spectral_moments()
            .unwrap();
        let nz: Vec<f64> = vals.into_iter().filter(|&v| v > 0.0).collect();
        let lam: f64 = nz.iter().sum();
        let mm: f64 = -nz.iter().map(|&x| 0.5 * x.ln() * x / lam).sum::<f64>();
        let m2: f64 = nz.iter().map(|&x| (0.5 * x.ln()).powi(2) * x).sum();
        assert_eq!(m.lambda.to_bits(), lam.to_bits());
        assert_eq!(m.m.to_bits(), mm.to_bits());
        assert_eq!(m.m2.to_bits(), m2.to_bits());
        assert_eq!(m.lambda_tilde.to_bits(), (lam * (2.0 * mm).exp()).to_bits());
        assert!((m.sigma_sq - (m2 / lam - mm * mm)).abs() < 1e-15);
    }

    #[test]
    fn series_moments_agree_with_long_direct_sums() {
        // Brownian motion: closed-form mass 1/2; direct summation to 2e6
        // plus an integral tail estimate as the oracle for M.
        let bm = UnivariateSpectrum::brownian_motion();
        let m = bm.spectral_moments().unwrap();
        assert!((m.lambda - 0.5).abs() < 1e-15);
        let n = 2_000_000usize;
        let mut direct = 0.0;
        for i in (1..=n).rev() {
            let x = bm.eigenvalue_sq(i).unwrap();
            direct += -0.5 * x.ln() * x / 0.5;
        }
        // tail of (ln(pi x)) / (pi^2 x^2) / 0.5 beyond n, integrated by hand
        let xn = n as f64 + 0.5;
        let tail = 2.0 * ((PI * xn).ln() + 1.0) / (PI * PI * xn);
        assert!((m.m - (direct + tail)).abs() < 1e-9, "{} vs {}", m.m, direct + tail);
        assert!(m.sigma_sq > 0.0);
    }

    #[test]
    fn trig_cdf_closed_form_matches_quadrature() {
        let basis = Basis::new(BasisFamily::Sine);
        let (x, w) = gauss_legendre(64);
        for i in [1usize, 2, 7] {
            for &upper in &[0.13, 0.5, 0.77, 1.0] {
                let quad: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| {
                        let t = 0.5 * upper * (x + 1.0);
                        0.5 * upper * w * basis.eval(i, t).powi(2)
                    })
                    .sum();
                let closed = basis.sq_cdf(i, upper).unwrap();
                let formula = upper
                    - ((2.0 * i as f64 - 1.0) * PI * upper).sin() / ((2.0 * i as f64 - 1.0) * PI);
                assert!((closed - quad).abs() < 1e-10);
                assert_eq!(closed, formula);
            }
            assert!((basis.sq_cdf(i, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let cos = Basis::new(BasisFamily::Cosine);
        assert_eq!(cos.sq_cdf(0, 0.3).unwrap(), 0.3);
        assert!(basis.sq_cdf(1, 1.5).is_err());
        assert!(basis.sq_cdf(0, 0.5).is_err());
    }

    #[test]
    fn legendre_table_cdf_is_monotone_and_accurate() {
        let basis = Basis::new(BasisFamily::Legendre);
        let (x, w) = gauss_legendre(64);
        for i in [1usize, 3, 10] {
            let mut prev = 0.0;
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let f = basis.sq_cdf(i, t).unwrap();
                assert!(f >= prev - 1e-15);
                prev = f;
            }
            let quad: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| {
                    let t = 0.5 * 0.37 * (x + 1.0);
                    0.5 * 0.37 * w * basis.eval(i, t).powi(2)
                })
                .sum();
            assert!((basis.sq_cdf(i, 0.37).unwrap() - quad).abs() < 1e-9);
            assert_eq!(basis.sq_cdf(i, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn orthonormality_on_gauss_legendre_256() {
        let (x, w) = gauss_legendre(256);
        for family in [BasisFamily::Sine, BasisFamily::Cosine, BasisFamily::Legendre] {
            let basis = Basis::new(family);
            let start = if family.has_constant() { 0 } else { 1 };
            for i in start..12 {
                for j in start..12 {
                    let ip: f64 = x
                        .iter()
                        .zip(&w)
                        .map(|(x, w)| {
                            let t = 0.5 * (x + 1.0);
                            0.5 * w * basis.eval(i, t) * basis.eval(j, t)
                        })
                        .sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - target).abs() < 1e-8, "{family:?} {i} {j} {ip}");
                }
            }
        }
    }

    #[test]
    fn fill_values_matches_eval() {
        for family in [BasisFamily::Sine, BasisFamily::Cosine, BasisFamily::Legendre] {
            let basis = Basis::new(family);
            let mut buf = vec![0.0; 300];
            for &t in &[0.0, 0.123, 0.5, 0.999, 1.0] {
                basis.fill_values(t, &mut buf);
                for (i, v) in buf.iter().enumerate().skip(1) {
                    assert!((v - basis.eval(i, t)).abs() < 1e-11, "{family:?} {i} {t}");
                }
            }
        }
    }

    #[test]
    fn sampling_constant_basis_is_uniform() {
        let basis = Basis::new(BasisFamily::Cosine);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| basis.sample_sq(0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn sampling_trig_matches_cdf_ks() {
        let basis = Basis::new(BasisFamily::Sine);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| basis.sample_sq(1, &mut rng).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = basis.sq_cdf(1, x).unwrap();
                (f - k as f64 / n as f64).abs().max((f - (k + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn sampling_moments_within_four_standard_errors() {
        let (gx, gw) = gauss_legendre(128);
        for family in [BasisFamily::Sine, BasisFamily::Legendre] {
            let basis = Basis::new(family);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let i = 3;
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| basis.sample_sq(i, &mut rng).unwrap()).collect();
            for k in 1..=2 {
                let exact = |p: i32| -> f64 {
                    gx.iter()
                        .zip(&gw)
                        .map(|(x, w)| {
                            let t = 0.5 * (x + 1.0);
                            0.5 * w * t.powi(p) * basis.eval(i, t).powi(2)
                        })
                        .sum()
                };
                let mean = exact(k);
                let var = exact(2 * k) - mean * mean;
                let emp = xs.iter().map(|x| x.powi(k)).sum::<f64>() / n as f64;
                let se = (var / n as f64).sqrt();
                assert!((emp - mean).abs() < 4.0 * se, "{family:?} k={k}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let basis = Basis::new(BasisFamily::Sine);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| basis.sample_sq(2, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn config_parses_interface_forms() {
        let c: SpectrumConfig =
            r#"{"kind":"power_log","mu":1.0,"r":1.0,"q":0.0,"lambda0_sq":0.0}"#.parse().unwrap();
        let s = c.build(BasisFamily::Sine).unwrap();
        assert_eq!(s.eigenvalue_sq(2).unwrap(), 0.25);
        let c: SpectrumConfig = r#"{"kind":"explicit","values":[0.75,0.25],"basis":"cosine"}"#
            .parse()
            .unwrap();
        assert_eq!(c.build(BasisFamily::Sine).unwrap().basis().family(), BasisFamily::Cosine);
        let c: SpectrumConfig = r#"{"kind":"brownian_motion"}"#.parse().unwrap();
        assert_eq!(c.build(BasisFamily::Sine).unwrap().total_mass(), 0.5);
        assert!(r#"{"kind":"power_log","mu":1.0,"q":0.0}"#.parse::<SpectrumConfig>().is_err());
    }
}
