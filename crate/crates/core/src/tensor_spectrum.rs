//! Decreasing rearrangement of tensor-product eigenvalue arrays.
//!
//! The eigenvalues of a `d`-fold tensor-product covariance are the products
//! `prod_l lambda(k_l)^2`. [`TensorEnumerator`] streams them in
//! non-increasing order with a best-first search over the lattice of
//! univariate ranks. Every lattice point is reached through exactly one
//! parent (decrement the last nonzero rank coordinate), so the frontier
//! needs no visited set.
//!
//! Products are formed from factors sorted in decreasing order, so
//! permutations of a multi-index give bit-identical values and ties are
//! exact. Ties are reported in lexicographic order of the original
//! multi-index.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::numeric::{binomial_u128, normal_tail_inv, series_sum_weighted, CompensatedSum};
use crate::spectra::{SpectrumKind, UnivariateSpectrum};

/// Largest number of lattice entries held at once by an enumeration.
pub const DEFAULT_ENTRY_CAP: usize = 10_000_000;

/// `(k_1, ..., k_d)`. Coordinate 0 denotes the constant function and only
/// occurs in additive fields.
pub type MultiIndex = Vec<u32>;

/// Product of the factors, multiplied in decreasing order.
pub fn canonical_product(factors: &mut [f64]) -> f64 {
    factors.sort_by(|a, b| b.total_cmp(a));
    factors.iter().fold(1.0, |acc, v| acc * v)
}

#[derive(Debug, Clone)]
struct Node {
    value: f64,
    ranks: Box<[u32]>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

/// Streams the products `prod_l lambda(k_l)^2` in non-increasing order.
#[derive(Debug, Clone)]
pub struct TensorEnumerator {
    spec: UnivariateSpectrum,
    dim: usize,
    atoms: Vec<(u32, f64)>,
    atoms_complete: bool,
    heap: BinaryHeap<Node>,
    pending: VecDeque<(MultiIndex, f64)>,
    emitted: usize,
    cap: usize,
}

impl TensorEnumerator {
    pub fn new(spec: &UnivariateSpectrum, dim: usize) -> Result<Self> {
        Self::with_cap(spec, dim, DEFAULT_ENTRY_CAP)
    }

    pub fn with_cap(spec: &UnivariateSpectrum, dim: usize, cap: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let (atoms, atoms_complete) = match spec.nonzero_count() {
            Some(n) => (spec.sorted_eigenvalues(n), true),
            None => (spec.sorted_eigenvalues(64), false),
        };
        let mut e = TensorEnumerator {
            spec: spec.clone(),
            dim,
            atoms,
            atoms_complete,
            heap: BinaryHeap::new(),
            pending: VecDeque::new(),
            emitted: 0,
            cap,
        };
        if !e.atoms.is_empty() {
            let ranks = vec![0u32; dim].into_boxed_slice();
            let value = e.value_of(&ranks);
            e.heap.push(Node { value, ranks });
        }
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Makes rank `r` available; false when the spectrum has fewer nonzero terms.
    fn ensure_rank(&mut self, r: usize) -> bool {
        while r >= self.atoms.len() {
            if self.atoms_complete {
                return false;
            }
            let want = (2 * self.atoms.len()).max(r + 1);
            self.atoms = self.spec.sorted_eigenvalues(want);
            if self.atoms.len() < want {
                self.atoms_complete = true;
            }
        }
        true
    }

    fn value_of(&self, ranks: &[u32]) -> f64 {
        let mut sorted: Vec<u32> = ranks.to_vec();
        sorted.sort_unstable();
        sorted
            .iter()
            .fold(1.0, |acc, &r| acc * self.atoms[r as usize].1)
    }

    fn push_children(&mut self, ranks: &[u32]) -> Result<()> {
        let last = ranks.iter().rposition(|&r| r > 0).unwrap_or(0);
        for pos in last..self.dim {
            let next = ranks[pos] as usize + 1;
            if !self.ensure_rank(next) {
                continue;
            }
            let mut child = ranks.to_vec().into_boxed_slice();
            child[pos] += 1;
            let value = self.value_of(&child);
            if value == 0.0 {
                continue;
            }
            if self.heap.len() + self.emitted >= self.cap {
                return Err(Error::BudgetExceeded {
                    limit: self.cap,
                    context: format!("tensor rearrangement in dimension {}", self.dim),
                });
            }
            self.heap.push(Node {
                value,
                ranks: child,
            });
        }
        Ok(())
    }

    /// The next group of equal products as `(value, indices)`, indices in
    /// lexicographic order.
    pub fn next_group(&mut self) -> Result<Option<(f64, Vec<MultiIndex>)>> {
        if !self.pending.is_empty() {
            let v = self.pending[0].1;
            let group: Vec<MultiIndex> = self.pending.drain(..).map(|(k, _)| k).collect();
            return Ok(Some((v, group)));
        }
        let Some(first) = self.heap.pop() else {
            return Ok(None);
        };
        let value = first.value;
        self.push_children(&first.ranks)?;
        let mut group = vec![first.ranks];
        while self.heap.peek().is_some_and(|n| n.value == value) {
            let node = self.heap.pop().expect("peeked");
            self.push_children(&node.ranks)?;
            group.push(node.ranks);
        }
        let mut indices: Vec<MultiIndex> = group
            .iter()
            .map(|ranks| ranks.iter().map(|&r| self.atoms[r as usize].0).collect())
            .collect();
        indices.sort_unstable();
        self.emitted += indices.len();
        Ok(Some((value, indices)))
    }

    /// The next single product.
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

/// A prefix of a decreasing rearrangement together with the analytic total.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSpectrum {
    entries: Vec<(MultiIndex, f64)>,
    cumsum: Vec<f64>,
    total_mass: f64,
    dim: usize,
    exhausted: bool,
    shortfall: bool,
}

impl RankedSpectrum {
    /// Builds from entries already sorted non-increasingly. `exhausted`
    /// states that the entries are all nonzero eigenvalues.
    pub fn from_sorted(
        entries: Vec<(MultiIndex, f64)>,
        total_mass: f64,
        dim: usize,
        exhausted: bool,
    ) -> Self {
        let mut acc = CompensatedSum::new();
        let mut cumsum = Vec::with_capacity(entries.len() + 1);
        cumsum.push(0.0);
        for (_, v) in &entries {
            acc.add(*v);
            cumsum.push(acc.value());
        }
        RankedSpectrum {
            entries,
            cumsum,
            total_mass,
            dim,
            exhausted,
            shortfall: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(MultiIndex, f64)] {
        &self.entries
    }

    pub fn value(&self, j: usize) -> f64 {
        self.entries[j].1
    }

    pub fn index(&self, j: usize) -> &MultiIndex {
        &self.entries[j].0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    /// Total variance of the field, the sum of all eigenvalues.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Fewer nonzero eigenvalues exist than were requested.
    pub fn is_shortfall(&self) -> bool {
        self.shortfall
    }

    pub(crate) fn with_shortfall(mut self) -> Self {
        self.shortfall = true;
        self
    }

    /// The entries are all nonzero eigenvalues of the field.
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Sum of the first `m` entries (`m` clamped to the stored length).
    pub fn partial_sum(&self, m: usize) -> f64 {
        self.cumsum[m.min(self.entries.len())]
    }

    /// `total_mass - partial_sum(m)`, never negative, exactly zero once an
    /// exhausted spectrum is fully consumed.
    pub fn tail_after(&self, m: usize) -> f64 {
        if self.exhausted && m >= self.entries.len() {
            return 0.0;
        }
        (self.total_mass - self.partial_sum(m)).max(0.0)
    }

    /// The first `m` entries as a new ranked spectrum with the same total.
    pub fn truncated(&self, m: usize) -> RankedSpectrum {
        let m = m.min(self.entries.len());
        RankedSpectrum {
            entries: self.entries[..m].to_vec(),
            cumsum: self.cumsum[..=m].to_vec(),
            total_mass: self.total_mass,
            dim: self.dim,
            exhausted: self.exhausted && m == self.entries.len(),
            shortfall: false,
        }
    }
}

/// `Lambda^d`.
pub fn tensor_total_mass(spec: &UnivariateSpectrum, d: usize) -> f64 {
    spec.total_mass().powi(d as i32)
}

/// The `n` largest products with their multi-indices.
pub fn top_k(spec: &UnivariateSpectrum, d: usize, n: usize) -> Result<RankedSpectrum> {
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    let mut e = TensorEnumerator::new(spec, d)?;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    while entries.len() < n {
        match e.next_entry()? {
            Some(x) => entries.push(x),
            None => break,
        }
    }
    let shortfall = entries.len() < n;
    let exhausted = shortfall || e.next_entry()?.is_none();
    let ranked = RankedSpectrum::from_sorted(entries, tensor_total_mass(spec, d), d, exhausted);
    Ok(if shortfall { ranked.with_shortfall() } else { ranked })
}

/// `sum_{j > m} lambda_bar_j^2`.
pub fn tail_sum(spec: &UnivariateSpectrum, d: usize, m: usize) -> Result<f64> {
    if m == 0 {
        return Ok(tensor_total_mass(spec, d));
    }
    Ok(top_k(spec, d, m)?.tail_after(m))
}

// ---------------------------------------------------------------------------
// Asymptotic constants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    AlphaGtNeg1,
    AlphaLtNeg1,
}

/// Constants of the power-log asymptotics
/// `lambda_bar_j ~ B_d j^{-r} (ln j)^{r beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub alpha: f64,
    pub beta: f64,
    pub b_d: f64,
    pub branch: Branch,
    pub mu: f64,
    pub r: f64,
    pub q: f64,
    pub d: usize,
}

impl AsymptoticConstants {
    /// Log exponent of the tail sum, `2 r beta`.
    pub fn tail_log_exponent(&self) -> f64 {
        2.0 * self.r * self.beta
    }

    /// Log exponent of the convergence rate in the total number of points,
    /// `2r(beta + 1) - 1`.
    pub fn rate_log_exponent(&self) -> f64 {
        2.0 * self.r * (self.beta + 1.0) - 1.0
    }

    /// `B_d^2 j^{-2r} (ln j)^{2 r beta}`.
    pub fn predicted_eigenvalue_sq(&self, j: f64) -> f64 {
        self.b_d * self.b_d * j.powf(-2.0 * self.r) * j.ln().powf(2.0 * self.r * self.beta)
    }
}

/// Gamma function, exact at small positive integers.
fn gamma_fn(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=30.0).contains(&x) {
        (2..x as u64).fold(1.0, |acc, k| acc * k as f64)
    } else {
        gamma(x)
    }
}

/// `sum_i lambda(i)^{1/r}` for the spectrum.
pub fn lambda_power_sum(spec: &UnivariateSpectrum, r: f64) -> Result<f64> {
    match spec.kind() {
        SpectrumKind::Explicit { values } => Ok(values.iter().map(|v| v.powf(0.5 / r)).sum()),
        SpectrumKind::PowerLog { mu, r: rr, q } => {
            let (mu, rr, q) = (*mu, *rr, *q);
            if q / rr >= -1.0 {
                return Err(Error::Divergent(
                    "sum of lambda(i)^(1/r) diverges unless q/r < -1".into(),
                ));
            }
            // x lambda(x)^{1/r} = mu^{1/r} x^{1 - rr/r} (ln(x+1))^{q/r}
            let slope = 1.0 - rr / r;
            Ok(series_sum_weighted(
                |lx: f64| {
                    let ln_x1 = lx + (-lx).exp().ln_1p();
                    let power = if slope == 0.0 { 0.0 } else { slope * lx };
                    (1.0, mu.ln() / r + power + (q / r) * ln_x1.ln())
                },
                4096,
            ))
        }
        SpectrumKind::BrownianMotion => Err(Error::Divergent(
            "sum of lambda(i) diverges for Brownian motion".into(),
        )),
    }
}

pub fn asymptotic_constants(spec: &UnivariateSpectrum, d: usize) -> Result<AsymptoticConstants> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    let (mu, r, q) = spec.rate_params().ok_or_else(|| {
        Error::Unsupported("asymptotic constants need a power-log type spectrum".into())
    })?;
    let alpha = q / r;
    if (alpha + 1.0).abs() < 1e-12 {
        return Err(Error::Unsupported(
            "alpha = q/r = -1 is excluded from the rearrangement asymptotics".into(),
        ));
    }
    let df = d as f64;
    if alpha > -1.0 {
        let beta = (df - 1.0) + df * alpha;
        let ratio = gamma_fn(alpha + 1.0).powi(d as i32) / gamma_fn(df * (alpha + 1.0));
        let direct = mu.powi(d as i32) * ratio.powf(r);
        let b_d = if direct.is_finite() && direct > 0.0 {
            direct
        } else {
            (df * mu.ln() + r * (df * ln_gamma(alpha + 1.0) - ln_gamma(df * (alpha + 1.0)))).exp()
        };
        Ok(AsymptoticConstants {
            alpha,
            beta,
            b_d,
            branch: Branch::AlphaGtNeg1,
            mu,
            r,
            q,
            d,
        })
    } else {
        let s = lambda_power_sum(spec, r)?;
        let b_d = mu * df.powf(r) * s.powf((df - 1.0) * r);
        Ok(AsymptoticConstants {
            alpha,
            beta: alpha,
            b_d,
            branch: Branch::AlphaLtNeg1,
            mu,
            r,
            q,
            d,
        })
    }
}

// ---------------------------------------------------------------------------
// Relative-error cardinality
// ---------------------------------------------------------------------------

/// Which algorithm computes `m_tilde_d(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardinalityBackend {
    /// Streams the rearrangement; any spectrum.
    Heap,
    /// Counts atom compositions; explicit spectra only.
    Convolution,
    /// Convolution for explicit spectra, heap otherwise.
    Auto,
}

/// Scans groups of equal eigenvalues for the first prefix whose tail is at
/// most `eps^2 Lambda^d`. Shared by both backends so their arithmetic agrees.
pub(crate) struct ThresholdScan {
    total: f64,
    limit: f64,
    acc: CompensatedSum,
    count: u128,
}

impl ThresholdScan {
    pub(crate) fn new(total: f64, eps: f64) -> Self {
        ThresholdScan {
            total,
            limit: eps * eps * total,
            acc: CompensatedSum::new(),
            count: 0,
        }
    }

    fn satisfied_with(&self, extra: f64) -> bool {
        self.total - (self.acc.value() + extra) <= self.limit
    }

    pub(crate) fn done_at_start(&self) -> bool {
        self.satisfied_with(0.0)
    }

    /// Feeds a group of `mult` eigenvalues equal to `value`; returns the
    /// final count when the threshold is crossed inside the group.
    pub(crate) fn feed(&mut self, value: f64, mult: u128) -> Option<u128> {
        let full = value * mult as f64;
        if !self.satisfied_with(full) {
            self.acc.add(full);
            self.count += mult;
            return None;
        }
        let deficit = self.total - self.limit - self.acc.value();
        let mut t = ((deficit / value).ceil().max(1.0) as u128).min(mult);
        while t > 1 && self.satisfied_with(value * (t - 1) as f64) {
            t -= 1;
        }
        while t < mult && !self.satisfied_with(value * t as f64) {
            t += 1;
        }
        Some(self.count + t)
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfDomain {
            value: eps,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// `m_tilde_d(eps) = min { m : tail_sum(m) <= eps^2 Lambda^d }`.
pub fn cardinality_relative(
    spec: &UnivariateSpectrum,
    d: usize,
    eps: f64,
    backend: CardinalityBackend,
) -> Result<u128> {
    check_eps(eps)?;
    let explicit = spec.nonzero_count().is_some();
    match backend {
        CardinalityBackend::Heap => cardinality_heap(spec, d, eps, DEFAULT_ENTRY_CAP),
        CardinalityBackend::Convolution => cardinality_convolution(spec, d, eps),
        CardinalityBackend::Auto if explicit => cardinality_convolution(spec, d, eps),
        CardinalityBackend::Auto => cardinality_heap(spec, d, eps, DEFAULT_ENTRY_CAP),
    }
}

pub fn cardinality_heap(spec: &UnivariateSpectrum, d: usize, eps: f64, cap: usize) -> Result<u128> {
    check_eps(eps)?;
    let mut scan = ThresholdScan::new(tensor_total_mass(spec, d), eps);
    if scan.done_at_start() {
        return Ok(0);
    }
    let mut e = TensorEnumerator::with_cap(spec, d, cap)?;
    while let Some((value, group)) = e.next_group()? {
        if let Some(m) = scan.feed(value, group.len() as u128) {
            return Ok(m);
        }
    }
    // Rounding can leave a sliver above the limit after the last term.
    Ok(scan.count)
}

pub fn cardinality_convolution(spec: &UnivariateSpectrum, d: usize, eps: f64) -> Result<u128> {
    check_eps(eps)?;
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    let Some(k) = spec.nonzero_count() else {
        return Err(Error::Unsupported(
            "the convolution backend needs an explicit finite spectrum".into(),
        ));
    };
    let atoms: Vec<f64> = spec.sorted_eigenvalues(k).into_iter().map(|(_, v)| v).collect();
    let groups = composition_groups(&atoms, d)?;
    let mut scan = ThresholdScan::new(tensor_total_mass(spec, d), eps);
    if scan.done_at_start() {
        return Ok(0);
    }
    for (value, mult) in groups {
        if let Some(m) = scan.feed(value, mult) {
            return Ok(m);
        }
    }
    Ok(scan.count)
}

/// All distinct products of `d` atoms with their multiplicities, sorted by
/// decreasing value. Equal values from different compositions are merged.
pub fn composition_groups(atoms: &[f64], d: usize) -> Result<Vec<(f64, u128)>> {
    let k = atoms.len();
    let n_comp = binomial_u128((d + k - 1) as u64, (k - 1) as u64).unwrap_or(u128::MAX);
    if n_comp > DEFAULT_ENTRY_CAP as u128 {
        return Err(Error::BudgetExceeded {
            limit: DEFAULT_ENTRY_CAP,
            context: format!("{n_comp} atom compositions for d = {d}"),
        });
    }
    let mut out: Vec<(f64, u128)> = Vec::with_capacity(n_comp as usize);
    let mut counts = vec![0usize; k];
    fn rec(
        atoms: &[f64],
        counts: &mut Vec<usize>,
        pos: usize,
        left: usize,
        out: &mut Vec<(f64, u128)>,
    ) -> Result<()> {
        if pos + 1 == atoms.len() {
            counts[pos] = left;
            let mut value = 1.0;
            let mut mult: u128 = 1;
            let mut remaining = counts.iter().sum::<usize>() as u64;
            for (a, &c) in atoms.iter().zip(counts.iter()) {
                for _ in 0..c {
                    value *= a;
                }
                let b = binomial_u128(remaining, c as u64)
                    .and_then(|b| mult.checked_mul(b))
                    .ok_or_else(|| Error::BudgetExceeded {
                        limit: usize::MAX,
                        context: "multinomial count overflows 128 bits".into(),
                    })?;
                mult = b;
                remaining -= c as u64;
            }
            out.push((value, mult));
            return Ok(());
        }
        for c in (0..=left).rev() {
            counts[pos] = c;
            rec(atoms, counts, pos + 1, left - c, out)?;
        }
        Ok(())
    }
    rec(atoms, &mut counts, 0, d, &mut out)?;
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut merged: Vec<(f64, u128)> = Vec::with_capacity(out.len());
    for (v, c) in out {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => merged.push((v, c)),
        }
    }
    Ok(merged)
}

/// The limit prediction for `ln m_tilde_d(eps)` as `d` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPrediction {
    pub eps: f64,
    pub sigma: f64,
    /// `sigma * Phi_hat^{-1}(eps^2)`
    pub q_star: f64,
    pub ln_lambda_tilde: f64,
}

impl LimitPrediction {
    /// `d ln Lambda_tilde + 2 q* sqrt(d)`
    pub fn predicted_ln_m(&self, d: usize) -> f64 {
        let df = d as f64;
        df * self.ln_lambda_tilde + 2.0 * self.q_star * df.sqrt()
    }

    /// `(ln m - d ln Lambda_tilde) / sqrt(d)`, which tends to `2 q*`.
    pub fn normalized(&self, d: usize, m: u128) -> f64 {
        let df = d as f64;
        ((m as f64).ln() - df * self.ln_lambda_tilde) / df.sqrt()
    }
}

pub fn limit_prediction(spec: &UnivariateSpectrum, eps: f64) -> Result<LimitPrediction> {
    check_eps(eps)?;
    let mom = spec.spectral_moments()?;
    if mom.is_degenerate() {
        return Err(Error::Degenerate(
            "sigma^2 = 0: all nonzero eigenvalues are equal".into(),
        ));
    }
    let sigma = mom.sigma_sq.sqrt();
    let q_star = sigma * normal_tail_inv(eps * eps)?;
    Ok(LimitPrediction {
        eps,
        sigma,
        q_star,
        ln_lambda_tilde: mom.lambda_tilde.ln(),
    })
}
