//! Small numerical kernels shared by the spectral modules: compensated
//! summation, Gauss-Legendre rules, an exp-sinh tail integrator, series
//! summation with an Euler-Maclaurin tail and the standard normal tail.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integral of `f` over [0, inf) by exp-sinh quadrature.
///
/// `f` must be smooth on (0, inf) and decay at least like y^{-1-delta}.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F) -> f64 {
    let t_lo = -5.0_f64;
    // y = exp(pi/2 sinh t) stays below 1e300
    let t_hi = (2.0 / PI * 300.0 * std::f64::consts::LN_10).asinh();
    let node = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let y = s.exp();
        if !y.is_finite() || y == 0.0 {
            return 0.0;
        }
        let v = f(y) * y * FRAC_PI_2 * t.cosh();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut total = CompensatedSum::new();
    let mut t = t_lo;
    while t <= t_hi {
        total.add(node(t));
        t += h;
    }
    let mut estimate = total.value() * h;
    for _level in 0..10 {
        let mut t = t_lo + h / 2.0;
        while t <= t_hi {
            total.add(node(t));
            t += h;
        }
        h /= 2.0;
        let next = total.value() * h;
        let converged = (next - estimate).abs() <= 1e-15 * next.abs().max(f64::MIN_POSITIVE);
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

/// A summand given in log-space: returns `(sign, ln|term(x)|)` at `x = e^lx`.
pub trait LogTerm: Fn(f64) -> (f64, f64) {}
impl<F: Fn(f64) -> (f64, f64)> LogTerm for F {}

fn eval_term<F: LogTerm>(term: &F, x: f64) -> f64 {
    let (sign, ln_abs) = term(x.ln());
    if ln_abs == f64::NEG_INFINITY {
        0.0
    } else {
        sign * ln_abs.exp()
    }
}

/// Sum of `term(i)` for `i >= 1`.
///
/// Terms below `cutoff` are summed directly; the remainder is an
/// Euler-Maclaurin correction around an exp-sinh evaluation of the tail
/// integral, carried out in the variable `ln x` so that slowly decaying
/// terms do not overflow.
pub fn series_sum<F: LogTerm>(term: F, cutoff: usize) -> f64 {
    series_sum_weighted(
        |lx| {
            let (sign, ln_abs) = term(lx);
            (sign, ln_abs + lx)
        },
        cutoff,
    )
}

/// As [`series_sum`], but the closure returns `(sign, ln|x term(x)|)`.
///
/// Series decaying only logarithmically need their tail integrand at
/// `ln x` near 1e300; supplying `x term(x)` lets the caller cancel the
/// `ln x` contributions exactly instead of subtracting huge numbers.
pub fn series_sum_weighted<F: LogTerm>(weighted: F, cutoff: usize) -> f64 {
    let cutoff = cutoff.max(16);
    let term = |lx: f64| {
        let (sign, ln_abs) = weighted(lx);
        (sign, ln_abs - lx)
    };
    let mut direct = CompensatedSum::new();
    for i in 1..cutoff {
        direct.add(eval_term(&term, i as f64));
    }
    let k = cutoff as f64;
    let ln_k = k.ln();
    let integral = integrate_half_line(|y| {
        let (sign, ln_abs) = weighted(ln_k + y);
        if ln_abs == f64::NEG_INFINITY {
            0.0
        } else {
            sign * ln_abs.exp()
        }
    });
    let t_k = eval_term(&term, k);
    let slope = (eval_term(&term, k + 1.0) - eval_term(&term, k - 1.0)) / 2.0;
    direct.add(integral);
    direct.add(t_k / 2.0);
    direct.add(-slope / 12.0);
    direct.value()
}

/// Upper tail of the standard normal law, P(N(0,1) > x).
pub fn normal_tail(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`normal_tail`]: the `x` with P(N(0,1) > x) = p.
///
/// Bisection brackets the root, Newton polishes it.
pub fn normal_tail_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("tail probability must lie in (0,1), got {p}")));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let dens = normal_density(x);
        if dens == 0.0 {
            break;
        }
        let step = (normal_tail(x) - p) / dens;
        let next = (x + step).clamp(lo - 1.0, hi + 1.0);
        let done = (next - x).abs() <= 1e-15 * (1.0 + x.abs());
        x = next;
        if done {
            return Ok(x);
        }
    }
    // Newton stalls only at the bracket ends; bisection accuracy then suffices.
    if (normal_tail(x) - p).abs() <= 1e-10 * p {
        Ok(x)
    } else {
        Err(Error::NoConvergence(format!("normal tail inverse at p = {p}")))
    }
}

/// Exact binomial coefficient while it fits in `u128`.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Binomial coefficient as a float (exact for moderate arguments).
pub fn binomial(n: u64, k: u64) -> f64 {
    match binomial_u128(n, k) {
        Some(v) => v as f64,
        None => {
            use statrs::function::gamma::ln_gamma;
            (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
                .exp()
        }
    }
}

/// `a * ln(b)` with the convention `0 * ln 0 = 0`.
pub fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn half_line_integral_of_exponential_and_algebraic() {
        let a = integrate_half_line(|y| (-y).exp());
        assert!((a - 1.0).abs() < 1e-13, "{a}");
        let b = integrate_half_line(|y| 1.0 / (1.0 + y).powf(1.5));
        assert!((b - 2.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn zeta_two_by_series() {
        let s = series_sum(|lx| (1.0, -2.0 * lx), 4096);
        assert!((s - PI * PI / 6.0).abs() < 1e-14, "{s}");
    }

    #[test]
    fn logarithmically_decaying_series() {
        // sum_i i^-1 (ln(i+1))^-2: mpmath direct sum to 4095 plus Euler-Maclaurin
        // tail with the integral taken in log variables
        let s = series_sum_weighted(
            |lx| {
                let ln_x1 = lx + (-lx).exp().ln_1p();
                (1.0, -2.0 * ln_x1.ln())
            },
            4096,
        );
        assert!((s - 3.387_735_531_952_002).abs() < 1e-10, "{s}");
    }

    #[test]
    fn normal_tail_inverse_roundtrip() {
        assert!(normal_tail_inv(0.5).unwrap().abs() < 1e-15);
        // independent reference: scipy.stats.norm.isf(0.09)
        let x = normal_tail_inv(0.09).unwrap();
        assert!((x - 1.3407550336902165).abs() < 1e-10, "{x}");
        for &p in &[1e-12, 1e-5, 0.2, 0.8, 0.999999] {
            let x = normal_tail_inv(p).unwrap();
            assert!((normal_tail(x) - p).abs() <= 1e-10 * p.min(1.0 - p).max(p), "{p}");
        }
        assert!(normal_tail_inv(0.0).is_err());
        assert!(normal_tail_inv(1.0).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial_u128(40, 20), Some(137_846_528_820));
        assert_eq!(binomial(5, 7), 0.0);
        assert_eq!(binomial(12, 0), 1.0);
    }
}
