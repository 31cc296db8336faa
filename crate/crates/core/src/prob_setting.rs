//! Guarantees of the form `P(||X - AX|| > eps) <= gamma`.
//!
//! For a centered Gaussian `X` in a separable Banach space,
//! `P(||X|| >= (E||X||^2)^{1/2} (1 + sqrt(2 |ln gamma|))) <= gamma`. The
//! error `X - AX` of a linear algorithm with fixed designs is Gaussian, so
//! it suffices to push the mean square error below `v^2` with
//! `v = eps / (1 + sqrt(2 |ln gamma|))`.
//!
//! The constant in the error rate is not known in closed form. It is
//! calibrated by Monte Carlo and the point budget is then the smallest
//! total point count whose calibrated rate drops below `v^2`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field_sim::{default_truncation, Field};
use crate::std_approx::{default_steps, rate_sweep, run_plan, ApproxConfig, IterationPlan, PointRate};

/// Largest budget [`point_budget`] will search.
pub const MAX_BUDGET: u64 = 1 << 40;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfDomain {
            value: gamma,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// `sqrt(mean_sq) (1 + sqrt(2 |ln gamma|))`
pub fn concentration_radius(mean_sq: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(mean_sq >= 0.0) || !mean_sq.is_finite() {
        return Err(invalid("mean_sq", "must be a finite non-negative number"));
    }
    Ok(mean_sq.sqrt() * (1.0 + (2.0 * gamma.ln().abs()).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbRequirement {
    pub eps: f64,
    pub gamma: f64,
    pub v: f64,
}

impl ProbRequirement {
    pub fn new(eps: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid("eps", "must be a finite positive number"));
        }
        Ok(ProbRequirement {
            eps,
            gamma,
            v: eps / (1.0 + (2.0 * gamma.ln().abs()).sqrt()),
        })
    }
}

/// `E||X - A_N X||^2 <= C0 N^{1-2r} (ln N)^{2r(beta+1)-1}` on the
/// calibration grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRate {
    pub c0: f64,
    pub r: f64,
    pub beta: f64,
    /// Total point counts of the calibration runs.
    pub grid: Vec<usize>,
    /// Monte Carlo mean square errors on the grid.
    pub errors: Vec<f64>,
    /// `1 + 3/sqrt(reps)`
    pub safety: f64,
}

impl CalibratedRate {
    pub fn log_exp(&self) -> f64 {
        2.0 * self.r * (self.beta + 1.0) - 1.0
    }

    pub fn point_rate(&self) -> PointRate {
        PointRate {
            r: self.r,
            log_exp: self.log_exp(),
        }
    }

    /// `C0 N^{1-2r} (ln N)^{log_exp}`
    pub fn bound(&self, n_total: f64) -> f64 {
        self.c0 * self.point_rate().eval(n_total)
    }

    /// Fits `C0` to measured `(N, error)` pairs.
    pub fn from_measurements(
        points: &[(usize, f64)],
        reps: usize,
        r: f64,
        beta: f64,
    ) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Degenerate(format!(
                "calibration needs at least 4 grid points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|&(n, _)| n < 2) {
            return Err(Error::Degenerate("calibration point counts must be >= 2".into()));
        }
        if reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        if r <= 0.5 {
            return Err(Error::Divergent(format!("point rate needs r > 1/2, got {r}")));
        }
        let safety = 1.0 + 3.0 / (reps as f64).sqrt();
        let rate = PointRate {
            r,
            log_exp: 2.0 * r * (beta + 1.0) - 1.0,
        };
        let c0 = points
            .iter()
            .map(|&(n, e)| e * safety / rate.eval(n as f64))
            .fold(0.0, f64::max);
        Ok(CalibratedRate {
            c0,
            r,
            beta,
            grid: points.iter().map(|p| p.0).collect(),
            errors: points.iter().map(|p| p.1).collect(),
            safety,
        })
    }
}

/// Runs the iteration at each per-pass size `n` and fits `C0`.
pub fn calibrate_c0(
    field_for: &dyn Fn(usize) -> Result<Arc<Field>>,
    r: f64,
    beta: f64,
    n_grid: &[usize],
    template: &ApproxConfig,
    reps: usize,
) -> Result<CalibratedRate> {
    if n_grid.len() < 4 {
        return Err(Error::Degenerate(format!(
            "calibration needs at least 4 grid points, got {}",
            n_grid.len()
        )));
    }
    let rate = PointRate {
        r,
        log_exp: 2.0 * r * (beta + 1.0) - 1.0,
    };
    let rows = rate_sweep(field_for, n_grid, template, rate, reps)?;
    let pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.points_used, r.mc_error)).collect();
    CalibratedRate::from_measurements(&pts, reps, r, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// Smallest admissible total point count.
    pub budget: u64,
    /// `C v^{-2/(2r-1)} |ln v|^{log_exp/(2r-1)}`
    pub closed_form: f64,
}

/// `C0^{1/(2r-1)} (2/(2r-1))^{log_exp/(2r-1)}`, the constant that matches
/// the closed form to the leading asymptotics of the integer search.
pub fn closed_form_constant(rate: &CalibratedRate) -> f64 {
    let s = 2.0 * rate.r - 1.0;
    rate.c0.powf(1.0 / s) * (2.0 / s).powf(rate.log_exp() / s)
}

pub fn closed_form_budget(v: f64, rate: &CalibratedRate) -> f64 {
    let s = 2.0 * rate.r - 1.0;
    closed_form_constant(rate) * v.powf(-2.0 / s) * v.ln().abs().powf(rate.log_exp() / s)
}

/// Minimal `N` in the decreasing range of the rate function with
/// `C0 N^{1-2r} (ln N)^{log_exp} <= v^2`.
pub fn point_budget(req: &ProbRequirement, rate: &CalibratedRate) -> Result<BudgetReport> {
    if !(req.v > 0.0 && req.v < 1.0) {
        return Err(Error::OutOfDomain {
            value: req.v,
            domain: "(0, 1)",
        });
    }
    if rate.r <= 0.5 {
        return Err(Error::Divergent(format!("point rate needs r > 1/2, got {}", rate.r)));
    }
    let target = req.v * req.v;
    let f = |n: u64| rate.bound(n as f64);
    let s = 2.0 * rate.r - 1.0;
    let peak = (rate.log_exp().max(0.0) / s).exp();
    let lo_start = (peak.ceil() as u64).max(2);
    if f(lo_start) <= target {
        return Ok(BudgetReport {
            budget: lo_start,
            closed_form: closed_form_budget(req.v, rate),
        });
    }
    let mut lo = lo_start;
    let mut hi = lo_start;
    while f(hi) > target {
        lo = hi;
        hi = hi.checked_mul(2).filter(|&h| h <= MAX_BUDGET).ok_or_else(|| {
            Error::BudgetExceeded {
                limit: MAX_BUDGET as usize,
                context: format!("no point count reaches v^2 = {target:e}"),
            }
        })?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BudgetReport {
        budget: hi,
        closed_form: closed_form_budget(req.v, rate),
    })
}

/// Largest per-pass size `n` with `(floor(Z log2 n) + 1) n <= budget`.
pub fn per_pass_size(budget: u64, z: f64) -> Option<usize> {
    let fits = |n: usize| (default_steps(n, z) as u64) * n as u64 <= budget;
    if !fits(2) {
        return None;
    }
    let mut lo = 2usize;
    let mut hi = 4usize;
    while fits(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Fraction of squared errors exceeding `eps^2`.
pub fn exceedance(sq_errors: &[f64], eps: f64) -> f64 {
    let hits = sq_errors.par_iter().filter(|&&e| e > eps * eps).count();
    hits as f64 / sq_errors.len().max(1) as f64
}

/// `gamma + 2 sqrt(gamma / reps)`
pub fn binomial_tolerance(gamma: f64, reps: usize) -> f64 {
    gamma + 2.0 * (gamma / reps as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub requirement: ProbRequirement,
    pub budget: u64,
    pub closed_form_budget: f64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub points_used: usize,
    pub reps: usize,
    pub mean_sq_error: f64,
    pub exceedance: f64,
    pub tolerance: f64,
}

impl VerifyReport {
    pub fn passes(&self) -> bool {
        self.exceedance <= self.tolerance
    }
}

/// Builds the iteration at the computed budget and measures
/// `P(||X - AX|| > eps)` over `reps` fresh fields.
pub fn verify(
    req: &ProbRequirement,
    rate: &CalibratedRate,
    field_for: &dyn Fn(usize) -> Result<Arc<Field>>,
    template: &ApproxConfig,
    reps: usize,
) -> Result<VerifyReport> {
    if reps == 0 {
        return Err(invalid("reps", "need at least one replication"));
    }
    let budget = point_budget(req, rate)?;
    let n = per_pass_size(budget.budget, template.z).ok_or_else(|| Error::BudgetExceeded {
        limit: budget.budget as usize,
        context: "budget too small for a single pass with n = 2".into(),
    })?;
    let mut cfg = *template;
    cfg.n = n;
    cfg.m = n / 2;
    cfg.k = default_steps(n, cfg.z);
    let field = field_for(cfg.m)?;
    let plan = IterationPlan::build(&field, &cfg)?;
    let out = run_plan(&field, &plan, reps, cfg.seed.wrapping_add(1))?;
    Ok(VerifyReport {
        requirement: *req,
        budget: budget.budget,
        closed_form_budget: budget.closed_form,
        n,
        m: cfg.m,
        k: cfg.k,
        points_used: out.points_used,
        reps,
        mean_sq_error: out.mc_error(),
        exceedance: exceedance(&out.final_errors, req.eps),
        tolerance: binomial_tolerance(req.gamma, reps),
    })
}

/// Field factory for a tensor spectrum with the default truncation.
pub fn tensor_field_factory(
    spec: crate::spectra::UnivariateSpectrum,
    d: usize,
) -> impl Fn(usize) -> Result<Arc<Field>> {
    move |m| Ok(Arc::new(Field::tensor(&spec, d, default_truncation(m))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_tail;

    fn unit_rate(c0: f64) -> CalibratedRate {
        CalibratedRate {
            c0,
            r: 1.0,
            beta: 0.0,
            grid: vec![],
            errors: vec![],
            safety: 1.0,
        }
    }

    #[test]
    fn radius_examples() {
        let r = concentration_radius(1.0, (-2.0f64).exp()).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
        let r = concentration_radius(1.0, 0.05).unwrap();
        assert!((r - 3.447_654).abs() < 1e-3);
        assert!(2.0 * normal_tail(r) < 6e-4);
        assert!(concentration_radius(1.0, 1.0).is_err());
        assert!(concentration_radius(1.0, 0.0).is_err());
        let near_one = concentration_radius(4.0, 1.0 - 1e-12).unwrap();
        assert!((near_one - 2.0).abs() < 1e-5);
    }

    #[test]
    fn requirement_v() {
        let r = ProbRequirement::new(0.3, 0.1).unwrap();
        assert!(r.v < r.eps);
        assert!((r.v - 0.3 / (1.0 + (2.0 * 10f64.ln()).sqrt())).abs() < 1e-15);
        let near = ProbRequirement::new(0.3, 1.0 - 1e-12).unwrap();
        assert!((near.v - 0.3).abs() < 1e-5);
    }

    #[test]
    fn budget_oracle() {
        let req = ProbRequirement {
            eps: 1.0,
            gamma: 0.5,
            v: 0.1,
        };
        let b = point_budget(&req, &unit_rate(1.0)).unwrap();
        assert_eq!(b.budget, 648);
        assert!(647f64.ln() / 647.0 > 0.01);
        assert!(648f64.ln() / 648.0 <= 0.01);
        let half = ProbRequirement { v: 0.05, ..req };
        let ratio = point_budget(&half, &unit_rate(1.0)).unwrap().budget as f64 / 648.0;
        assert!((3.5..=5.5).contains(&ratio), "{ratio}");
        let ten = point_budget(&req, &unit_rate(10.0)).unwrap().budget as f64 / 648.0;
        assert!((8.0..=15.0).contains(&ten), "{ten}");
    }

    #[test]
    fn closed_form_within_factor_three() {
        for c0 in [0.05, 1.0, 7.0] {
            for i in 0..=20 {
                let v = 10f64.powf(-3.0 + i as f64 * (0.3f64.log10() + 3.0) / 20.0);
                let req = ProbRequirement { eps: 1.0, gamma: 0.5, v };
                let b = point_budget(&req, &unit_rate(c0)).unwrap();
                let ratio = b.budget as f64 / b.closed_form;
                assert!((1.0 / 3.0..=3.0).contains(&ratio), "c0 {c0} v {v} ratio {ratio}");
            }
        }
    }

    #[test]
    fn calibration_is_linear() {
        let rate = PointRate { r: 1.0, log_exp: 1.0 };
        let pts: Vec<(usize, f64)> = [100, 200, 400, 800]
            .iter()
            .map(|&n| (n, rate.eval(n as f64)))
            .collect();
        let c = CalibratedRate::from_measurements(&pts, 100, 1.0, 0.0).unwrap();
        assert!((c.c0 - 1.3).abs() < 1e-12);
        let doubled: Vec<(usize, f64)> = pts.iter().map(|&(n, e)| (n, 2.0 * e)).collect();
        let c2 = CalibratedRate::from_measurements(&doubled, 100, 1.0, 0.0).unwrap();
        assert!((c2.c0 - 2.0 * c.c0).abs() < 1e-12);
        assert!(CalibratedRate::from_measurements(&pts[..3], 100, 1.0, 0.0).is_err());
    }

    #[test]
    fn per_pass_fits_budget() {
        for budget in [20u64, 100, 648, 10_000] {
            let n = per_pass_size(budget, 2.0).unwrap();
            assert!(default_steps(n, 2.0) as u64 * n as u64 <= budget);
            assert!(default_steps(n + 1, 2.0) as u64 * (n as u64 + 1) > budget);
        }
        assert_eq!(per_pass_size(2, 2.0), None);
    }

    #[test]
    fn exceedance_counts() {
        assert_eq!(exceedance(&[0.0, 1.0, 4.0, 9.0], 1.5), 0.5);
    }
}
