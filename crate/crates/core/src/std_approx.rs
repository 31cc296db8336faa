//! Approximation from point values by importance-sampled least squares.
//!
//! The span is the first `m` retained modes `eta_j` of a [`Field`]. Points
//! are drawn from `u_m = (1/m) sum_j eta_j^2` by choosing a mode uniformly
//! and sampling each coordinate from the corresponding univariate density
//! `phi_k^2`. Coefficients are estimated by
//! `g_hat_j = (1/n) sum_l g(tau_l) eta_j(tau_l) / u_m(tau_l)`.
//!
//! The iteration `A_k = A_{k-1} + A_tau(Y - A_{k-1} Y)` reuses the single
//! pass on the residual with a fresh design per step. Designs are chosen
//! once per step by [`select_design`] and then applied to every field, so
//! the resulting algorithm is linear and does not look at the sample path.
//!
//! All Monte Carlo work runs on fixed-size chunks of replications with
//! per-replication random streams; results do not depend on the number of
//! worker threads.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field_sim::{ErrorDecomposition, Field, FieldRealization};
use crate::numeric::CompensatedSum;
use crate::seed::{
    stream_rng, DOMAIN_CALIBRATION, DOMAIN_CANDIDATE, DOMAIN_DESIGN, DOMAIN_FIELD,
};

/// Replications per work unit.
const CHUNK: usize = 128;

/// `floor(Z log2 n) + 1`
pub fn default_steps(n: usize, z: f64) -> usize {
    (z * (n as f64).log2()).floor() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    /// Points per pass.
    pub n: usize,
    /// Span size.
    pub m: usize,
    /// Number of passes.
    pub k: usize,
    pub z: f64,
    /// Candidate designs per step.
    pub candidates: usize,
    /// Calibration fields scoring the candidates.
    pub r_cal: usize,
    pub seed: u64,
}

impl ApproxConfig {
    /// `m = floor(n/2)`, `Z = 2p + 1`, `k = floor(Z log2 n) + 1`, 8
    /// candidates scored on 64 calibration fields.
    pub fn for_rate(n: usize, p: f64, seed: u64) -> Self {
        let z = 2.0 * p + 1.0;
        ApproxConfig {
            n,
            m: n / 2,
            k: default_steps(n.max(1), z),
            z,
            candidates: 8,
            r_cal: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n {
            return Err(invalid(
                "m",
                format!(
                    "need 1 <= m < n for the contraction factor m/n < 1, got m = {}, n = {}",
                    self.m, self.n
                ),
            ));
        }
        if self.k == 0 {
            return Err(invalid("k", "need at least one pass"));
        }
        if self.candidates == 0 {
            return Err(invalid("candidates", "need at least one candidate design"));
        }
        if self.r_cal == 0 {
            return Err(invalid("r_cal", "need at least one calibration field"));
        }
        Ok(())
    }
}

/// `E ||Y_m^perp||^2 <= C1 m^{-2p} (ln m)^{log_exp} E ||Y||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub p: f64,
    pub log_exp: f64,
    pub c1: f64,
}

impl RateModel {
    /// Smallest `C1` that makes the inequality hold on the given span sizes
    /// (all `>= 2`).
    pub fn fit(field: &Field, p: f64, log_exp: f64, grid: &[usize]) -> Result<Self> {
        if grid.iter().any(|&m| m < 2) || grid.is_empty() {
            return Err(invalid("grid", "span sizes must be >= 2"));
        }
        let total = field.total_mass();
        let c1 = grid
            .iter()
            .map(|&m| {
                let mf = m as f64;
                field.tail_after(m) / (mf.powf(-2.0 * p) * mf.ln().powf(log_exp) * total)
            })
            .fold(0.0, f64::max);
        Ok(RateModel { p, log_exp, c1 })
    }

    pub fn bound(&self, m: usize, total: f64) -> f64 {
        let mf = m as f64;
        self.c1 * mf.powf(-2.0 * self.p) * mf.ln().powf(self.log_exp) * total
    }
}

// ---------------------------------------------------------------------------
// Designs
// ---------------------------------------------------------------------------

/// `n` points in `[0,1]^d` together with the mode that generated each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub dim: usize,
    pub m: usize,
    /// Row-major `n x d`.
    pub points: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Basis values and sampling weights of a design.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// `phi_k(tau_l)`, `n x cols`.
    pub values: Array2<f64>,
    /// `u_m(tau_l)`
    pub density: Vec<f64>,
    /// `eta_j(tau_l) / (n u_m(tau_l))`, `n x m`.
    pub weights: Array2<f64>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn point(&self, l: usize) -> &[f64] {
        &self.points[l * self.dim..(l + 1) * self.dim]
    }

    /// Evaluates the first `cols >= m` modes of `field` at the points.
    pub fn evaluate(&self, field: &Field, cols: usize) -> DesignMatrix {
        let cols = cols.max(self.m).min(field.len());
        let values = field.mode_matrix(&self.points, cols);
        let n = self.n() as f64;
        let mf = self.m as f64;
        let density: Vec<f64> = values
            .rows()
            .into_iter()
            .map(|row| row.slice(s![..self.m]).iter().map(|v| v * v).sum::<f64>() / mf)
            .collect();
        let mut weights = values.slice(s![.., ..self.m]).to_owned();
        for (mut row, u) in weights.rows_mut().into_iter().zip(&density) {
            row.mapv_inplace(|v| v / (n * u));
        }
        DesignMatrix {
            values,
            density,
            weights,
        }
    }
}

/// `u_m(t) = (1/m) sum_{j <= m} eta_j(t)^2`.
pub fn density(field: &Field, m: usize, t: &[f64]) -> Result<f64> {
    if m == 0 || m > field.len() {
        return Err(invalid("m", format!("span size must lie in 1..={}", field.len())));
    }
    let mut phi = vec![0.0; m];
    field.eval_modes(t, &mut phi)?;
    Ok(phi.iter().map(|v| v * v).sum::<f64>() / m as f64)
}

/// Draws `n` i.i.d. points with density `u_m`.
pub fn draw_design<R: Rng + ?Sized>(field: &Field, m: usize, n: usize, rng: &mut R) -> Result<Design> {
    if m == 0 || m > field.len() {
        return Err(invalid("m", format!("span size must lie in 1..={}", field.len())));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one point"));
    }
    let d = field.dim();
    let basis = field.basis();
    let mut points = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut phi = vec![0.0; m];
    while labels.len() < n {
        let j = rng.random_range(0..m);
        let start = points.len();
        for &k in field.index(j) {
            points.push(basis.sample_sq_unchecked(k as usize, rng));
        }
        // A draw landing exactly on a common zero of the span has
        // probability zero but would give an infinite weight.
        field.eval_modes(&points[start..], &mut phi)?;
        if phi.iter().all(|&v| v == 0.0) {
            points.truncate(start);
            continue;
        }
        labels.push(j);
    }
    Ok(Design {
        dim: d,
        m,
        points,
        labels,
    })
}

/// `g_hat_j` for a point-evaluable function.
pub fn estimate_coefficients<G: Fn(&[f64]) -> f64>(
    g: G,
    field: &Field,
    design: &Design,
) -> Vec<f64> {
    let dm = design.evaluate(field, design.m);
    let values: Vec<f64> = (0..design.n()).map(|l| g(design.point(l))).collect();
    let mut out = vec![0.0; design.m];
    for (l, gl) in values.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += gl * dm.weights[[l, j]];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Batched passes
// ---------------------------------------------------------------------------

/// State of a batch of fields under iteration: the coefficients and the
/// residual coefficients `Y - A Y` of each row.
struct BatchState {
    coefs: Array2<f64>,
    resid: Array2<f64>,
    acc: Array2<f64>,
}

impl BatchState {
    fn new(coefs: Array2<f64>, m: usize) -> Self {
        let rows = coefs.nrows();
        BatchState {
            resid: coefs.clone(),
            acc: Array2::zeros((rows, m)),
            coefs,
        }
    }

    fn m(&self) -> usize {
        self.acc.ncols()
    }

    /// One pass on the residual with the given design.
    fn apply(&mut self, dm: &DesignMatrix) {
        let cols = dm.values.ncols();
        let at_points = self.resid.slice(s![.., ..cols]).dot(&dm.values.t());
        let ghat = at_points.dot(&dm.weights);
        self.acc += &ghat;
        let m = self.m();
        let mut head = self.resid.slice_mut(s![.., ..m]);
        head.assign(&self.coefs.slice(s![.., ..m]));
        head -= &self.acc;
    }

    fn in_span(&self) -> Vec<f64> {
        row_sq_norms(self.resid.slice(s![.., ..self.m()]))
    }

    fn out_span(&self) -> Vec<f64> {
        row_sq_norms(self.resid.slice(s![.., self.m()..]))
    }
}

fn row_sq_norms(a: ArrayView2<f64>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).collect::<CompensatedSum>().value())
        .collect()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bound trace `x + (m/n)^s (err_0 - x)`, `x = R / (1 - m/n)`.
pub fn bound_trace(tail: f64, total: f64, m: usize, n: usize, k: usize) -> Vec<f64> {
    let ratio = m as f64 / n as f64;
    let x = tail / (1.0 - ratio);
    (0..=k).map(|s| x + ratio.powi(s as i32) * (total - x)).collect()
}

// ---------------------------------------------------------------------------
// Single pass
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub estimates: Vec<f64>,
    pub points_used: usize,
    /// Squared error after each pass, starting with `A_0 = 0`.
    pub err_trace: Vec<ErrorDecomposition>,
    /// Expected-error bound after each pass.
    pub bound_trace: Vec<f64>,
}

/// `A_tau Y` for one realization and one design.
pub fn single_pass(fr: &FieldRealization, design: &Design) -> Result<ApproxResult> {
    let field = fr.field();
    let m = design.m;
    let coefs = Array2::from_shape_vec((1, field.len()), fr.coefficients().to_vec())
        .map_err(|e| Error::Parse(e.to_string()))?;
    let mut state = BatchState::new(coefs, m);
    let before = fr.exact_sq_error(&vec![0.0; m])?;
    state.apply(&design.evaluate(field, field.len()));
    let estimates = state.acc.row(0).to_vec();
    let after = fr.exact_sq_error(&estimates)?;
    Ok(ApproxResult {
        estimates,
        points_used: design.n(),
        err_trace: vec![before, after],
        bound_trace: bound_trace(field.tail_after(m), field.total_mass(), m, design.n(), 1),
    })
}

/// Monte Carlo over independent (field, design) pairs of the single pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePassSummary {
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub mean_error: f64,
    pub stderr: f64,
    pub mean_in_span: f64,
    /// `(m/n) E||Y||^2 + E||Y_m^perp||^2`
    pub bound: f64,
}

pub fn single_pass_mc(field: &Field, m: usize, n: usize, reps: usize, seed: u64) -> Result<SinglePassSummary> {
    if m == 0 || m > field.len() || n == 0 {
        return Err(invalid("m", "need 1 <= m <= T and n >= 1"));
    }
    let per_rep: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .with_min_len(8)
        .map(|i| {
            let coefs = field.coefficient_batch(seed, DOMAIN_FIELD, i as u64, 1);
            let mut rng = stream_rng(seed, DOMAIN_DESIGN, i as u64);
            let design = draw_design(field, m, n, &mut rng)?;
            let mut state = BatchState::new(coefs, m);
            state.apply(&design.evaluate(field, field.len()));
            let ins = state.in_span()[0];
            Ok((ins + state.out_span()[0] + field.analytic_tail(), ins))
        })
        .collect();
    let mut errs = Vec::with_capacity(reps);
    let mut ins = Vec::with_capacity(reps);
    for r in per_rep {
        let (e, i) = r?;
        errs.push(e);
        ins.push(i);
    }
    let (mean_error, stderr) = mean_and_stderr(&errs);
    Ok(SinglePassSummary {
        n,
        m,
        reps,
        mean_error,
        stderr,
        mean_in_span: mean_and_stderr(&ins).0,
        bound: m as f64 / n as f64 * field.total_mass() + field.tail_after(m),
    })
}

// ---------------------------------------------------------------------------
// Design selection and iteration
// ---------------------------------------------------------------------------

/// Best of `candidates` random designs, scored by the mean squared error
/// after one pass on the calibration fields (common to all candidates).
/// Returns the design and all candidate scores.
pub fn select_design(
    field: &Field,
    m: usize,
    n: usize,
    candidates: usize,
    calibration: &Array2<f64>,
    step: usize,
    seed: u64,
) -> Result<(Design, Vec<f64>)> {
    select_with_state(field, m, n, candidates, &BatchState::new(calibration.clone(), m), step, seed)
}

fn select_with_state(
    field: &Field,
    m: usize,
    n: usize,
    candidates: usize,
    state: &BatchState,
    step: usize,
    seed: u64,
) -> Result<(Design, Vec<f64>)> {
    if candidates == 0 {
        return Err(invalid("candidates", "need at least one candidate design"));
    }
    let scored: Vec<Result<(Design, f64)>> = (0..candidates)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, DOMAIN_CANDIDATE + step as u64, c as u64);
            let design = draw_design(field, m, n, &mut rng)?;
            let mut trial = BatchState {
                coefs: state.coefs.clone(),
                resid: state.resid.clone(),
                acc: state.acc.clone(),
            };
            trial.apply(&design.evaluate(field, field.len()));
            let errs: Vec<f64> = trial
                .in_span()
                .iter()
                .zip(trial.out_span())
                .map(|(a, b)| a + b)
                .collect();
            Ok((design, mean_and_stderr(&errs).0))
        })
        .collect();
    let mut best: Option<(Design, f64)> = None;
    let mut scores = Vec::with_capacity(candidates);
    for r in scored {
        let (design, score) = r?;
        scores.push(score);
        if best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((design, score));
        }
    }
    Ok((best.expect("at least one candidate").0, scores))
}

/// The designs of all passes, fixed before any field is seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub config: ApproxConfig,
    pub designs: Vec<Design>,
    /// Candidate scores per step.
    pub scores: Vec<Vec<f64>>,
}

impl IterationPlan {
    pub fn build(field: &Field, config: &ApproxConfig) -> Result<Self> {
        config.validate()?;
        if config.m > field.len() {
            return Err(invalid("m", format!("span size {} exceeds T = {}", config.m, field.len())));
        }
        let cal = field.coefficient_batch(config.seed, DOMAIN_CALIBRATION, 0, config.r_cal);
        let mut state = BatchState::new(cal, config.m);
        let mut designs = Vec::with_capacity(config.k);
        let mut scores = Vec::with_capacity(config.k);
        for step in 0..config.k {
            let (design, sc) = select_with_state(
                field,
                config.m,
                config.n,
                config.candidates,
                &state,
                step,
                config.seed,
            )?;
            state.apply(&design.evaluate(field, field.len()));
            designs.push(design);
            scores.push(sc);
        }
        Ok(IterationPlan {
            config: *config,
            designs,
            scores,
        })
    }

    /// `k n`
    pub fn points_used(&self) -> usize {
        self.designs.iter().map(Design::n).sum()
    }
}

/// `A_k Y` for one realization with a freshly built plan.
pub fn iterate(fr: &FieldRealization, config: &ApproxConfig) -> Result<ApproxResult> {
    let plan = IterationPlan::build(fr.field(), config)?;
    iterate_with_plan(fr, &plan)
}

pub fn iterate_with_plan(fr: &FieldRealization, plan: &IterationPlan) -> Result<ApproxResult> {
    let field = fr.field();
    let m = plan.config.m;
    let coefs = Array2::from_shape_vec((1, field.len()), fr.coefficients().to_vec())
        .map_err(|e| Error::Parse(e.to_string()))?;
    let mut state = BatchState::new(coefs, m);
    let mut trace = vec![fr.exact_sq_error(&vec![0.0; m])?];
    for design in &plan.designs {
        state.apply(&design.evaluate(field, field.len()));
        trace.push(ErrorDecomposition {
            in_span: state.in_span()[0],
            out_span: state.out_span()[0],
            analytic_tail: field.analytic_tail(),
        });
    }
    Ok(ApproxResult {
        estimates: state.acc.row(0).to_vec(),
        points_used: plan.points_used(),
        err_trace: trace,
        bound_trace: bound_trace(
            field.tail_after(m),
            field.total_mass(),
            m,
            plan.config.n,
            plan.designs.len(),
        ),
    })
}

/// Monte Carlo summary of a plan applied to many fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub reps: usize,
    /// Points used per field, `k n`.
    pub points_used: usize,
    /// Mean total error after each pass (index 0 is `A_0 = 0`).
    pub err_trace: Vec<f64>,
    pub err_stderr: Vec<f64>,
    pub in_span_trace: Vec<f64>,
    pub mean_out_span: f64,
    pub bound_trace: Vec<f64>,
    /// Total error of each field after the last pass.
    pub final_errors: Vec<f64>,
    /// The out-of-span component never changed, bit for bit.
    pub out_span_invariant: bool,
}

impl BatchOutcome {
    pub fn mc_error(&self) -> f64 {
        *self.err_trace.last().expect("trace holds A_0")
    }

    pub fn mc_stderr(&self) -> f64 {
        *self.err_stderr.last().expect("trace holds A_0")
    }
}

/// Applies the plan to `reps` fields from the stream `(seed, DOMAIN_FIELD)`.
pub fn run_plan(field: &Field, plan: &IterationPlan, reps: usize, seed: u64) -> Result<BatchOutcome> {
    if reps == 0 {
        return Err(invalid("reps", "need at least one replication"));
    }
    let m = plan.config.m;
    let k = plan.designs.len();
    let tail = field.analytic_tail();
    struct Chunk {
        state: BatchState,
        out0: Vec<f64>,
        errs: Vec<Vec<f64>>,
        ins: Vec<Vec<f64>>,
        invariant: bool,
    }
    impl Chunk {
        fn record(&mut self, tail: f64) {
            let i = self.state.in_span();
            let o = self.state.out_span();
            self.invariant &= o
                .iter()
                .zip(&self.out0)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            self.errs.push(i.iter().zip(&o).map(|(a, b)| a + b + tail).collect());
            self.ins.push(i);
        }
    }
    let mut chunks: Vec<Chunk> = (0..reps)
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let count = CHUNK.min(reps - start);
            let coefs = field.coefficient_batch(seed, DOMAIN_FIELD, start as u64, count);
            let state = BatchState::new(coefs, m);
            let out0 = state.out_span();
            let mut c = Chunk {
                state,
                out0,
                errs: Vec::with_capacity(k + 1),
                ins: Vec::with_capacity(k + 1),
                invariant: true,
            };
            c.record(tail);
            c
        })
        .collect();
    for design in &plan.designs {
        let dm = design.evaluate(field, field.len());
        chunks.par_iter_mut().for_each(|c| {
            c.state.apply(&dm);
            c.record(tail);
        });
    }
    let outs = chunks;
    let mut err_trace = Vec::with_capacity(k + 1);
    let mut err_stderr = Vec::with_capacity(k + 1);
    let mut in_span_trace = Vec::with_capacity(k + 1);
    for s in 0..=k {
        let all: Vec<f64> = outs.iter().flat_map(|c| c.errs[s].iter().copied()).collect();
        let (mean, se) = mean_and_stderr(&all);
        err_trace.push(mean);
        err_stderr.push(se);
        let ins: Vec<f64> = outs.iter().flat_map(|c| c.ins[s].iter().copied()).collect();
        in_span_trace.push(mean_and_stderr(&ins).0);
    }
    let out_all: Vec<f64> = outs.iter().flat_map(|c| c.out0.iter().copied()).collect();
    Ok(BatchOutcome {
        n: plan.config.n,
        m,
        k,
        reps,
        points_used: plan.points_used(),
        err_trace,
        err_stderr,
        in_span_trace,
        mean_out_span: mean_and_stderr(&out_all).0,
        bound_trace: bound_trace(field.tail_after(m), field.total_mass(), m, plan.config.n, k),
        final_errors: outs.iter().flat_map(|c| c.errs[k].iter().copied()).collect(),
        out_span_invariant: outs.iter().all(|c| c.invariant),
    })
}

// ---------------------------------------------------------------------------
// Rate sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub points_used: usize,
    pub mc_error: f64,
    pub stderr: f64,
    /// `2 E||Y_m^perp||^2 + 2^{-k} E||Y||^2`
    pub bound_pyth4: f64,
    /// `C N^{1-2r} (ln N)^{gamma}` with `C` fitted over the sweep.
    pub bound_prop: f64,
}

/// Parameters of the point-count rate `N^{1-2r} (ln N)^{log_exp}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRate {
    pub r: f64,
    pub log_exp: f64,
}

impl PointRate {
    pub fn eval(&self, n_total: f64) -> f64 {
        n_total.powf(1.0 - 2.0 * self.r) * n_total.ln().powf(self.log_exp)
    }
}

/// Runs the iteration with `m = floor(n/2)` and `k = floor(Z log2 n) + 1`
/// for each `n`, on `reps` fields each.
pub fn rate_sweep(
    field_for: &dyn Fn(usize) -> Result<Arc<Field>>,
    grid: &[usize],
    template: &ApproxConfig,
    rate: PointRate,
    reps: usize,
) -> Result<Vec<SweepRow>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("grid", "n values must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let mut cfg = *template;
        cfg.n = n;
        cfg.m = n / 2;
        cfg.k = default_steps(n, cfg.z);
        let field = field_for(cfg.m)?;
        let plan = IterationPlan::build(&field, &cfg)?;
        let out = run_plan(&field, &plan, reps, cfg.seed)?;
        rows.push(SweepRow {
            n,
            m: cfg.m,
            k: cfg.k,
            points_used: out.points_used,
            mc_error: out.mc_error(),
            stderr: out.mc_stderr(),
            bound_pyth4: 2.0 * field.tail_after(cfg.m)
                + 0.5f64.powi(cfg.k as i32) * field.total_mass(),
            bound_prop: 0.0,
        });
    }
    let c = rows
        .iter()
        .map(|r| r.mc_error / rate.eval(r.points_used as f64))
        .fold(0.0, f64::max);
    for r in &mut rows {
        r.bound_prop = c * rate.eval(r.points_used as f64);
    }
    Ok(rows)
}

/// Per-point constants `mc_error / (N^{1-2r} (ln N)^{log_exp})`.
pub fn fitted_constants(rows: &[SweepRow], rate: PointRate) -> Vec<f64> {
    rows.iter()
        .map(|r| r.mc_error / rate.eval(r.points_used as f64))
        .collect()
}

/// Zero approximation errors `||Y||^2 + tail` of `reps` fields.
pub fn zero_algorithm_errors(field: &Field, reps: usize, seed: u64) -> Vec<f64> {
    let tail = field.analytic_tail();
    (0..reps)
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|&s| {
            let b = field.coefficient_batch(seed, DOMAIN_FIELD, s as u64, CHUNK.min(reps - s));
            row_sq_norms(b.view()).into_iter().map(move |x| x + tail)
        })
        .collect()
}

/// Mean squared norm of the columns `0..m` summed over rows, for tests.
#[doc(hidden)]
pub fn column_means(a: &Array2<f64>) -> Vec<f64> {
    a.mean_axis(Axis(0)).map(|v| v.to_vec()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::simulate;
    use crate::numeric::gauss_legendre;
    use crate::spectra::{BasisFamily, UnivariateSpectrum};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bm(d: usize, t: usize) -> Arc<Field> {
        Arc::new(Field::tensor(&UnivariateSpectrum::brownian_motion(), d, t).unwrap())
    }

    fn cosine_field(t: usize) -> Arc<Field> {
        let s = UnivariateSpectrum::power_log(1.0, 1.0, 0.0)
            .unwrap()
            .with_lambda0_sq(1.0)
            .unwrap()
            .with_basis(BasisFamily::Cosine);
        let model = crate::additive_spectrum::AdditiveModel::new(1, 1, s).unwrap();
        Arc::new(Field::additive(&model, t).unwrap())
    }

    #[test]
    fn constant_span_density_is_one() {
        let f = cosine_field(10);
        assert_eq!(f.index(0), &vec![0]);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(density(&f, 1, &[t]).unwrap(), 1.0);
        }
    }

    #[test]
    fn density_vanishes_at_sine_zero() {
        let f = bm(1, 10);
        assert_eq!(density(&f, 2, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn density_integrates_to_one() {
        let (x, w) = gauss_legendre(256);
        let f1 = bm(1, 50);
        let q1: f64 = x
            .iter()
            .zip(&w)
            .map(|(x, w)| 0.5 * w * density(&f1, 7, &[0.5 * (x + 1.0)]).unwrap())
            .sum();
        assert!((q1 - 1.0).abs() < 1e-6);
        let f2 = bm(2, 50);
        let mut q2 = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                q2 += 0.25 * wi * wj * density(&f2, 5, &[0.5 * (xi + 1.0), 0.5 * (xj + 1.0)]).unwrap();
            }
        }
        assert!((q2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn self_normalizing_estimate() {
        let f = cosine_field(10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = draw_design(&f, 1, 50, &mut rng).unwrap();
        let est = estimate_coefficients(|_| 1.0, &f, &design);
        assert!((est[0] - 1.0).abs() < 1e-14);
        let f = bm(1, 10);
        let design = draw_design(&f, 1, 50, &mut rng).unwrap();
        let est = estimate_coefficients(|t| f.basis().eval(1, t[0]), &f, &design);
        assert!((est[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_design_for_constant_span() {
        let f = cosine_field(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = draw_design(&f, 1, 10_000, &mut rng).unwrap();
        let mut xs = d.points.clone();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max((x - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.02);
    }

    #[test]
    fn design_histogram_matches_density() {
        let f = bm(1, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let d = draw_design(&f, 4, n, &mut rng).unwrap();
        let mut bins = [0usize; 64];
        for &x in &d.points {
            bins[((x * 64.0) as usize).min(63)] += 1;
        }
        let (gx, gw) = gauss_legendre(16);
        for (b, &count) in bins.iter().enumerate().skip(1) {
            let (a, h) = (b as f64 / 64.0, 1.0 / 64.0);
            let mass: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(x, w)| 0.5 * h * w * density(&f, 4, &[a + 0.5 * h * (x + 1.0)]).unwrap())
                .sum();
            let emp = count as f64 / n as f64;
            assert!((emp - mass).abs() < 0.05 * mass + 4.0 * (mass / n as f64).sqrt(), "bin {b}");
        }
    }

    #[test]
    fn design_determinism_and_single_candidate() {
        let f = bm(2, 40);
        let a = draw_design(&f, 5, 30, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = draw_design(&f, 5, 30, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        let cal = f.coefficient_batch(1, DOMAIN_CALIBRATION, 0, 8);
        let (sel, scores) = select_design(&f, 5, 30, 1, &cal, 0, 11).unwrap();
        let direct = draw_design(&f, 5, 30, &mut stream_rng(11, DOMAIN_CANDIDATE, 0)).unwrap();
        assert_eq!(sel, direct);
        assert_eq!(scores.len(), 1);
        let (_, scores) = select_design(&f, 5, 30, 6, &cal, 0, 11).unwrap();
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min <= scores.iter().sum::<f64>() / 6.0);
    }

    #[test]
    fn single_pass_matches_direct_estimates() {
        let f = bm(2, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fr = simulate(&f, &mut rng);
        let design = draw_design(&f, 8, 40, &mut rng).unwrap();
        let res = single_pass(&fr, &design).unwrap();
        let direct = estimate_coefficients(|t| fr.eval_at(t).unwrap(), &f, &design);
        for (a, b) in res.estimates.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert_eq!(res.points_used, 40);
        let e = fr.exact_sq_error(&res.estimates).unwrap();
        assert!((e.in_span - res.err_trace[1].in_span).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = ApproxConfig::for_rate(64, 0.5, 1);
        assert_eq!((c.m, c.z, c.k), (32, 2.0, 13));
        assert!(c.validate().is_ok());
        c.m = 64;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("m < n"), "{err}");
    }

    #[test]
    fn bound_trace_closed_form() {
        let (tail, total) = (0.01, 0.25);
        let tr = bound_trace(tail, total, 128, 256, 20);
        let mut rec = total;
        for (s, b) in tr.iter().enumerate() {
            let closed = 2.0 * tail + 0.5f64.powi(s as i32) * (total - 2.0 * tail);
            assert_eq!(*b, closed);
            assert!((b - rec).abs() <= 1e-15 * rec);
            rec = tail + 0.5 * rec;
        }
    }

    #[test]
    fn iteration_accounts_points_and_keeps_orthogonal_part() {
        let f = bm(1, 256);
        let cfg = ApproxConfig {
            n: 16,
            m: 8,
            k: 5,
            z: 2.0,
            candidates: 2,
            r_cal: 8,
            seed: 3,
        };
        let fr = simulate(&f, &mut ChaCha8Rng::seed_from_u64(1));
        let res = iterate(&fr, &cfg).unwrap();
        assert_eq!(res.points_used, 80);
        assert_eq!(res.err_trace.len(), 6);
        let o = res.err_trace[0].out_span.to_bits();
        assert!(res.err_trace.iter().all(|e| e.out_span.to_bits() == o));
        assert_eq!(res.err_trace[0].in_span, fr.exact_sq_error(&[0.0; 8]).unwrap().in_span);
    }

    #[test]
    fn batch_results_do_not_depend_on_thread_count() {
        let f = bm(1, 128);
        let cfg = ApproxConfig {
            n: 16,
            m: 8,
            k: 3,
            z: 2.0,
            candidates: 2,
            r_cal: 8,
            seed: 9,
        };
        let plan = IterationPlan::build(&f, &cfg).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_plan(&f, &plan, 300, 1).unwrap());
        let b = four.install(|| run_plan(&f, &plan, 300, 1).unwrap());
        assert_eq!(a, b);
    }
}
