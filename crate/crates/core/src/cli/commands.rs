use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use super::{CliError, CommandKind, ExperimentConfig};
use crate::additive_spectrum::{explosion_coefficient, AdditiveModel};
use crate::field_sim::{default_truncation, simulate, Field};
use crate::format_f64 as fmt;
use crate::prob_setting::{calibrate_c0, verify, ProbRequirement};
use crate::seed::{stream_rng, DOMAIN_FIELD};
use crate::std_approx::{
    default_steps, rate_sweep, run_plan, ApproxConfig, IterationPlan, PointRate,
};
use crate::tensor_spectrum::{
    asymptotic_constants, cardinality_relative, limit_prediction, top_k, CardinalityBackend,
    RankedSpectrum,
};

/// Rows listed by `cardinality` at most.
const MAX_CARDINALITY_ROWS: u128 = 100_000;
/// Replications per grid point when calibrating `C0`.
pub const CALIBRATION_REPS: usize = 1000;

const DEFAULT_TOP_N: usize = 10;
const DEFAULT_N: usize = 64;
const DEFAULT_APPROX_REPS: usize = 1000;
const DEFAULT_SWEEP_REPS: usize = 200;
const DEFAULT_PROB_REPS: usize = 10_000;
const DEFAULT_GAMMA: f64 = 0.1;
const DEFAULT_GRID: [usize; 5] = [16, 32, 64, 128, 256];

type Outputs = Vec<String>;

fn require<T: Copy>(v: Option<T>, name: &str, cmd: CommandKind) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(format!("`{name}` is required for `{}`", cmd.name())))
}

fn create(dir: &Path, name: &str, outputs: &mut Outputs) -> Result<BufWriter<File>, CliError> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T, outputs: &mut Outputs) -> Result<(), CliError> {
    let mut w = create(dir, name, outputs)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn index_text(k: &[u32]) -> String {
    k.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

fn write_ranked<W: Write>(mut w: W, ranked: &RankedSpectrum, rows: usize) -> std::io::Result<()> {
    writeln!(w, "rank,index,value,cumsum,tail")?;
    for j in 0..rows.min(ranked.len()) {
        writeln!(
            w,
            "{},{},{},{},{}",
            j + 1,
            index_text(ranked.index(j)),
            fmt(ranked.value(j)),
            fmt(ranked.partial_sum(j + 1)),
            fmt(ranked.tail_after(j + 1)),
        )?;
    }
    w.flush()
}

fn ranked_for(cfg: &ExperimentConfig, n: usize) -> crate::Result<RankedSpectrum> {
    match cfg.additive_model()? {
        Some(model) => model.merged_top_k(n),
        None => top_k(&cfg.build_spectrum()?, cfg.field.d(), n),
    }
}

fn need_additive(cfg: &ExperimentConfig, cmd: CommandKind) -> Result<AdditiveModel, CliError> {
    cfg.additive_model()?.ok_or_else(|| {
        CliError::config(format!(
            "`{}` needs an additive field: set field.kind = \"additive\" or pass --b",
            cmd.name()
        ))
    })
}

/// Builds fields with `T = truncation` or the default for span size `m`.
fn field_factory(cfg: &ExperimentConfig) -> crate::Result<impl Fn(usize) -> crate::Result<Arc<Field>>> {
    let spec = cfg.build_spectrum()?;
    let model = cfg.additive_model()?;
    let d = cfg.field.d();
    let fixed_t = cfg.truncation;
    Ok(move |m: usize| {
        let t = fixed_t.unwrap_or_else(|| default_truncation(m));
        let f = match &model {
            Some(model) => Field::additive(model, t)?,
            None => Field::tensor(&spec, d, t)?,
        };
        Ok(Arc::new(f))
    })
}

/// `(r, log exponent of the point-count rate)`.
fn point_rate(cfg: &ExperimentConfig) -> crate::Result<PointRate> {
    match cfg.additive_model()? {
        Some(model) => {
            let e = model.rate_exponents()?;
            Ok(PointRate {
                r: (1.0 - e.power) / 2.0,
                log_exp: e.log_exp,
            })
        }
        None => {
            let c = asymptotic_constants(&cfg.build_spectrum()?, cfg.field.d())?;
            Ok(PointRate {
                r: c.r,
                log_exp: c.rate_log_exponent(),
            })
        }
    }
}

fn approx_template(cfg: &ExperimentConfig, n: usize, p: Option<f64>) -> ApproxConfig {
    let a = &cfg.approx;
    let z = a.z.unwrap_or_else(|| 2.0 * p.unwrap_or(0.5) + 1.0);
    ApproxConfig {
        n,
        m: a.m.unwrap_or(n / 2),
        k: a.k.unwrap_or_else(|| default_steps(n, z)),
        z,
        candidates: a.candidates.unwrap_or(8),
        r_cal: a.r_cal.unwrap_or(64),
        seed: cfg.seed,
    }
}

pub fn run_command(kind: CommandKind, cfg: &ExperimentConfig, dir: &Path) -> Result<Outputs, CliError> {
    let mut out = Outputs::new();
    match kind {
        CommandKind::Spectrum => spectrum(cfg, dir, &mut out)?,
        CommandKind::Topk => {
            let n = cfg.top_n.unwrap_or(DEFAULT_TOP_N);
            let ranked = ranked_for(cfg, n)?;
            write_ranked(create(dir, "topk.csv", &mut out)?, &ranked, n)?;
        }
        CommandKind::Cardinality => cardinality(cfg, dir, &mut out)?,
        CommandKind::AdditiveSpectrum => {
            let model = need_additive(cfg, kind)?;
            let mut w = create(dir, "additive_spectrum.csv", &mut out)?;
            writeln!(w, "h,multiplier,multiplicity,layer_mass")?;
            for l in model.layers()? {
                writeln!(
                    w,
                    "{},{},{},{}",
                    l.h,
                    fmt(l.multiplier),
                    l.multiplicity,
                    fmt(l.layer_mass)
                )?;
            }
            w.flush()?;
        }
        CommandKind::Allocation => {
            let model = need_additive(cfg, kind)?;
            let m = require(cfg.top_n, "N", kind)?;
            let plan = model.allocation(m)?;
            let mut w = create(dir, "allocation.csv", &mut out)?;
            writeln!(w, "h,Q_h,m_h")?;
            for (h, (q, mh)) in plan.q_h.iter().zip(&plan.m_h).enumerate() {
                writeln!(w, "{},{},{}", h + 1, fmt(*q), mh)?;
            }
            w.flush()?;
            let (lhs, rhs) = plan.display_chain();
            let (plhs, prhs) = plan.display_chain_power_only();
            write_json(
                dir,
                "allocation.json",
                &json!({
                    "m": plan.m, "Q": plan.q, "r": plan.r, "log_power": plan.log_power,
                    "chain_lhs": lhs, "chain_rhs": rhs,
                    "power_only_lhs": plhs, "power_only_rhs": prhs,
                }),
                &mut out,
            )?;
        }
        CommandKind::Simulate => {
            let t = cfg.truncation.or(cfg.top_n).unwrap_or(default_truncation(0));
            let field = {
                let mut c = cfg.clone();
                c.truncation = Some(t);
                field_factory(&c)?(0)?
            };
            let mut rng = stream_rng(cfg.seed, DOMAIN_FIELD, 0);
            let fr = simulate(&field, &mut rng);
            fr.write_csv(create(dir, "realization.csv", &mut out)?)?;
            write_json(
                dir,
                "simulate.json",
                &json!({
                    "truncation": field.len(),
                    "sq_norm": fr.sq_norm(),
                    "retained_variance": field.total_mass() - field.analytic_tail(),
                    "analytic_tail": field.analytic_tail(),
                    "total_variance": field.total_mass(),
                }),
                &mut out,
            )?;
        }
        CommandKind::Approximate => approximate(cfg, dir, &mut out)?,
        CommandKind::RateSweep => sweep(cfg, dir, &mut out)?,
        CommandKind::Prob => prob(cfg, dir, &mut out)?,
        CommandKind::Explosion => {
            let spec = cfg.build_spectrum()?;
            let lt = spec.spectral_moments_with_constant()?.lambda_tilde;
            let p = 1.0 - spec.lambda0_sq() / spec.full_mass();
            let grid = cfg
                .f_grid
                .clone()
                .unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect());
            let mut w = create(dir, "explosion.csv", &mut out)?;
            writeln!(w, "f,V")?;
            for f in grid {
                writeln!(w, "{},{}", fmt(f), fmt(explosion_coefficient(f, p, lt)?))?;
            }
            w.flush()?;
        }
    }
    Ok(out)
}

fn spectrum(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let spec = cfg.build_spectrum()?;
    let mom = spec.spectral_moments()?;
    let mut v = json!({
        "Lambda": mom.lambda,
        "M": mom.m,
        "M2": mom.m2,
        "sigma_sq": mom.sigma_sq,
        "Lambda_tilde": mom.lambda_tilde,
        "lambda0_sq": spec.lambda0_sq(),
        "basis": spec.basis().family().name(),
    });
    if spec.lambda0_sq() > 0.0 {
        let c = spec.spectral_moments_with_constant()?;
        v["with_constant"] = json!({
            "Lambda": c.lambda, "M": c.m, "M2": c.m2,
            "sigma_sq": c.sigma_sq, "Lambda_tilde": c.lambda_tilde,
        });
    }
    write_json(dir, "spectrum.json", &v, out)
}

fn cardinality(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let eps = require(cfg.eps, "eps", CommandKind::Cardinality)?;
    let backend = cfg.backend.unwrap_or(CardinalityBackend::Auto);
    let d = cfg.field.d();
    let (count, prediction) = match cfg.additive_model()? {
        Some(model) => (model.cardinality_relative(eps)?, serde_json::Value::Null),
        None => {
            let spec = cfg.build_spectrum()?;
            let count = cardinality_relative(&spec, d, eps, backend)?;
            let pred = match limit_prediction(&spec, eps) {
                Ok(p) => json!({
                    "q_star": p.q_star,
                    "two_q_star": 2.0 * p.q_star,
                    "normalized": p.normalized(d, count),
                    "predicted_ln_m": p.predicted_ln_m(d),
                }),
                Err(_) => serde_json::Value::Null,
            };
            (count, pred)
        }
    };
    let listed = count <= MAX_CARDINALITY_ROWS && count > 0;
    if listed {
        let ranked = ranked_for(cfg, count as usize)?;
        write_ranked(create(dir, "cardinality.csv", out)?, &ranked, count as usize)?;
    }
    write_json(
        dir,
        "cardinality.json",
        &json!({
            "d": d, "eps": eps, "backend": backend,
            "cardinality": count, "rows_listed": listed, "prediction": prediction,
        }),
        out,
    )
}

fn approximate(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let n = cfg.approx.n.unwrap_or(DEFAULT_N);
    let p = point_rate(cfg).ok().map(|r| r.r - 0.5);
    let acfg = approx_template(cfg, n, p);
    let field = field_factory(cfg)?(acfg.m)?;
    let plan = IterationPlan::build(&field, &acfg)?;
    let reps = cfg.reps.unwrap_or(DEFAULT_APPROX_REPS);
    let res = run_plan(&field, &plan, reps, cfg.seed)?;
    let mut w = create(dir, "approximate_trace.csv", out)?;
    writeln!(w, "step,mc_error,stderr,in_span,bound")?;
    for s in 0..res.err_trace.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            s,
            fmt(res.err_trace[s]),
            fmt(res.err_stderr[s]),
            fmt(res.in_span_trace[s]),
            fmt(res.bound_trace[s]),
        )?;
    }
    w.flush()?;
    write_json(
        dir,
        "approximate.json",
        &json!({
            "n": res.n, "m": res.m, "k": res.k, "z": acfg.z,
            "candidates": acfg.candidates, "r_cal": acfg.r_cal,
            "truncation": field.len(), "reps": reps,
            "points_used": res.points_used,
            "mc_error": res.mc_error(), "stderr": res.mc_stderr(),
            "total_variance": field.total_mass(),
            "tail_m": field.tail_after(res.m),
            "bound_limit": field.tail_after(res.m) / (1.0 - res.m as f64 / res.n as f64),
            "out_span_invariant": res.out_span_invariant,
            "candidate_scores": plan.scores,
        }),
        out,
    )
}

fn sweep(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let rate = point_rate(cfg)?;
    let grid = cfg.n_grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let mut tmpl = approx_template(cfg, grid[0], Some(rate.r - 0.5));
    tmpl.m = grid[0] / 2;
    let reps = cfg.reps.unwrap_or(DEFAULT_SWEEP_REPS);
    let rows = rate_sweep(&field_factory(cfg)?, &grid, &tmpl, rate, reps)?;
    let mut w = create(dir, "rate_sweep.csv", out)?;
    writeln!(w, "n,m,k,points_used,mc_error,stderr,bound_pyth4,bound_prop")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.k,
            r.points_used,
            fmt(r.mc_error),
            fmt(r.stderr),
            fmt(r.bound_pyth4),
            fmt(r.bound_prop)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn prob(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let eps = require(cfg.eps, "eps", CommandKind::Prob)?;
    let gamma = cfg.gamma.unwrap_or(DEFAULT_GAMMA);
    let req = ProbRequirement::new(eps, gamma)?;
    let rate = point_rate(cfg)?;
    let beta = (rate.log_exp + 1.0) / (2.0 * rate.r) - 1.0;
    let grid = cfg.n_grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let tmpl = approx_template(cfg, grid[0], Some(rate.r - 0.5));
    let factory = field_factory(cfg)?;
    let cal = calibrate_c0(&factory, rate.r, beta, &grid, &tmpl, CALIBRATION_REPS)?;
    let reps = cfg.reps.unwrap_or(DEFAULT_PROB_REPS);
    let rep = verify(&req, &cal, &factory, &tmpl, reps)?;
    write_json(
        dir,
        "prob.json",
        &json!({
            "eps": eps, "gamma": gamma, "v": req.v, "C0": cal.c0,
            "budget": rep.budget, "closed_form_budget": rep.closed_form_budget,
            "exceedance": rep.exceedance, "reps": reps,
            "tolerance": rep.tolerance, "passes": rep.passes(),
            "n": rep.n, "m": rep.m, "k": rep.k, "points_used": rep.points_used,
            "mean_sq_error": rep.mean_sq_error,
            "calibration": {
                "r": cal.r, "beta": cal.beta, "log_exp": cal.log_exp(),
                "grid": cal.grid, "errors": cal.errors, "safety": cal.safety,
                "reps": CALIBRATION_REPS,
            },
        }),
        out,
    )
}
