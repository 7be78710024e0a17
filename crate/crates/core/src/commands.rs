//! One function per CLI subcommand. Each writes a JSON report, CSV data and a
//! manifest into the output directory and reports pass or flagged.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::energy::{
    critical_power, lemma6_sup, lemma8_sup, sobolev_constant, verify_bubble_estimates, BubbleParams, LinkingParams, SobolevOptions,
};
use crate::error::{Error, Result};
use crate::fucik::{functional_i, CurveOptions, CurvePoint, CurveSample, FucikContext, FucikPoint, LevelOptions};
use crate::mesh::{DiscreteFunction, Mesh};
use crate::operator::{assemble, DiscreteOperator};
use crate::report::{num, validate, Recorder, ValidationReport};
use crate::solver::{
    classify, degiorgi_linfty, kappa_for, solve_linking, CriticalPointResult, DeGiorgiTrace, LinkingCase, LinkingProblem, SolverOptions,
};
use crate::spectrum::{eigensolve_with, EigenDecomposition, DENSE_EIG_LIMIT};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub manifest: PathBuf,
}

/// Overrides of the solver section from the command line.
#[derive(Debug, Clone, Default)]
pub struct PointOverride {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub level: Option<usize>,
    pub case: Option<crate::solver::CaseRequest>,
}

impl PointOverride {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(l) = self.level {
            cfg.fucik.level = l;
        }
        if let Some(c) = self.case {
            cfg.solver.case = c;
        }
        cfg.solver.a = self.a.or(cfg.solver.a);
        cfg.solver.b = self.b.or(cfg.solver.b);
    }
}

fn tag<T: Serialize>(t: &T) -> String {
    match serde_json::to_value(t) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => "unknown".into(),
    }
}

fn flag(b: bool) -> String {
    b.to_string()
}

/// Operator and enough eigenpairs for the configured level.
fn spectrum(cfg: &RunConfig) -> Result<(DiscreteOperator, EigenDecomposition)> {
    let op = assemble(&cfg.mesh)?;
    let count = cfg.spectrum.count.max(cfg.fucik.level + 1);
    let dec = eigensolve_with(&op, count, cfg.spectrum.cluster_tol, op.n() > DENSE_EIG_LIMIT)?;
    Ok((op, dec))
}

fn curve_options(cfg: &RunConfig, ctx: &FucikContext) -> CurveOptions {
    CurveOptions {
        tol: Some(cfg.fucik.bisect_tol * ctx.lam),
        level: LevelOptions { seed: cfg.solver.seed, ..Default::default() },
        ..Default::default()
    }
}

fn point(cfg: &RunConfig, ctx: &FucikContext) -> FucikPoint {
    let diagonal = ctx.lam + 0.1 * (ctx.lam_hi - ctx.lam);
    FucikPoint::new(cfg.solver.a.unwrap_or(diagonal), cfg.solver.b.unwrap_or(diagonal), cfg.fucik.level)
}

fn bubble_base(cfg: &RunConfig, mesh: &Mesh, eps: f64) -> Result<BubbleParams> {
    let e = &cfg.energy;
    BubbleParams::new(mesh, eps, e.mu, cfg.x0(), e.mu0)
}

fn linking_params(cfg: &RunConfig) -> Result<LinkingParams> {
    let (dim, s) = (cfg.mesh.dim, cfg.mesh.s);
    let mid = LinkingParams::midpoint(dim, s)?;
    LinkingParams::new(dim, s, cfg.energy.beta.unwrap_or(mid.beta), cfg.energy.gamma.unwrap_or(mid.gamma))
}

pub fn cmd_eigs(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let (op, dec) = spectrum(cfg)?;
    rec.stage("eigensolve");
    let mut rows = Vec::new();
    for (l, lv) in dec.levels.iter().enumerate() {
        for k in lv.start..lv.start + lv.multiplicity {
            rows.push(vec![(k + 1).to_string(), (l + 1).to_string(), num(dec.values[k]), num(dec.residuals[k])]);
        }
    }
    rec.csv("eigenvalues.csv", &["index", "level", "lambda", "residual"], &rows)?;
    let max_residual = dec.residuals.iter().cloned().fold(0.0, f64::max);
    let pass = max_residual <= 1e-8;
    #[derive(Serialize)]
    struct Body<'a> {
        unknowns: usize,
        complete: bool,
        levels: &'a [crate::spectrum::Level],
        max_residual: f64,
        pass: bool,
    }
    rec.json("eigs.json", "eigenvalues", &Body { unknowns: op.n(), complete: dec.complete, levels: dec.reported_levels(), max_residual, pass })?;
    rec.stage("write");
    let summary = format!("{} levels, lambda_1 = {:.10}, max residual {max_residual:.2e}", dec.reported_levels().len(), dec.lambda(1));
    Ok(Outcome { pass, summary, manifest: rec.finish("eigs", cfg.solver.seed, cfg, pass)? })
}

pub fn cmd_fucik(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let (op, dec) = spectrum(cfg)?;
    let ctx = FucikContext::new(&op, &dec, cfg.fucik.level)?;
    rec.stage("eigensolve");
    let grid = if cfg.fucik.a_grid.is_empty() { ctx.default_a_grid(cfg.fucik.points) } else { cfg.fucik.a_grid.clone() };
    let sample = ctx.curve_sample(&grid, &curve_options(cfg, &ctx))?;
    rec.stage("curves");
    let nu_ok = sample.nu_decreasing();
    let pass = nu_ok && sample.mu_decreasing() && sample.ordered();
    // the curve table is only written once ν is confirmed decreasing
    if nu_ok {
        let cells = |p: &CurvePoint| vec![num(p.value), num(p.bracket.0), num(p.bracket.1), tag(&p.flag)];
        let rows: Vec<Vec<String>> = sample
            .nu
            .iter()
            .zip(&sample.mu)
            .map(|(n, m)| {
                let mut r = vec![num(n.a)];
                r.extend(cells(n));
                r.extend(cells(m));
                r
            })
            .collect();
        rec.csv("fucik_curves.csv", &["a", "nu", "nu_lo", "nu_hi", "nu_flag", "mu", "mu_lo", "mu_hi", "mu_flag"], &rows)?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        lambda_lo: f64,
        lambda: f64,
        lambda_hi: f64,
        sample: &'a CurveSample,
        nu_decreasing: bool,
        mu_decreasing: bool,
        ordered: bool,
        pass: bool,
    }
    let body = Body {
        lambda_lo: ctx.lam_lo,
        lambda: ctx.lam,
        lambda_hi: ctx.lam_hi,
        sample: &sample,
        nu_decreasing: nu_ok,
        mu_decreasing: sample.mu_decreasing(),
        ordered: sample.ordered(),
        pass,
    };
    rec.json("fucik.json", "fucik_curves", &body)?;
    rec.stage("write");
    let summary = format!(
        "level {} on {} a-values: nu decreasing {}, mu decreasing {}, ordered {}",
        cfg.fucik.level,
        grid.len(),
        nu_ok,
        sample.mu_decreasing(),
        sample.ordered()
    );
    Ok(Outcome { pass, summary, manifest: rec.finish("fucik", cfg.solver.seed, cfg, pass)? })
}

pub fn cmd_bubble_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let op = assemble(&cfg.mesh)?;
    let eps = &cfg.energy.eps_grid;
    let bp = bubble_base(cfg, &op.mesh, eps[0])?;
    let report = verify_bubble_estimates(&op, &bp, eps)?;
    rec.stage("estimates");
    let mut header = vec!["eps"];
    header.extend(report.records.iter().map(|r| r.name.as_str()));
    let rows: Vec<Vec<String>> = eps
        .iter()
        .enumerate()
        .map(|(i, &e)| std::iter::once(num(e)).chain(report.records.iter().map(|r| num(r.values[i]))).collect())
        .collect();
    rec.csv("bubble_estimates.csv", &header, &rows)?;
    rec.json("bubble_check.json", "bubble_estimates", &report)?;
    rec.stage("write");
    let summary = report
        .records
        .iter()
        .filter(|r| r.checked)
        .map(|r| format!("{} {:.3} (expected {:.3})", r.name, r.fitted_exponent, r.expected_exponent))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = report.pass;
    Ok(Outcome { pass, summary, manifest: rec.finish("bubble-check", cfg.solver.seed, cfg, pass)? })
}

/// u = v + τ(v) for ± basis vectors and random mixtures of N_l, normalized
/// in D; these lie in B ∩ {ℐ ≤ 0} above μ_l.
fn b_sample(ctx: &FucikContext, pt: &FucikPoint, extra: usize, seed: u64) -> Result<Vec<DiscreteFunction>> {
    let d = ctx.d_hi;
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            dirs.push(DVector::from_fn(d, |i, _| if i == k { sign } else { 0.0 }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        dirs.push(DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0));
    }
    dirs.iter()
        .map(|yv| {
            let t = ctx.tau_coords(yv, pt.a, pt.b, None)?;
            let mut y = ctx.embed(0, yv);
            y.rows_mut(d, ctx.n - d).copy_from(&t.y);
            Ok(ctx.function(&(&y / y.norm())))
        })
        .collect()
}

#[derive(Serialize)]
struct LinkingRow {
    eps: f64,
    mu: f64,
    sup: f64,
    sigma: f64,
    tau: f64,
    c_star: f64,
    margin: f64,
    status: String,
}

pub fn cmd_linking_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let (op, dec) = spectrum(cfg)?;
    let ctx = FucikContext::new(&op, &dec, cfg.fucik.level)?;
    let pt = point(cfg, &ctx);
    let (case, levels) = classify(&ctx, &pt, cfg.solver.case, &curve_options(cfg, &ctx))?;
    rec.stage("classify");
    let s_h = sobolev_constant(&op, &SobolevOptions::default())?.s_h;
    rec.stage("sobolev");
    let params = linking_params(cfg)?;
    let base = bubble_base(cfg, &op.mesh, cfg.energy.eps_grid[0])?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let sample = match case {
        LinkingCase::AboveMu => {
            let s = b_sample(&ctx, &pt, 6, cfg.solver.seed)?;
            // ℐ ≤ 0 on B above μ; samples that miss it by round-off are dropped
            s.into_iter().filter(|u| functional_i(&op, u, pt.a, pt.b) <= 0.0).collect()
        }
        LinkingCase::BelowNu => Vec::new(),
    };
    for &eps in &cfg.energy.eps_grid {
        let row = match case {
            LinkingCase::AboveMu => match lemma6_sup(&op, &sample, &base, eps, &params, (pt.a, pt.b), s_h) {
                Ok(r) => {
                    let row = LinkingRow { eps, mu: r.mu, sup: r.sup, sigma: r.sigma, tau: r.tau, c_star: r.c_star, margin: r.margin, status: status(r.pass) };
                    reports.push(serde_json::to_value(&r)?);
                    row
                }
                Err(e @ (Error::InvalidInput(_) | Error::SupportOutsideDomain(_))) => inadmissible(eps, eps.powf(-params.gamma), &e, &mut reports),
                Err(e) => return Err(e),
            },
            LinkingCase::BelowNu => match lemma8_sup(&op, &dec, pt.level - 1, &base.with_eps(eps), (pt.a, pt.b), s_h) {
                Ok(r) => {
                    let row = LinkingRow { eps, mu: r.mu, sup: r.sup, sigma: r.sigma, tau: r.tau, c_star: r.c_star, margin: r.margin, status: status(r.pass) };
                    reports.push(serde_json::to_value(&r)?);
                    row
                }
                Err(e @ (Error::InvalidInput(_) | Error::SupportOutsideDomain(_))) => inadmissible(eps, base.mu, &e, &mut reports),
                Err(e) => return Err(e),
            },
        };
        rows.push(row);
    }
    rec.stage("sup");
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.eps), num(r.mu), num(r.sup), num(r.sigma), num(r.tau), num(r.c_star), num(r.margin), r.status.clone()])
        .collect();
    rec.csv("linking_check.csv", &["eps", "mu", "sup", "sigma", "tau", "c_star", "margin", "status"], &table)?;
    let pass = rows.iter().all(|r| r.status == "pass");
    #[derive(Serialize)]
    struct Body {
        point: FucikPoint,
        case: LinkingCase,
        n_level: f64,
        m_level: f64,
        beta: f64,
        gamma: f64,
        s_h: f64,
        samples: usize,
        rows: Vec<LinkingRow>,
        reports: Vec<serde_json::Value>,
        pass: bool,
    }
    let summary = format!(
        "{} at ({:.6}, {:.6}): {} of {} scales with positive margin",
        tag(&case),
        pt.a,
        pt.b,
        rows.iter().filter(|r| r.status == "pass").count(),
        rows.len()
    );
    let body = Body {
        point: pt,
        case,
        n_level: levels.0,
        m_level: levels.1,
        beta: params.beta,
        gamma: params.gamma,
        s_h,
        samples: sample.len(),
        rows,
        reports,
        pass,
    };
    rec.json("linking_check.json", "linking_check", &body)?;
    rec.stage("write");
    Ok(Outcome { pass, summary, manifest: rec.finish("linking-check", cfg.solver.seed, cfg, pass)? })
}

fn status(pass: bool) -> String {
    if pass { "pass" } else { "fail" }.into()
}

fn inadmissible(eps: f64, mu: f64, e: &Error, reports: &mut Vec<serde_json::Value>) -> LinkingRow {
    reports.push(serde_json::json!({ "eps": eps, "inadmissible": e.to_string() }));
    LinkingRow { eps, mu, sup: f64::NAN, sigma: f64::NAN, tau: f64::NAN, c_star: f64::NAN, margin: f64::NAN, status: "inadmissible".into() }
}

/// Builds and solves the configured linking problem.
pub fn solve_configured(cfg: &RunConfig) -> Result<(DiscreteOperator, CriticalPointResult)> {
    let (op, dec) = spectrum(cfg)?;
    let ctx = FucikContext::new(&op, &dec, cfg.fucik.level)?;
    let pt = point(cfg, &ctx);
    let eps = cfg.solver.eps.unwrap_or(4.0 * op.mesh.h);
    let bp = bubble_base(cfg, &op.mesh, eps)?;
    let prob = LinkingProblem::new(&op, &dec, pt, cfg.solver.case, bp)?;
    let opts = SolverOptions { tol: cfg.solver.tol, seed: cfg.solver.seed, ..Default::default() };
    let result = solve_linking(&op, &prob, &opts)?;
    Ok((op, result))
}

fn write_solution(rec: &mut Recorder, result: &CriticalPointResult) -> Result<()> {
    let mesh = &result.u.mesh;
    let nodes = mesh.nodes();
    let two_d = mesh.dim() == 2;
    let rows: Vec<Vec<String>> = nodes
        .iter()
        .zip(result.u.coeffs.iter())
        .map(|(x, &u)| if two_d { vec![num(x[0]), num(x[1]), num(u)] } else { vec![num(x[0]), num(u)] })
        .collect();
    let header: &[&str] = if two_d { &["x", "y", "u"] } else { &["x", "u"] };
    rec.csv("solution.csv", header, &rows)?;
    let trace: Vec<Vec<String>> = result
        .path
        .iter()
        .map(|p| vec![p.stage.to_string(), p.iteration.to_string(), num(p.energy), num(p.gradient), num(p.step)])
        .collect();
    rec.csv("solve_trace.csv", &["stage", "iteration", "energy", "gradient", "step"], &trace)?;
    rec.json("solve.json", "critical_point", result)
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let (_, result) = solve_configured(cfg)?;
    rec.stage("solve");
    write_solution(&mut rec, &result)?;
    rec.stage("write");
    let summary = format!(
        "{} at ({:.6}, {:.6}): c = {:.10}, residual {:.2e}, |u|_D {:.4}, bracket [{:.6}, {:.6}], flag {}",
        tag(&result.case),
        result.pt.a,
        result.pt.b,
        result.level,
        result.residual,
        result.norm_d,
        result.inf_a,
        result.sup_q,
        tag(&result.flag)
    );
    let pass = result.success;
    Ok(Outcome { pass, summary, manifest: rec.finish("solve", cfg.solver.seed, cfg, pass)? })
}

pub fn cmd_degiorgi(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut rec = Recorder::new(out)?;
    let (op, result) = solve_configured(cfg)?;
    rec.stage("solve");
    let p = critical_power(&op)?;
    let kappa = kappa_for(&result.u, result.pt.a, result.pt.b, p);
    let dg = degiorgi_linfty(&result.u, kappa, 0.0, cfg.solver.k_max, result.s_h);
    rec.stage("degiorgi");
    let rows_of = |t: &DeGiorgiTrace| -> Vec<Vec<String>> {
        t.states
            .iter()
            .map(|s| {
                vec![
                    num(t.sign),
                    s.k.to_string(),
                    num(s.c_k),
                    num(s.a_k),
                    num(s.u_k),
                    num(s.decay_bound),
                    num(s.recursion_bound),
                    num(s.gamma_exp),
                    num(s.next_measure),
                    num(s.measure_bound),
                    flag(s.monotone),
                    flag(s.nested),
                    flag(s.dominated),
                ]
            })
            .collect()
    };
    let mut rows = rows_of(&dg.positive);
    rows.extend(rows_of(&dg.negative));
    rec.csv(
        "degiorgi.csv",
        &[
            "sign",
            "k",
            "c_k",
            "a_k",
            "u_k",
            "decay_bound",
            "recursion_bound",
            "gamma_exp",
            "next_measure",
            "measure_bound",
            "monotone",
            "nested",
            "dominated",
        ],
        &rows,
    )?;
    let pass = result.success && dg.certified && dg.bound >= dg.nodal_max;
    #[derive(Serialize)]
    struct Body<'a> {
        solve_flag: crate::solver::SolveFlag,
        residual: f64,
        report: &'a crate::solver::DeGiorgiReport,
        pass: bool,
    }
    rec.json("degiorgi.json", "degiorgi", &Body { solve_flag: result.flag, residual: result.residual, report: &dg, pass })?;
    rec.stage("write");
    let summary = format!(
        "certified {} with bound {:.6e} against max|u| {:.6}, kappa {:.4}, solve flag {}",
        dg.certified,
        dg.bound,
        dg.nodal_max,
        kappa,
        tag(&result.flag)
    );
    Ok(Outcome { pass, summary, manifest: rec.finish("degiorgi", cfg.solver.seed, cfg, pass)? })
}

pub fn cmd_validate(path: &Path) -> Result<ValidationReport> {
    validate(path)
}
