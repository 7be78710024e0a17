//! Linking min-max search for nontrivial critical points of ℰ.
//!
//! Q = {β + se : β ∈ base, s ≥ 0} is swept by a local minimax iteration: the
//! peak p(e) maximizes ℰ over the half-span of the base and e, and e moves
//! against ∇ℰ(p(e)) while the peak value decreases. This deforms the top of Q
//! with the base held fixed. The last peak is then polished by Newton on
//! ∇ℰ = 0 with the exact Hessian. The bracket inf_A ℰ ≤ c ≤ sup_Q ℰ is
//! reported with every result.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CoordEnergy;
use crate::energy::{
    annulus_cutoff_v, bubble, c_star, critical_power, energy_e, gradient_e, hessian_e, i_minus_t_norm, mass_dual_norm, sobolev_constant,
    BubbleParams, SobolevOptions,
};
use crate::error::{Error, Result};
use crate::fucik::{CurveOptions, FucikContext, FucikPoint};
use crate::mesh::DiscreteFunction;
use crate::operator::DiscreteOperator;
use crate::optim::{lbfgs, LbfgsOptions};
use crate::spectrum::EigenDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseRequest {
    #[default]
    Auto,
    BelowNu,
    AboveMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkingCase {
    /// b < ν_{l−1}(a): base T(N_{l−1}) with T v = v_μ.
    BelowNu,
    /// b ≥ μ_l(a): base B = {v + τ(v) : v ∈ N_l}.
    AboveMu,
}

/// The pinned base of Q in coordinates.
#[derive(Debug, Clone)]
pub enum BaseSet {
    /// D-orthonormal coordinates spanning T(N_{l−1}).
    Cut { basis: DMatrix<f64> },
    /// The graph of τ over N_l; linear (τ ≡ 0) on the diagonal a = b.
    Graph { linear: bool },
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Success threshold on the M-dual residual.
    pub tol: f64,
    pub seed: u64,
    /// Gradient norm at which the minimax sweep hands over to Newton.
    pub sweep_tol: f64,
    pub sweep_max: usize,
    pub newton_max: usize,
    /// ρ of the set A as a fraction of ‖p(e₀)‖_D.
    pub rho_factor: f64,
    pub sphere_starts: usize,
    /// Discrete Sobolev constant; computed on the mesh when `None`.
    pub sobolev: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            seed: 1,
            sweep_tol: 1e-7,
            sweep_max: 2000,
            newton_max: 60,
            rho_factor: 0.05,
            sphere_starts: 8,
            sobolev: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkingProblem {
    pub pt: FucikPoint,
    pub case: LinkingCase,
    pub bubble: BubbleParams,
    pub e: DiscreteFunction,
    pub base: BaseSet,
    /// Curve margin of the below-ν case, (a,b) → (a,b)/(1−δ).
    pub delta: Option<f64>,
    /// n_{l−1}(a,b) and m_l(a,b); n > 0 is below ν, m ≤ 0 above μ.
    pub levels: (f64, f64),
    /// ‖I − T‖ in the below-ν case.
    pub op_norm: Option<f64>,
    /// Number of one-cell shifts of x₀ needed to get ±e off the base.
    pub x0_retries: usize,
    ctx: FucikContext,
    e_coords: DVector<f64>,
}

const MAX_X0_RETRIES: usize = 5;
const BASE_MEMBERSHIP_TOL: f64 = 1e-6;
const NODAL_POLISH: usize = 3;

impl LinkingProblem {
    pub fn new(
        op: &DiscreteOperator,
        dec: &EigenDecomposition,
        pt: FucikPoint,
        request: CaseRequest,
        bubble_params: BubbleParams,
    ) -> Result<Self> {
        let ctx = FucikContext::new(op, dec, pt.level)?;
        let copts = CurveOptions::default();
        let (case, levels) = classify(&ctx, &pt, request, &copts)?;
        let delta = match case {
            LinkingCase::BelowNu => Some(curve_margin(&ctx, &pt, &copts)?),
            LinkingCase::AboveMu => None,
        };
        let mut params = bubble_params;
        let mut retries = 0;
        loop {
            let e = bubble(&params, &op.mesh)?;
            let e_coords = ctx.from_nodal(&e.coeffs);
            let base = match case {
                LinkingCase::BelowNu => BaseSet::Cut { basis: cut_basis(op, dec, &ctx, pt.level - 1, params.mu, params.x0)? },
                LinkingCase::AboveMu => BaseSet::Graph { linear: pt.a == pt.b },
            };
            let mut problem = Self {
                pt,
                case,
                bubble: params,
                e,
                base,
                delta,
                levels,
                op_norm: None,
                x0_retries: retries,
                ctx: ctx.clone(),
                e_coords,
            };
            if !problem.e_meets_base(1.0)? && !problem.e_meets_base(-1.0)? {
                if case == LinkingCase::BelowNu {
                    problem.op_norm = Some(i_minus_t_norm(op, dec, pt.level - 1, params.mu, params.x0)?);
                }
                return Ok(problem);
            }
            if retries == MAX_X0_RETRIES {
                return Err(Error::InvalidInput(format!("±e stays on the base after {MAX_X0_RETRIES} shifts of x0")));
            }
            retries += 1;
            let mut x0 = params.x0;
            x0[0] += op.mesh.h;
            params = BubbleParams::new(&op.mesh, params.eps, params.mu, x0, params.mu0)?;
        }
    }

    pub fn context(&self) -> &FucikContext {
        &self.ctx
    }

    /// Whether sign·e lies on the base, up to a relative distance.
    fn e_meets_base(&self, sign: f64) -> Result<bool> {
        let y = &self.e_coords * sign;
        let dist = match &self.base {
            BaseSet::Cut { basis } => (&y - basis * basis.tr_mul(&y)).norm(),
            BaseSet::Graph { .. } => {
                let d = self.ctx.d_hi;
                let v = y.rows(0, d).into_owned();
                let t = self.ctx.tau_coords(&v, self.pt.a, self.pt.b, None)?;
                (y.rows(d, self.ctx.n - d) - t.y).norm()
            }
        };
        Ok(dist <= BASE_MEMBERSHIP_TOL * y.norm())
    }

    fn base_dim(&self) -> usize {
        match &self.base {
            BaseSet::Cut { basis } => basis.ncols(),
            BaseSet::Graph { .. } => self.ctx.d_hi,
        }
    }

    /// Linear bases have an explicit orthonormal span.
    fn base_span(&self) -> Option<DMatrix<f64>> {
        match &self.base {
            BaseSet::Cut { basis } => Some(basis.clone()),
            BaseSet::Graph { linear: true } => Some(DMatrix::identity(self.ctx.n, self.ctx.d_hi)),
            BaseSet::Graph { linear: false } => None,
        }
    }

    fn base_point(&self, c: &DVector<f64>, warm: &RefCell<Option<DVector<f64>>>) -> Result<DVector<f64>> {
        match &self.base {
            BaseSet::Cut { basis } => Ok(basis * c),
            BaseSet::Graph { linear: true } => Ok(self.ctx.embed(0, c)),
            BaseSet::Graph { linear: false } => {
                let t = self.ctx.tau_coords(c, self.pt.a, self.pt.b, warm.borrow().as_ref())?;
                let mut y = self.ctx.embed(0, c);
                y.rows_mut(self.ctx.d_hi, self.ctx.n - self.ctx.d_hi).copy_from(&t.y);
                *warm.borrow_mut() = Some(t.y);
                Ok(y)
            }
        }
    }
}

/// The linking case of `pt` from ν_{l−1}(a) and μ_l(a), checked against an
/// explicit request. Returns the case and the two curve values.
pub fn classify(ctx: &FucikContext, pt: &FucikPoint, request: CaseRequest, copts: &CurveOptions) -> Result<(LinkingCase, (f64, f64))> {
    ctx.check_point(pt)?;
    // both levels decrease in b, so one sign replaces a bisection of the curve
    let n = ctx.n_level(pt.a, pt.b, &copts.level, None)?.value;
    let m = ctx.m_level(pt.a, pt.b, &copts.level, None)?.value;
    let actual = if n > 0.0 {
        Some(LinkingCase::BelowNu)
    } else if m <= 0.0 {
        Some(LinkingCase::AboveMu)
    } else {
        None
    };
    let case = match (request, actual) {
        (CaseRequest::Auto, Some(c)) => c,
        (CaseRequest::Auto, None) => {
            return Err(Error::InvalidInput(format!(
                "({}, {}) lies between nu and mu (n = {n}, m = {m}): no linking case applies",
                pt.a, pt.b
            )))
        }
        (CaseRequest::BelowNu, Some(LinkingCase::BelowNu)) => LinkingCase::BelowNu,
        (CaseRequest::AboveMu, Some(LinkingCase::AboveMu)) => LinkingCase::AboveMu,
        (req, _) => {
            return Err(Error::InvalidInput(format!(
                "case {req:?} inconsistent with ({}, {}): n = {n}, m = {m}",
                pt.a, pt.b
            )))
        }
    };
    Ok((case, (n, m)))
}

/// Largest δ = cap/2^k with b/(1−δ) ≤ ν_{l−1}(a/(1−δ)).
fn curve_margin(ctx: &FucikContext, pt: &FucikPoint, copts: &CurveOptions) -> Result<f64> {
    let cap = 1.0 - pt.a.max(pt.b) / ctx.lam_hi;
    let mut delta = 0.5 * cap;
    for _ in 0..30 {
        let (a, b) = (pt.a / (1.0 - delta), pt.b / (1.0 - delta));
        if ctx.in_square(a, b) && ctx.n_level(a, b, &copts.level, None)?.value >= 0.0 {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    Err(Error::InvalidInput(format!("no curve margin delta found below nu at ({}, {})", pt.a, pt.b)))
}

/// Orthonormal coordinates of T(N_l), T v = v_μ.
fn cut_basis(op: &DiscreteOperator, dec: &EigenDecomposition, ctx: &FucikContext, l: usize, mu: f64, x0: [f64; 2]) -> Result<DMatrix<f64>> {
    let d = dec.dim_n(l);
    let cols: Vec<DVector<f64>> = (0..d)
        .map(|k| {
            let v = DiscreteFunction::new(op.mesh.clone(), dec.vector(k));
            ctx.from_nodal(&annulus_cutoff_v(&v, mu, x0).coeffs)
        })
        .collect();
    let qr = DMatrix::from_columns(&cols).qr();
    Ok(qr.q())
}

#[derive(Debug, Clone, Serialize)]
pub struct PathEntry {
    pub stage: &'static str,
    pub iteration: usize,
    pub energy: f64,
    pub gradient: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveFlag {
    Ok,
    /// Newton did not bring the residual below the tolerance; best iterate.
    ResidualAboveTol,
    Trivial,
    /// The level is not in (0, c*).
    LevelOutOfRange,
    /// The minimax sweep stalled above c*.
    PsFailureCandidate,
    BracketViolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointResult {
    #[serde(skip)]
    pub u: DiscreteFunction,
    pub case: LinkingCase,
    pub pt: FucikPoint,
    pub level: f64,
    /// ‖ℰ′(u)‖ in the dual of the mass norm.
    pub residual: f64,
    pub norm_d: f64,
    pub nodal_max: f64,
    pub sign_changing: bool,
    pub inf_a: f64,
    pub sup_q: f64,
    pub rho: f64,
    pub bracket_holds: bool,
    pub s_h: f64,
    pub c_star: f64,
    /// c* − sup_Q ℰ; the linking estimate holds on this mesh when positive.
    pub precondition_margin: f64,
    pub precondition_certified: bool,
    pub x0: [f64; 2],
    pub x0_retries: usize,
    pub delta: Option<f64>,
    pub op_norm: Option<f64>,
    pub sweep_iterations: usize,
    pub newton_iterations: usize,
    pub flag: SolveFlag,
    pub success: bool,
    pub path: Vec<PathEntry>,
}

struct Peak {
    x: DVector<f64>,
    y: DVector<f64>,
    value: f64,
}

struct Search<'a> {
    prob: &'a LinkingProblem,
    ce: CoordEnergy<'a>,
    span: Option<DMatrix<f64>>,
    warm: RefCell<Option<DVector<f64>>>,
}

impl Search<'_> {
    fn point(&self, x: &DVector<f64>, e: &DVector<f64>) -> Result<DVector<f64>> {
        let k = x.len() - 1;
        Ok(self.prob.base_point(&x.rows(0, k).into_owned(), &self.warm)? + e * x[k])
    }

    /// Local maximum of (c, s) ↦ ℰ(β(c) + se) from `start`.
    fn peak(&self, e: &DVector<f64>, start: &DVector<f64>) -> Result<Peak> {
        let failure = RefCell::new(None);
        let f = |x: &DVector<f64>| -> Option<f64> {
            match self.point(x, e) {
                Ok(y) => Some(self.ce.value(&y)),
                Err(err) => {
                    failure.borrow_mut().get_or_insert(err);
                    None
                }
            }
        };
        let opts = LbfgsOptions { max_iter: 500, gtol: 1e-12, ..Default::default() };
        let res = lbfgs(
            start.clone(),
            |x| {
                let k = x.len() - 1;
                match &self.span {
                    Some(l) => {
                        let y = l * x.rows(0, k) + e * x[k];
                        let (v, g) = self.ce.value_grad(&y);
                        let mut gx = DVector::zeros(k + 1);
                        gx.rows_mut(0, k).copy_from(&l.tr_mul(&g));
                        gx[k] = e.dot(&g);
                        (-v, -gx)
                    }
                    None => {
                        let Some(v) = f(x) else { return (f64::NAN, DVector::zeros(k + 1)) };
                        let mut gx = DVector::zeros(k + 1);
                        for i in 0..=k {
                            let h = 1e-6 * x[i].abs().max(1e-2);
                            let (mut xp, mut xm) = (x.clone(), x.clone());
                            xp[i] += h;
                            xm[i] -= h;
                            match (f(&xp), f(&xm)) {
                                (Some(p), Some(m)) => gx[i] = (p - m) / (2.0 * h),
                                _ => return (f64::NAN, DVector::zeros(k + 1)),
                            }
                        }
                        (-v, -gx)
                    }
                }
            },
            opts,
        );
        if let Some(err) = failure.into_inner() {
            return Err(err);
        }
        let y = self.point(&res.x, e)?;
        Ok(Peak { value: self.ce.value(&y), x: res.x, y })
    }

    /// Removes the base span (when linear) and normalizes.
    fn normalize(&self, e: DVector<f64>) -> DVector<f64> {
        let e = match &self.span {
            Some(l) => &e - l * l.tr_mul(&e),
            None => e,
        };
        let n = e.norm();
        e / n
    }

    /// Component of g normal to the base span and to e.
    fn normal_part(&self, g: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
        let g = match &self.span {
            Some(l) => g - l * l.tr_mul(g),
            None => g.clone(),
        };
        &g - e * e.dot(&g)
    }

    /// Peak of σ ↦ ℰ(σe) for unit e.
    fn bubble_peak(&self, e: &DVector<f64>) -> f64 {
        let uq = self.ce.ctx.uq(e);
        let (mut j, mut l) = (0.0, 0.0);
        for (q, &t) in uq.iter().enumerate() {
            let w = self.ce.ctx.weights[q];
            j += w * crate::fucik::jump(t, self.ce.a, self.ce.b);
            l += w * t.abs().powf(self.ce.p);
        }
        ((1.0 - j).max(1e-3) / l).powf(1.0 / (self.ce.p - 2.0))
    }

    /// inf of ℰ over A: the sphere of radius ρ in M_l (above μ), or its image
    /// under w ↦ θ(w) + w at (a,b)/(1−δ) in M_{l−1} (below ν). Starts are
    /// block unit vectors, the block part of e, and seeded random points.
    fn inf_a(&self, rho: f64, e: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
        let ctx = self.ce.ctx;
        let (start, theta_at) = match self.prob.case {
            LinkingCase::AboveMu => (ctx.d_hi, None),
            LinkingCase::BelowNu => {
                let d = 1.0 - self.prob.delta.expect("below-nu problems carry delta");
                (ctx.d_lo, Some((self.prob.pt.a / d, self.prob.pt.b / d)))
            }
        };
        let dim = ctx.n - start;
        let failure = RefCell::new(None);
        let warm = RefCell::new(None::<DVector<f64>>);
        let map = |w: &DVector<f64>| -> Option<DVector<f64>> {
            let w = w * (rho / w.norm());
            let mut y = ctx.embed(start, &w);
            if let Some((a, b)) = theta_at {
                let start_y = warm.borrow().clone();
                match ctx.theta_coords(&w, a, b, start_y.as_ref()) {
                    Ok(t) => {
                        y.rows_mut(0, start).copy_from(&t.y);
                        *warm.borrow_mut() = Some(t.y);
                    }
                    Err(err) => {
                        failure.borrow_mut().get_or_insert(err);
                        return None;
                    }
                }
            }
            Some(y)
        };
        let value = |w: &DVector<f64>| map(w).map_or(f64::NAN, |y| self.ce.value(&y));
        let mut starts: Vec<DVector<f64>> = (0..dim.min(opts.sphere_starts)).map(|k| DVector::from_fn(dim, |i, _| (i == k) as u8 as f64)).collect();
        let eb = e.rows(start, dim).into_owned();
        if eb.norm() > 0.0 {
            starts.push(eb);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.sphere_starts {
            starts.push(DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0));
        }
        let mut ranked: Vec<(f64, DVector<f64>)> = starts.into_iter().map(|w| (value(&w), w)).collect();
        ranked.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut best = ranked[0].0;
        let lopts = LbfgsOptions { max_iter: 300, gtol: 1e-10, ..Default::default() };
        for (_, w0) in ranked.iter().take(2) {
            let res = lbfgs(
                w0 / w0.norm(),
                |w| {
                    let n = w.norm();
                    let f = value(w);
                    let mut g = DVector::zeros(dim);
                    if theta_at.is_none() {
                        // exact: the map is linear on the sphere
                        let Some(y) = map(w) else { return (f64::NAN, g) };
                        let gy = self.ce.grad(&y).rows(start, dim).into_owned();
                        let u = w / n;
                        g = (&gy - &u * u.dot(&gy)) * (rho / n);
                    } else {
                        for i in 0..dim {
                            let h = 1e-6 * n;
                            let (mut wp, mut wm) = (w.clone(), w.clone());
                            wp[i] += h;
                            wm[i] -= h;
                            g[i] = (value(&wp) - value(&wm)) / (2.0 * h);
                        }
                    }
                    (f, g)
                },
                lopts,
            );
            if res.f.is_finite() {
                best = best.min(res.f);
            }
        }
        if let Some(err) = failure.into_inner() {
            return Err(err);
        }
        Ok(best)
    }
}

/// Runs the minimax sweep and Newton polish for one linking problem.
pub fn solve_linking(op: &DiscreteOperator, prob: &LinkingProblem, opts: &SolverOptions) -> Result<CriticalPointResult> {
    let p = critical_power(op)?;
    let (a, b) = (prob.pt.a, prob.pt.b);
    let ce = CoordEnergy { ctx: &prob.ctx, a, b, p };
    let search = Search { prob, ce, span: prob.base_span(), warm: RefCell::new(None) };
    let s_h = match opts.sobolev {
        Some(v) => v,
        None => sobolev_constant(op, &SobolevOptions::default())?.s_h,
    };
    let cs = c_star(s_h, op.dim(), op.s);
    let k = prob.base_dim();

    // sup over Q from several starts on the initial e
    let e_raw = &prob.e_coords / prob.e_coords.norm();
    let s0 = search.bubble_peak(&e_raw);
    let mut starts = vec![DVector::from_fn(k + 1, |i, _| if i == k { s0 } else { 0.0 })];
    for j in 0..k {
        for sign in [1.0, -1.0] {
            starts.push(DVector::from_fn(k + 1, |i, _| if i == k { s0 } else if i == j { 0.5 * sign * s0 } else { 0.0 }));
        }
    }
    let mut sup: Option<Peak> = None;
    for st in &starts {
        let pk = search.peak(&e_raw, st)?;
        if sup.as_ref().is_none_or(|b| pk.value > b.value) {
            sup = Some(pk);
        }
    }
    let sup = sup.expect("at least one start");
    let sup_q = sup.value;
    let rho = opts.rho_factor * sup.y.norm();
    let inf_a = search.inf_a(rho, &e_raw, opts)?;

    // minimax sweep; with a linear base the span part of e is absorbed by c
    let mut e = search.normalize(e_raw.clone());
    let mut pk = if let Some(span) = &search.span {
        let mut x = sup.x.clone();
        let shift = span.tr_mul(&e_raw) * sup.x[k];
        let scale = (&e_raw - span * span.tr_mul(&e_raw)).norm();
        for i in 0..k {
            x[i] += shift[i];
        }
        x[k] *= scale;
        search.peak(&e, &x)?
    } else {
        sup
    };
    let mut path = Vec::new();
    let mut step = 1.0;
    let mut sweeps = 0;
    let mut stalled = false;
    loop {
        let g = search.normal_part(&search.ce.grad(&pk.y), &e);
        let gn = g.norm();
        path.push(PathEntry { stage: "sweep", iteration: sweeps, energy: pk.value, gradient: gn, step });
        if gn <= opts.sweep_tol * pk.y.norm().max(1.0) || sweeps >= opts.sweep_max {
            break;
        }
        let s = pk.x[k];
        if s <= 0.0 {
            stalled = true;
            break;
        }
        let mut lam = (2.0 * step).min(1.0);
        let accepted = loop {
            let en = search.normalize(&e - &g * (lam / s));
            let pn = search.peak(&en, &pk.x)?;
            if pn.value <= pk.value - 0.25 * lam * gn * gn {
                break Some((en, pn));
            }
            lam *= 0.5;
            if lam < 1e-12 {
                break None;
            }
        };
        sweeps += 1;
        match accepted {
            Some((en, pn)) => {
                e = en;
                pk = pn;
                step = lam;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    // Newton on the gradient system, damped on ‖∇ℰ‖
    let mut y = pk.y.clone();
    let mut newton = 0;
    loop {
        let (v, g) = search.ce.value_grad(&y);
        let r = search.ce.mass_dual(&g);
        path.push(PathEntry { stage: "newton", iteration: newton, energy: v, gradient: r, step: if newton == 0 { 0.0 } else { step } });
        if r <= 1e-4 * opts.tol || newton >= opts.newton_max {
            break;
        }
        newton += 1;
        let h = search.ce.hessian(&y);
        let dir = h.lu().solve(&(-&g)).filter(|d| d.iter().all(|t| t.is_finite())).unwrap_or_else(|| -&g);
        let gnorm = g.norm();
        let mut t = 1.0;
        let mut moved = false;
        while t >= 1e-10 {
            let yn = &y + &dir * t;
            if search.ce.grad(&yn).norm() <= (1.0 - 1e-4 * t) * gnorm {
                y = yn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        step = t;
        if !moved {
            break;
        }
    }

    // the eigenbasis is exact only to round-off, so finish on the nodal system
    let mut u = prob.ctx.function(&y);
    let mut r_nodal = gradient_e(op, &u.coeffs, a, b);
    let mut residual = mass_dual_norm(op, &r_nodal);
    for it in 0..NODAL_POLISH {
        if residual <= 1e-4 * opts.tol {
            break;
        }
        let Some(dir) = hessian_e(op, &u.coeffs, a, b).ok().and_then(|h| h.lu().solve(&(-&r_nodal))) else { break };
        let cand = &u.coeffs + dir;
        let r_cand = gradient_e(op, &cand, a, b);
        let res_cand = mass_dual_norm(op, &r_cand);
        if !(res_cand < residual) {
            break;
        }
        u = DiscreteFunction::new(op.mesh.clone(), cand);
        r_nodal = r_cand;
        residual = res_cand;
        path.push(PathEntry { stage: "nodal", iteration: it + 1, energy: energy_e(op, &u, a, b), gradient: residual, step: 1.0 });
    }
    let level = energy_e(op, &u, a, b);
    let norm_d = op.gagliardo_seminorm_sq(&u).sqrt();
    let nodal_max = u.max_abs();
    let (hi, lo) = (u.coeffs.max(), u.coeffs.min());
    let sign_changing = hi > 1e-6 * nodal_max && lo < -1e-6 * nodal_max;
    // the bracket is checked up to the accuracy of the final level
    let slack = 1e-10 * sup_q.abs().max(1e-300);
    let bracket_holds = inf_a <= level + slack && level <= sup_q + slack;
    let flag = if residual > opts.tol {
        if stalled && pk.value > cs {
            SolveFlag::PsFailureCandidate
        } else {
            SolveFlag::ResidualAboveTol
        }
    } else if norm_d < 1e-3 {
        SolveFlag::Trivial
    } else if !(level > 0.0 && level < cs) {
        SolveFlag::LevelOutOfRange
    } else if !bracket_holds {
        SolveFlag::BracketViolated
    } else {
        SolveFlag::Ok
    };
    Ok(CriticalPointResult {
        u,
        case: prob.case,
        pt: prob.pt,
        level,
        residual,
        norm_d,
        nodal_max,
        sign_changing,
        inf_a,
        sup_q,
        rho,
        bracket_holds,
        s_h,
        c_star: cs,
        precondition_margin: cs - sup_q,
        precondition_certified: cs > sup_q,
        x0: prob.bubble.x0,
        x0_retries: prob.x0_retries,
        delta: prob.delta,
        op_norm: prob.op_norm,
        sweep_iterations: sweeps,
        newton_iterations: newton,
        success: flag == SolveFlag::Ok,
        flag,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshConfig;
    use crate::operator::assemble;
    use crate::spectrum::eigensolve;

    fn setup(n: usize) -> (DiscreteOperator, EigenDecomposition) {
        let op = assemble(&MeshConfig::interval(-1.0, 1.0, n, 0.2)).unwrap();
        let dec = eigensolve(&op, 4).unwrap();
        (op, dec)
    }

    fn params(op: &DiscreteOperator) -> BubbleParams {
        BubbleParams::new(&op.mesh, 4.0 * op.mesh.h, 2.5, [0.0, 0.0], 2.5).unwrap()
    }

    #[test]
    fn diagonal_above_the_second_eigenvalue() {
        let (op, dec) = setup(32);
        let (l2, l3) = (dec.lambda(2), dec.lambda(3));
        let t = l2 + 0.1 * (l3 - l2);
        let pt = FucikPoint::new(t, t, 2);
        let prob = LinkingProblem::new(&op, &dec, pt, CaseRequest::Auto, params(&op)).unwrap();
        assert_eq!(prob.case, LinkingCase::AboveMu);
        let r = solve_linking(&op, &prob, &SolverOptions::default()).unwrap();
        assert!(r.success, "{:?} residual {:e} level {} bracket [{}, {}]", r.flag, r.residual, r.level, r.inf_a, r.sup_q);
        assert!(r.inf_a <= r.level && r.level <= r.sup_q);
        // the explicit case must agree with the curves
        assert!(LinkingProblem::new(&op, &dec, pt, CaseRequest::BelowNu, params(&op)).is_err());
    }

    #[test]
    fn negation_solves_the_swapped_problem() {
        let (op, dec) = setup(32);
        let (l2, l3) = (dec.lambda(2), dec.lambda(3));
        let pt = FucikPoint::new(l2 + 0.1 * (l3 - l2), l2 + 0.2 * (l3 - l2), 2);
        let prob = LinkingProblem::new(&op, &dec, pt, CaseRequest::AboveMu, params(&op)).unwrap();
        let r = solve_linking(&op, &prob, &SolverOptions::default()).unwrap();
        assert!(r.residual <= 1e-8, "{:?} {:e}", r.flag, r.residual);
        let neg = r.u.scaled(-1.0);
        let swapped = mass_dual_norm(&op, &gradient_e(&op, &neg.coeffs, pt.b, pt.a));
        assert_eq!(swapped, r.residual);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (op, dec) = setup(24);
        let (l2, l3) = (dec.lambda(2), dec.lambda(3));
        let t = l2 + 0.1 * (l3 - l2);
        let prob = LinkingProblem::new(&op, &dec, FucikPoint::new(t, t, 2), CaseRequest::Auto, params(&op)).unwrap();
        let opts = SolverOptions { sobolev: Some(11.0), ..Default::default() };
        let r1 = solve_linking(&op, &prob, &opts).unwrap();
        let r2 = solve_linking(&op, &prob, &opts).unwrap();
        assert_eq!(r1.u.coeffs, r2.u.coeffs);
        assert_eq!(r1.level.to_bits(), r2.level.to_bits());
    }

    #[test]
    fn below_nu_uses_the_cut_base() {
        let (op, dec) = setup(32);
        let (l1, l2) = (dec.lambda(1), dec.lambda(2));
        let t = l1 + 0.5 * (l2 - l1);
        let bp = BubbleParams::new(&op.mesh, 4.0 * op.mesh.h, 4.0, [0.0, 0.0], 2.5).unwrap();
        let prob = LinkingProblem::new(&op, &dec, FucikPoint::new(t, t, 2), CaseRequest::Auto, bp).unwrap();
        assert_eq!(prob.case, LinkingCase::BelowNu);
        assert!(prob.delta.unwrap() > 0.0 && prob.op_norm.unwrap() > 0.0);
        let r = solve_linking(&op, &prob, &SolverOptions::default()).unwrap();
        assert!(r.inf_a > 0.0, "{}", r.inf_a);
        assert!(r.level <= r.sup_q * (1.0 + 1e-10));
    }
}
