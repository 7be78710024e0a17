//! Small unconstrained optimizers used by the level, Sobolev and linking
//! searches.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when ‖∇f‖ ≤ gtol·max(1, |f|).
    pub gtol: f64,
    /// Stop after `stall` consecutive iterations with relative decrease below this.
    pub ftol: f64,
    pub stall: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 1000, gtol: 1e-10, ftol: 1e-15, stall: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking.
pub fn lbfgs<F>(x0: DVector<f64>, mut fg: F, opts: LbfgsOptions) -> Minimum
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    let mut hist: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    let mut stalled = 0;
    let mut it = 0;
    let mut converged = false;
    while it < opts.max_iter {
        let gn = g.norm();
        if !gn.is_finite() {
            break;
        }
        if gn <= opts.gtol * f.abs().max(1.0) {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; hist.len()];
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[k] = rho * s.dot(&q);
            q.axpy(-alpha[k], y, 1.0);
        }
        let gamma = hist.last().map_or(1.0 / gn.max(1e-300), |(s, y, _)| s.dot(y) / y.dot(y));
        q *= gamma;
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * y.dot(&q);
            q.axpy(alpha[k] - beta, s, 1.0);
        }
        let mut d = -q;
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            hist.clear();
            d = -&g / gn.max(1e-300);
            slope = g.dot(&d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * step;
            let (fnew, gnew) = fg(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        it += 1;
        let Some((xn, fnew, gnew)) = accepted else {
            // no decrease along a descent direction: at the resolution limit,
            // where the error in f is already O(‖g‖²)
            converged = g.norm() <= 1e2 * opts.gtol * f.abs().max(1.0);
            break;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.remove(0);
            }
        }
        let rel = (f - fnew) / f.abs().max(1e-300);
        stalled = if rel < opts.ftol { stalled + 1 } else { 0 };
        x = xn;
        f = fnew;
        g = gnew;
        if stalled >= opts.stall {
            converged = true;
            break;
        }
    }
    let grad_norm = g.norm();
    Minimum { x, f, grad_norm, iterations: it, converged }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

/// Nelder-Mead minimization started from `x0` with initial edge `scale`.
pub fn nelder_mead<F>(x0: &[f64], scale: &[f64], mut f: F, max_iter: usize, ftol: f64) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale[i];
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut it = 0;
    while it < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= ftol * (best.abs() + worst.abs() + 1e-300) {
            break;
        }
        it += 1;
        let mut centroid = vec![0.0; n];
        for (p, _) in simplex.iter().take(n) {
            for k in 0..n {
                centroid[k] += p[k] / n as f64;
            }
        }
        let along = |t: f64, w: &[f64]| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (w[k] - centroid[k])).collect() };
        let xr = along(-1.0, &simplex[n].0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0, &simplex[n].0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < simplex[n].1;
            let xc = if outside { along(-0.5, &simplex[n].0) } else { along(0.5, &simplex[n].0) };
            let fc = f(&xc);
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = (0..n).map(|k| b[k] + 0.5 * (entry.0[k] - b[k])).collect();
                    let v = f(&p);
                    *entry = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    SimplexResult { x, f: fx, iterations: it }
}

/// Golden-section maximization of a unimodal function on [lo, hi].
pub fn golden_max<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, mut f: F, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol * (1.0 + lo.abs() + hi.abs()) {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Solves a symmetric positive-definite system, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(c) => Some(c.solve(b)),
        None => a.clone().lu().solve(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let r = lbfgs(
            DVector::from_vec(vec![-1.2, 1.0]),
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
                (f, g)
            },
            LbfgsOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let r = nelder_mead(&[0.0, 0.0], &[0.5, 0.5], |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), 2000, 1e-16);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, _) = golden_max(0.0, 3.0, |t| -(t - 1.3f64).powi(2), 1e-12);
        assert!((x - 1.3).abs() < 1e-6);
    }
}
