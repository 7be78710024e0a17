//! n_{l−1}(a,b) = inf over M_{l−1} ∩ S of ℐ(θ(w)+w) and
//! m_l(a,b) = sup over N_l ∩ S of ℐ(v+τ(v)).
//!
//! Both are optimized as the 0-homogeneous quotient J(y)/|y|² with L-BFGS
//! from several deterministic starts. The outer problem is nonconvex, so the
//! reported inf (sup) is an upper (lower) estimate; the spread across starts
//! is kept as a confidence proxy.

use std::cell::RefCell;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::FucikContext;
use crate::error::Result;
use crate::optim::{lbfgs, LbfgsOptions};

#[derive(Debug, Clone, Copy)]
pub struct LevelOptions {
    pub starts: usize,
    pub seed: u64,
    pub lbfgs: LbfgsOptions,
    /// Relative spread across converged starts above which the estimate is flagged.
    pub spread_tol: f64,
}

impl Default for LevelOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 17,
            lbfgs: LbfgsOptions { max_iter: 2000, gtol: 1e-9, ..Default::default() },
            spread_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelEstimate {
    pub value: f64,
    /// Full D-normalized coordinates of the optimizer θ(w)+w or v+τ(v), |·| = 1.
    #[serde(skip)]
    pub arg: DVector<f64>,
    /// Outer coordinates of the optimizer (w or v block), for warm starts.
    #[serde(skip)]
    pub outer: DVector<f64>,
    pub spread: f64,
    pub converged: bool,
    pub flagged: bool,
    pub evaluations: usize,
}

impl FucikContext {
    fn starts(&self, dim: usize, lead: usize, opts: &LevelOptions, warm: Option<&DVector<f64>>) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        if let Some(w) = warm {
            out.push(w.clone());
        }
        let mut e = DVector::zeros(dim);
        e[lead.min(dim - 1)] = 1.0;
        out.push(e.clone());
        out.push(-e);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        while out.len() < opts.starts + warm.is_some() as usize {
            // random directions biased to the low end of the spectrum
            let y = DVector::from_iterator(dim, (0..dim).map(|k| (rng.gen::<f64>() * 2.0 - 1.0) / (1.0 + k as f64)));
            out.push(y);
        }
        out
    }

    fn sphere_search(
        &self,
        dim: usize,
        lead: usize,
        opts: &LevelOptions,
        warm: Option<&DVector<f64>>,
        sign: f64,
        fg: &dyn Fn(&DVector<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)>,
    ) -> Result<LevelEstimate> {
        let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
        let mut values = Vec::new();
        let mut all_converged = true;
        let mut evaluations = 0;
        for y0 in self.starts(dim, lead, opts, warm) {
            let n0 = y0.norm();
            if n0 == 0.0 {
                continue;
            }
            let failure = RefCell::new(None);
            let count = RefCell::new(0usize);
            let res = lbfgs(
                y0 / n0,
                |y| {
                    *count.borrow_mut() += 1;
                    let r2 = y.norm_squared();
                    match fg(y) {
                        Ok((j, g, _)) => {
                            let q = j / r2;
                            (sign * q, (g - y * (2.0 * q)) * (sign / r2))
                        }
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            (f64::NAN, DVector::zeros(y.len()))
                        }
                    }
                },
                opts.lbfgs,
            );
            evaluations += count.into_inner();
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            all_converged &= res.converged;
            let y = &res.x / res.x.norm();
            let (j, _, arg) = fg(&y)?;
            values.push(j);
            if best.as_ref().is_none_or(|b| sign * j < sign * b.0) {
                best = Some((j, arg, y));
            }
        }
        let (value, arg, outer) = best.expect("at least one start");
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let spread = hi - lo;
        // only starts that reached the optimum are expected to agree; a large
        // spread is recorded but does not invalidate the best value
        let flagged = !all_converged;
        Ok(LevelEstimate { value, arg, outer, spread, converged: all_converged, flagged, evaluations })
    }

    /// n_{l−1}(a,b), optionally warm-started from previous M_{l−1} coordinates.
    pub fn n_level(&self, a: f64, b: f64, opts: &LevelOptions, warm: Option<&DVector<f64>>) -> Result<LevelEstimate> {
        let (d, n) = (self.d_lo, self.n);
        let last = RefCell::new(None::<(DVector<f64>, f64)>);
        let fg = |yw: &DVector<f64>| -> Result<(f64, DVector<f64>, DVector<f64>)> {
            let scale = yw.norm();
            let warm_v = last.borrow().as_ref().map(|(v, s): &(DVector<f64>, f64)| v * (scale / s));
            let th = self.theta_coords(yw, a, b, warm_v.as_ref())?;
            *last.borrow_mut() = Some((th.y.clone(), scale.max(1e-300)));
            let mut y = DVector::zeros(n);
            y.rows_mut(0, d).copy_from(&th.y);
            y.rows_mut(d, n - d).copy_from(yw);
            let e = self.eval(&y, a, b);
            Ok((e.value, e.grad.rows(d, n - d).into_owned(), y))
        };
        let mut est = self.sphere_search(n - d, 0, opts, warm, 1.0, &fg)?;
        est.arg /= est.outer.norm();
        Ok(est)
    }

    /// m_l(a,b), optionally warm-started from previous N_l coordinates.
    pub fn m_level(&self, a: f64, b: f64, opts: &LevelOptions, warm: Option<&DVector<f64>>) -> Result<LevelEstimate> {
        let (d, n) = (self.d_hi, self.n);
        let last = RefCell::new(None::<(DVector<f64>, f64)>);
        let fg = |yv: &DVector<f64>| -> Result<(f64, DVector<f64>, DVector<f64>)> {
            let scale = yv.norm();
            let warm_w = last.borrow().as_ref().map(|(w, s): &(DVector<f64>, f64)| w * (scale / s));
            let ta = self.tau_coords(yv, a, b, warm_w.as_ref())?;
            *last.borrow_mut() = Some((ta.y.clone(), scale.max(1e-300)));
            let mut y = DVector::zeros(n);
            y.rows_mut(0, d).copy_from(yv);
            y.rows_mut(d, n - d).copy_from(&ta.y);
            let e = self.eval(&y, a, b);
            Ok((e.value, e.grad.rows(0, d).into_owned(), y))
        };
        let mut est = self.sphere_search(d, d - 1, opts, warm, -1.0, &fg)?;
        est.arg /= est.outer.norm();
        Ok(est)
    }
}
