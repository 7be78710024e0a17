//! ν_{l−1}(a) = sup{b : n_{l−1}(a,b) ≥ 0} and μ_l(a) = inf{b : m_l(a,b) ≤ 0}.
//!
//! Both levels are nonincreasing in b with envelope slope −|u⁺|² at the
//! optimizer, so the root is located by Newton steps safeguarded by a sign
//! bracket that is halved whenever a step is not productive.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{FucikContext, LevelEstimate, LevelOptions};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    /// Absolute tolerance on b; defaults to 1e−6·λ_l when `None`.
    pub tol: Option<f64>,
    pub level: LevelOptions,
    pub max_evaluations: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { tol: None, level: LevelOptions::default(), max_evaluations: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFlag {
    Ok,
    /// The level kept one sign on the whole bracket; the boundary is reported.
    Unbracketed,
    /// An inner optimization did not meet its tolerance.
    NotConverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub a: f64,
    pub value: f64,
    /// Final bracket [lo, hi] containing the curve.
    pub bracket: (f64, f64),
    pub flag: CurveFlag,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSample {
    pub level: usize,
    pub a_grid: Vec<f64>,
    pub nu: Vec<CurvePoint>,
    pub mu: Vec<CurvePoint>,
    pub tol: f64,
}

#[derive(Clone, Copy)]
enum Which {
    Nu,
    Mu,
}

impl FucikContext {
    pub fn default_tol(&self) -> f64 {
        1e-6 * self.lam
    }

    pub fn bracket(&self) -> (f64, f64) {
        let eb = 1e-4 * (self.lam_hi - self.lam_lo);
        (self.lam_lo + eb, self.lam_hi - eb)
    }

    fn level_at(&self, which: Which, a: f64, b: f64, opts: &LevelOptions, warm: Option<&DVector<f64>>) -> Result<LevelEstimate> {
        match which {
            Which::Nu => self.n_level(a, b, opts, warm),
            Which::Mu => self.m_level(a, b, opts, warm),
        }
    }

    fn trace(&self, which: Which, a: f64, opts: &CurveOptions) -> Result<CurvePoint> {
        let tol = opts.tol.unwrap_or_else(|| self.default_tol());
        let (mut lo, mut hi) = self.bracket();
        let mut converged = true;
        let eval = |b: f64, warm: Option<&DVector<f64>>| -> Result<LevelEstimate> { self.level_at(which, a, b, &opts.level, warm) };
        let f_lo = eval(lo, None)?;
        converged &= f_lo.converged;
        if f_lo.value < 0.0 {
            return Ok(CurvePoint { a, value: lo, bracket: (lo, lo), flag: CurveFlag::Unbracketed, evaluations: 1 });
        }
        let f_hi = eval(hi, Some(&f_lo.outer))?;
        converged &= f_hi.converged;
        if f_hi.value >= 0.0 {
            return Ok(CurvePoint { a, value: hi, bracket: (hi, hi), flag: CurveFlag::Unbracketed, evaluations: 2 });
        }
        // start from the secant estimate
        let mut b = lo + (hi - lo) * f_lo.value / (f_lo.value - f_hi.value);
        let mut warm = f_lo.outer.clone();
        let mut checkpoint = hi - lo;
        let mut since = 0;
        let mut count = 2;
        while hi - lo > tol && count < opts.max_evaluations {
            let est = eval(b, Some(&warm))?;
            count += 1;
            converged &= est.converged;
            warm = est.outer.clone();
            let below = est.value >= 0.0;
            if below {
                lo = b;
            } else {
                hi = b;
            }
            // the bracket must halve at least every two evaluations
            since += 1;
            let stalled = since >= 2 && hi - lo > 0.5 * checkpoint;
            if since >= 2 || hi - lo <= 0.5 * checkpoint {
                checkpoint = hi - lo;
                since = 0;
            }
            let slope = -self.positive_mass(&est.arg);
            let newton = if slope < 0.0 { b - est.value / slope } else { f64::NAN };
            // aim slightly past the Newton root so that the far side closes too
            let aim = newton + if below { 0.4 * tol } else { -0.4 * tol };
            b = if !stalled && aim > lo && aim < hi { aim } else { 0.5 * (lo + hi) };
        }
        let evaluations = count;
        let flag = if hi - lo > tol || !converged { CurveFlag::NotConverged } else { CurveFlag::Ok };
        Ok(CurvePoint { a, value: 0.5 * (lo + hi), bracket: (lo, hi), flag, evaluations })
    }

    /// ν_{l−1}(a).
    pub fn nu_curve(&self, a: f64, opts: &CurveOptions) -> Result<CurvePoint> {
        self.trace(Which::Nu, a, opts)
    }

    /// μ_l(a).
    pub fn mu_curve(&self, a: f64, opts: &CurveOptions) -> Result<CurvePoint> {
        self.trace(Which::Mu, a, opts)
    }

    /// Default grid: λ_l ± half the smaller spectral gap, including λ_l.
    pub fn default_a_grid(&self, points: usize) -> Vec<f64> {
        let half = 0.5 * (self.lam - self.lam_lo).min(self.lam_hi - self.lam);
        let points = points.max(3) | 1;
        let mid = points / 2;
        (0..points)
            .map(|i| if i == mid { self.lam } else { self.lam - half + 2.0 * half * i as f64 / (points - 1) as f64 })
            .collect()
    }

    /// Both curves on an a-grid, traced in parallel over the grid.
    pub fn curve_sample(&self, a_grid: &[f64], opts: &CurveOptions) -> Result<CurveSample> {
        let rows: Vec<Result<(CurvePoint, CurvePoint)>> = a_grid
            .par_iter()
            .map(|&a| Ok((self.nu_curve(a, opts)?, self.mu_curve(a, opts)?)))
            .collect();
        let mut nu = Vec::with_capacity(rows.len());
        let mut mu = Vec::with_capacity(rows.len());
        for r in rows {
            let (n, m) = r?;
            nu.push(n);
            mu.push(m);
        }
        Ok(CurveSample { level: self.level, a_grid: a_grid.to_vec(), nu, mu, tol: opts.tol.unwrap_or_else(|| self.default_tol()) })
    }
}

impl CurveSample {
    /// Each consecutive pair strictly decreasing with slack above the tolerance.
    pub fn strictly_decreasing(points: &[CurvePoint], tol: f64) -> bool {
        points.windows(2).all(|w| w[0].value - w[1].value > tol)
    }

    pub fn nu_decreasing(&self) -> bool {
        Self::strictly_decreasing(&self.nu, self.tol)
    }

    pub fn mu_decreasing(&self) -> bool {
        Self::strictly_decreasing(&self.mu, self.tol)
    }

    /// ν ≤ μ at every grid point, up to the bisection tolerance.
    pub fn ordered(&self) -> bool {
        self.nu.iter().zip(&self.mu).all(|(n, m)| n.value <= m.value + self.tol)
    }
}
