//! Log-log exponent fits for the bubble estimates.

use serde::Serialize;

use super::bubble::{bubble, BubbleParams};
use super::sobolev::analytic_sobolev_constant;
use super::{power, power_integral};
use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;

/// Relative tolerance on fitted exponents.
pub const EXPONENT_TOL: f64 = 0.25;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub name: String,
    pub expected_exponent: f64,
    pub fitted_exponent: f64,
    pub relative_error: f64,
    /// Informational records are reported but do not enter the verdict.
    pub checked: bool,
    pub pass: bool,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl EstimateRecord {
    pub fn fit(name: &str, expected: f64, xs: &[f64], values: &[f64], checked: bool) -> Result<Self> {
        let (slope, _) = fit_slope(xs, values)?;
        let rel = (slope - expected).abs() / expected.abs();
        Ok(Self {
            name: name.into(),
            expected_exponent: expected,
            fitted_exponent: slope,
            relative_error: rel,
            checked,
            pass: rel <= EXPONENT_TOL,
            xs: xs.to_vec(),
            values: values.to_vec(),
        })
    }

    /// As `fit`, but too few usable points give a failing record with a NaN
    /// exponent instead of an error.
    pub fn fit_or_fail(name: &str, expected: f64, xs: &[f64], values: &[f64], checked: bool) -> Result<Self> {
        match Self::fit(name, expected, xs, values, checked) {
            Err(Error::FitDegenerate(_)) => Ok(Self {
                name: name.into(),
                expected_exponent: expected,
                fitted_exponent: f64::NAN,
                relative_error: f64::NAN,
                checked,
                pass: false,
                xs: xs.to_vec(),
                values: values.to_vec(),
            }),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub kind: &'static str,
    pub records: Vec<EstimateRecord>,
    pub tolerance: f64,
    /// The swept parameter ("eps" or "mu") and the range actually tested.
    pub parameter: &'static str,
    pub range: (f64, f64),
    /// μ held fixed during an ε sweep.
    pub mu: Option<f64>,
    pub pass: bool,
}

impl EstimateReport {
    pub fn new(kind: &'static str, records: Vec<EstimateRecord>, parameter: &'static str, xs: &[f64], mu: Option<f64>) -> Self {
        let pass = records.iter().filter(|r| r.checked).all(|r| r.pass);
        let range = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Self { kind, records, tolerance: EXPONENT_TOL, parameter, range, mu, pass }
    }

    pub fn record(&self, name: &str) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// Least-squares slope and intercept of log|y| against log x over the points
/// with x, y > 0.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::FitDegenerate(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::FitDegenerate(pts.len()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits the ε-exponents of the bubble estimates. The seminorm and the
/// critical integral use μ = μ₀; the L¹ and L^{2*−1} integrals use `base.mu`.
pub fn verify_bubble_estimates(op: &DiscreteOperator, base: &BubbleParams, eps_grid: &[f64]) -> Result<EstimateReport> {
    let h = op.mesh.h;
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps grid must be strictly decreasing".into()));
    }
    if let Some(e) = eps_grid.iter().find(|&&e| e < 2.0 * h) {
        return Err(Error::InvalidInput(format!("eps = {e} is below two mesh cells ({})", 2.0 * h)));
    }
    let (n, s) = (op.dim() as f64, op.s);
    let p = power(op);
    let target = analytic_sobolev_constant(op.dim(), s).powf(n / (2.0 * s));
    let at_mu0 = base.with_mu(base.mu0)?;
    let mut semi = Vec::new();
    let mut deficit = Vec::new();
    let mut l2 = Vec::new();
    let mut l1 = Vec::new();
    let mut lpm1 = Vec::new();
    for &eps in eps_grid {
        let u0 = bubble(&at_mu0.with_eps(eps), &op.mesh)?;
        semi.push(op.gagliardo_seminorm_sq(&u0) - target);
        let q0 = op.sampler.eval(u0.coeffs.as_slice());
        deficit.push(target - power_integral(op, &q0, p));
        let u = bubble(&base.with_eps(eps), &op.mesh)?;
        let q = op.sampler.eval(u.coeffs.as_slice());
        l2.push(power_integral(op, &q, 2.0));
        l1.push(power_integral(op, &q, 1.0));
        lpm1.push(power_integral(op, &q, p - 1.0));
    }
    let l2_exponent = if n >= 4.0 * s { 2.0 * s } else { n - 2.0 * s };
    let records = vec![
        EstimateRecord::fit_or_fail("seminorm_excess", n - 2.0 * s, eps_grid, &semi, true)?,
        EstimateRecord::fit_or_fail("critical_deficit", n, eps_grid, &deficit, false)?,
        EstimateRecord::fit_or_fail("l2_mass", l2_exponent, eps_grid, &l2, false)?,
        EstimateRecord::fit_or_fail("l1_mass", 0.5 * (n - 2.0 * s), eps_grid, &l1, true)?,
        EstimateRecord::fit_or_fail("critical_minus_one", 0.5 * (n - 2.0 * s), eps_grid, &lpm1, true)?,
    ];
    Ok(EstimateReport::new("bubble_estimates", records, "eps", eps_grid, Some(base.mu)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_recovers_power_laws() {
        let xs: Vec<f64> = (0..6).map(|k| 2f64.powi(-k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.6)).collect();
        let (m, c) = fit_slope(&xs, &ys).unwrap();
        assert!((m - 0.6).abs() < 1e-12 && (c - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(fit_slope(&xs[..2], &ys[..2]), Err(Error::FitDegenerate(2))));
        assert!(fit_slope(&xs, &[-1.0; 6]).is_err());
    }
}
