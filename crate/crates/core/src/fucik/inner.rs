//! Inner problems: θ maximizes the strictly concave v ↦ ℐ(v+w) over N_{l−1},
//! τ minimizes the strictly convex w ↦ ℐ(v+w) over M_l. Both are piecewise
//! quadratic and are solved by semismooth Newton with backtracking; the
//! large τ block uses conjugate gradients for the Newton systems.

use nalgebra::{DMatrix, DVector};

use super::{jump, jump_d, jump_dd, FucikContext};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Inner {
    /// Optimal block coordinates.
    pub y: DVector<f64>,
    /// Euclidean norm of the block gradient at the optimum.
    pub residual: f64,
    pub iterations: usize,
    /// Interpolant values of the full point at the quadrature points.
    pub uq: Vec<f64>,
}

const DENSE_BLOCK: usize = 48;
const MAX_NEWTON: usize = 100;
/// Relative residual accepted once the iteration budget is spent.
const ROUND_OFF_FLOOR: f64 = 1e-9;

impl FucikContext {
    /// Optimizes the coordinate block [start, start+len) with the remaining
    /// coordinates contributing `fixed` at the quadrature points. `sign` is
    /// +1 to minimize, −1 to maximize.
    fn block_newton(
        &self,
        start: usize,
        len: usize,
        fixed: &[f64],
        a: f64,
        b: f64,
        sign: f64,
        y0: DVector<f64>,
        scale: f64,
    ) -> Result<Inner> {
        let p = self.psi.columns(start, len);
        let w = &self.weights;
        let nq = w.len();
        let objective = |y: &DVector<f64>, uq: &[f64]| -> f64 {
            let j: f64 = (0..nq).map(|q| w[q] * jump(uq[q], a, b)).sum();
            sign * (y.norm_squared() - j)
        };
        let point = |y: &DVector<f64>| -> Vec<f64> {
            let py = p * y;
            (0..nq).map(|q| py[q] + fixed[q]).collect()
        };
        let tol = 1e-12 * scale.max(1e-300);
        let mut y = y0;
        let mut uq = point(&y);
        let mut f = objective(&y, &uq);
        let mut it = 0;
        loop {
            let d: DVector<f64> = DVector::from_iterator(nq, (0..nq).map(|q| w[q] * jump_d(uq[q], a, b)));
            let grad = (&y * 2.0 - p.tr_mul(&d)) * sign;
            let gn = grad.norm();
            if gn <= tol {
                return Ok(Inner { y, residual: gn, iterations: it, uq });
            }
            if it >= MAX_NEWTON {
                // semismooth steps can cycle across a kink at the round-off floor
                if gn <= ROUND_OFF_FLOOR * scale {
                    return Ok(Inner { y, residual: gn, iterations: it, uq });
                }
                return Err(Error::NonConvergence { what: "inner Newton", iterations: it, residual: gn });
            }
            it += 1;
            let c: Vec<f64> = (0..nq).map(|q| w[q] * jump_dd(uq[q], a, b)).collect();
            let step = if len <= DENSE_BLOCK {
                let mut h = DMatrix::<f64>::identity(len, len) * 2.0;
                let mut pc = p.clone_owned();
                for q in 0..nq {
                    pc.row_mut(q).scale_mut(c[q]);
                }
                h -= p.tr_mul(&pc);
                h *= sign;
                match h.clone().cholesky() {
                    Some(ch) => -ch.solve(&grad),
                    None => -&grad * 0.5,
                }
            } else {
                let hv = |v: &DVector<f64>| -> DVector<f64> {
                    let pv = p * v;
                    let cpv = DVector::from_iterator(nq, (0..nq).map(|q| c[q] * pv[q]));
                    (v * 2.0 - p.tr_mul(&cpv)) * sign
                };
                -cg(hv, &grad, 1e-12, 4 * len)
            };
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let yn = &y + &step * t;
                let un = point(&yn);
                let fnew = objective(&yn, &un);
                if fnew <= f + 1e-4 * t * slope || (fnew - f).abs() <= 1e-15 * f.abs().max(scale * scale) {
                    y = yn;
                    uq = un;
                    f = fnew;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no further decrease representable: report the current residual
                return Ok(Inner { y, residual: gn, iterations: it, uq });
            }
        }
    }

    /// θ in coordinates: maximizer over the N_{l−1} block for fixed M_{l−1}
    /// coordinates `yw`.
    pub fn theta_coords(&self, yw: &DVector<f64>, a: f64, b: f64, warm: Option<&DVector<f64>>) -> Result<Inner> {
        let (d, n) = (self.d_lo, self.n);
        let fixed = (self.psi.columns(d, n - d) * yw).as_slice().to_vec();
        let y0 = warm.cloned().unwrap_or_else(|| DVector::zeros(d));
        self.block_newton(0, d, &fixed, a, b, -1.0, y0, yw.norm())
    }

    /// τ in coordinates: minimizer over the M_l block for fixed N_l
    /// coordinates `yv`.
    pub fn tau_coords(&self, yv: &DVector<f64>, a: f64, b: f64, warm: Option<&DVector<f64>>) -> Result<Inner> {
        let (d, n) = (self.d_hi, self.n);
        let fixed = (self.psi.columns(0, d) * yv).as_slice().to_vec();
        let y0 = warm.cloned().unwrap_or_else(|| DVector::zeros(n - d));
        self.block_newton(d, n - d, &fixed, a, b, 1.0, y0, yv.norm())
    }
}

fn cg(hv: impl Fn(&DVector<f64>) -> DVector<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> DVector<f64> {
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let stop = tol * tol * rr;
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let hp = hv(&p);
        let php = p.dot(&hp);
        if php <= 0.0 {
            break;
        }
        let alpha = rr / php;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &hp, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    if x.iter().all(|v| *v == 0.0) {
        return b.clone() * 0.5;
    }
    x
}
