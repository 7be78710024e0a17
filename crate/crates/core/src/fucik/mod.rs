//! The jumping functional I(u,a,b) = ‖u‖²_D − a|u⁻|² − b|u⁺|², the maps θ
//! and τ, the levels n_{l−1}, m_l and the curves ν_{l−1}, μ_l.
//!
//! Everything below works in D-normalized eigen-coordinates y = Λ^{1/2}Φᵀ M u,
//! in which ‖u‖²_D = |y|², N_l is a leading coordinate block and M_l the
//! trailing one. Positive and negative parts are taken pointwise at the
//! quadrature points of the interpolant, so |u⁺|² + |u⁻|² = |u|² exactly.

mod curves;
mod inner;
mod levels;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::DiscreteFunction;
use crate::operator::DiscreteOperator;
use crate::spectrum::EigenDecomposition;

pub use curves::{CurveOptions, CurvePoint, CurveSample};
pub use inner::Inner;
pub use levels::{LevelEstimate, LevelOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FucikPoint {
    pub a: f64,
    pub b: f64,
    pub level: usize,
}

impl FucikPoint {
    pub fn new(a: f64, b: f64, level: usize) -> Self {
        Self { a, b, level }
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a, level: self.level }
    }
}

#[derive(Debug, Clone)]
pub struct PartialOptimum {
    pub input: DiscreteFunction,
    pub output: DiscreteFunction,
    /// Norm of the ℐ-gradient projected on the optimized subspace (D-dual).
    pub residual: f64,
    pub iterations: usize,
}

#[inline]
pub(crate) fn jump(t: f64, a: f64, b: f64) -> f64 {
    if t > 0.0 {
        b * t * t
    } else {
        a * t * t
    }
}

#[inline]
pub(crate) fn jump_d(t: f64, a: f64, b: f64) -> f64 {
    if t > 0.0 {
        2.0 * b * t
    } else {
        2.0 * a * t
    }
}

#[inline]
pub(crate) fn jump_dd(t: f64, a: f64, b: f64) -> f64 {
    if t > 0.0 {
        2.0 * b
    } else if t < 0.0 {
        2.0 * a
    } else {
        a + b
    }
}

/// ℐ(u,a,b) on nodal coefficients.
pub fn functional_i(op: &DiscreteOperator, u: &DiscreteFunction, a: f64, b: f64) -> f64 {
    let c = u.coeffs.as_slice();
    let uq = op.sampler.eval(c);
    let jq: Vec<f64> = uq.iter().map(|&t| jump(t, a, b)).collect();
    op.bilinear(c, c) - op.sampler.integral(&jq)
}

/// Nodal gradient of ℐ: 2Ku − ∫ (2bu⁺ − 2au⁻) φ_i.
pub fn functional_i_gradient(op: &DiscreteOperator, u: &DVector<f64>, a: f64, b: f64) -> DVector<f64> {
    let uq = op.sampler.eval(u.as_slice());
    let d: Vec<f64> = uq.iter().map(|&t| jump_d(t, a, b)).collect();
    let ku = DVector::from_vec(op.apply_k(u.as_slice()));
    ku * 2.0 - DVector::from_vec(op.sampler.integrate_against_basis(&d))
}

/// Eigen-coordinate model of ℐ at one level l ≥ 2.
#[derive(Debug, Clone)]
pub struct FucikContext {
    pub level: usize,
    pub n: usize,
    /// dim N_{l−1} and dim N_l.
    pub d_lo: usize,
    pub d_hi: usize,
    pub lam_lo: f64,
    pub lam: f64,
    pub lam_hi: f64,
    /// λ of every coordinate.
    pub lambdas: DVector<f64>,
    /// Interpolant values at quadrature points per unit coordinate, B Φ Λ^{−1/2}.
    pub psi: DMatrix<f64>,
    pub weights: Vec<f64>,
    to_nodal: DMatrix<f64>,
    from_nodal: DMatrix<f64>,
    mesh: std::sync::Arc<crate::mesh::Mesh>,
}

pub struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub uq: Vec<f64>,
}

impl FucikContext {
    pub fn new(op: &DiscreteOperator, dec: &EigenDecomposition, level: usize) -> Result<Self> {
        if !dec.complete {
            return Err(Error::InvalidInput("Fucik machinery needs a complete eigendecomposition".into()));
        }
        if level < 2 || level + 1 > dec.n_levels() {
            return Err(Error::LevelOutOfRange { level, available: dec.n_levels() });
        }
        let n = op.n();
        let lambdas = DVector::from_vec(dec.values.clone());
        let inv_sqrt = DMatrix::from_diagonal(&lambdas.map(|l| 1.0 / l.sqrt()));
        let to_nodal = &dec.vectors * &inv_sqrt;
        let m = op.mass()?;
        let sqrt = DMatrix::from_diagonal(&lambdas.map(f64::sqrt));
        let from_nodal = sqrt * dec.vectors.transpose() * m;
        let psi = op.sampler.basis_matrix() * &to_nodal;
        Ok(Self {
            level,
            n,
            d_lo: dec.dim_n(level - 1),
            d_hi: dec.dim_n(level),
            lam_lo: dec.lambda(level - 1),
            lam: dec.lambda(level),
            lam_hi: dec.lambda(level + 1),
            lambdas,
            psi,
            weights: op.sampler.weights.clone(),
            to_nodal,
            from_nodal,
            mesh: op.mesh.clone(),
        })
    }

    pub fn in_square(&self, a: f64, b: f64) -> bool {
        let inside = |t: f64| t > self.lam_lo && t < self.lam_hi;
        inside(a) && inside(b)
    }

    pub fn check_point(&self, pt: &FucikPoint) -> Result<()> {
        if pt.level != self.level {
            return Err(Error::InvalidInput(format!("point level {} differs from context level {}", pt.level, self.level)));
        }
        if !self.in_square(pt.a, pt.b) {
            return Err(Error::InvalidInput(format!(
                "({}, {}) outside Q_{} = ({}, {})²",
                pt.a, pt.b, self.level, self.lam_lo, self.lam_hi
            )));
        }
        Ok(())
    }

    pub fn to_nodal(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.to_nodal * y
    }

    pub fn from_nodal(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.from_nodal * u
    }

    /// Coordinates of a nodal covector r: the chain rule ∂/∂y = (ΦΛ^{−1/2})ᵀ r.
    pub fn dual_coords(&self, r: &DVector<f64>) -> DVector<f64> {
        self.to_nodal.tr_mul(r)
    }

    pub fn function(&self, y: &DVector<f64>) -> DiscreteFunction {
        DiscreteFunction::new(self.mesh.clone(), self.to_nodal(y))
    }

    pub fn uq(&self, y: &DVector<f64>) -> Vec<f64> {
        (&self.psi * y).as_slice().to_vec()
    }

    /// ℐ and its coordinate gradient.
    pub fn eval(&self, y: &DVector<f64>, a: f64, b: f64) -> Eval {
        let uq = self.uq(y);
        let mut value = y.norm_squared();
        let mut f = DVector::zeros(uq.len());
        for (q, &t) in uq.iter().enumerate() {
            value -= self.weights[q] * jump(t, a, b);
            f[q] = self.weights[q] * jump_d(t, a, b);
        }
        let grad = y * 2.0 - self.psi.tr_mul(&f);
        Eval { value, grad, uq }
    }

    pub fn value(&self, y: &DVector<f64>, a: f64, b: f64) -> f64 {
        let uq = self.uq(y);
        y.norm_squared() - uq.iter().zip(&self.weights).map(|(&t, w)| w * jump(t, a, b)).sum::<f64>()
    }

    /// |u⁺|² of the coordinates y.
    pub fn positive_mass(&self, y: &DVector<f64>) -> f64 {
        self.uq(y).iter().zip(&self.weights).map(|(&t, w)| w * t.max(0.0).powi(2)).sum()
    }

    pub fn negative_mass(&self, y: &DVector<f64>) -> f64 {
        self.uq(y).iter().zip(&self.weights).map(|(&t, w)| w * t.min(0.0).powi(2)).sum()
    }

    /// Embeds a block vector into full coordinates.
    pub fn embed(&self, start: usize, block: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        y.rows_mut(start, block.len()).copy_from(block);
        y
    }

    fn coords_in(&self, u: &DiscreteFunction, start: usize, len: usize, what: &str) -> Result<DVector<f64>> {
        let y = self.from_nodal(&u.coeffs);
        let total = y.norm();
        let outside = (y.norm_squared() - y.rows(start, len).norm_squared()).max(0.0).sqrt();
        // the nodal round trip loses about sqrt(λ_max/λ_1) in relative accuracy
        if outside > 1e-6 * total.max(1e-300) {
            return Err(Error::InvalidInput(format!("input is not in {what} (relative leak {:.2e})", outside / total)));
        }
        Ok(y.rows(start, len).into_owned())
    }

    /// θ(w,a,b) for w ∈ M_{l−1}.
    pub fn theta(&self, w: &DiscreteFunction, pt: &FucikPoint) -> Result<PartialOptimum> {
        self.check_point(pt)?;
        let yw = self.coords_in(w, self.d_lo, self.n - self.d_lo, "M_{l-1}")?;
        let r = self.theta_coords(&yw, pt.a, pt.b, None)?;
        Ok(PartialOptimum {
            input: w.clone(),
            output: self.function(&self.embed(0, &r.y)),
            residual: r.residual,
            iterations: r.iterations,
        })
    }

    /// τ(v,a,b) for v ∈ N_l.
    pub fn tau(&self, v: &DiscreteFunction, pt: &FucikPoint) -> Result<PartialOptimum> {
        self.check_point(pt)?;
        let yv = self.coords_in(v, 0, self.d_hi, "N_l")?;
        let r = self.tau_coords(&yv, pt.a, pt.b, None)?;
        Ok(PartialOptimum {
            input: v.clone(),
            output: self.function(&self.embed(self.d_hi, &r.y)),
            residual: r.residual,
            iterations: r.iterations,
        })
    }
}
