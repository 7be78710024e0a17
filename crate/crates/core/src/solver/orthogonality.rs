//! For u ∈ B = {v + τ(v)}, ℐ′(u) = z_u lies in N_l: its M_l component
//! vanishes because τ minimizes ℐ(v + ·) over M_l.

use nalgebra::DVector;
use serde::Serialize;

use crate::fucik::{functional_i_gradient, FucikContext, FucikPoint};
use crate::mesh::DiscreteFunction;
use crate::operator::DiscreteOperator;

#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalityReport {
    /// D-dual norm of the M_l component of ℐ′(u).
    pub projection: f64,
    /// D-dual norm of ℐ′(u).
    pub gradient: f64,
    /// The same projection at 2u, which is in B when u is.
    pub projection_doubled: f64,
    pub tol: f64,
    pub pass: bool,
}

fn m_projection(op: &DiscreteOperator, ctx: &FucikContext, u: &DVector<f64>, pt: &FucikPoint) -> (f64, f64) {
    let g = ctx.dual_coords(&functional_i_gradient(op, u, pt.a, pt.b));
    (g.rows(ctx.d_hi, ctx.n - ctx.d_hi).norm(), g.norm())
}

/// Checks ℐ′(u,a,b) ∈ N_l at u and at 2u. `tol` is absolute for unit-norm u
/// and scales with ‖u‖_D otherwise.
pub fn verify_theorem4_orthogonality(
    op: &DiscreteOperator,
    ctx: &FucikContext,
    u: &DiscreteFunction,
    pt: &FucikPoint,
    tol: f64,
) -> OrthogonalityReport {
    let scale = op.gagliardo_seminorm_sq(u).sqrt().max(1e-300);
    let (projection, gradient) = m_projection(op, ctx, &u.coeffs, pt);
    let (doubled, _) = m_projection(op, ctx, &(&u.coeffs * 2.0), pt);
    let pass = projection <= tol * scale && doubled <= 2.0 * tol * scale;
    OrthogonalityReport { projection, gradient, projection_doubled: doubled, tol, pass }
}
