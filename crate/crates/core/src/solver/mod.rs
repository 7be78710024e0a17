//! Critical points of ℰ by linking, the z_u structure of B, and the De
//! Giorgi L∞ certificate.
//!
//! The solver works in the D-orthonormal eigen-coordinates of the Fučík
//! context, where ‖u‖_D² = |y|² and the Riesz gradient of ℰ is the plain
//! coordinate gradient.

mod degiorgi;
mod linking;
mod orthogonality;

use nalgebra::{DMatrix, DVector};

use crate::fucik::{jump, jump_d, jump_dd, FucikContext};

pub use degiorgi::{degiorgi_linfty, kappa_for, DeGiorgiReport, DeGiorgiState, DeGiorgiTrace};
pub use linking::{
    classify, solve_linking, BaseSet, CaseRequest, CriticalPointResult, LinkingCase, LinkingProblem, PathEntry, SolveFlag, SolverOptions,
};
pub use orthogonality::{verify_theorem4_orthogonality, OrthogonalityReport};

/// ℰ(y) = ½(|y|² − ∫jump) − (1/2*)∫|u|^{2*} in coordinates.
pub(crate) struct CoordEnergy<'a> {
    pub ctx: &'a FucikContext,
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl<'a> CoordEnergy<'a> {
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let uq = self.ctx.uq(y);
        let mut acc = 0.5 * y.norm_squared();
        for (q, &t) in uq.iter().enumerate() {
            acc -= self.ctx.weights[q] * (0.5 * jump(t, self.a, self.b) + t.abs().powf(self.p) / self.p);
        }
        acc
    }

    pub fn value_grad(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let uq = self.ctx.uq(y);
        let mut acc = 0.5 * y.norm_squared();
        let mut f = DVector::zeros(uq.len());
        for (q, &t) in uq.iter().enumerate() {
            let w = self.ctx.weights[q];
            acc -= w * (0.5 * jump(t, self.a, self.b) + t.abs().powf(self.p) / self.p);
            f[q] = w * (0.5 * jump_d(t, self.a, self.b) + t.abs().powf(self.p - 2.0) * t);
        }
        (acc, y - self.ctx.psi.tr_mul(&f))
    }

    pub fn grad(&self, y: &DVector<f64>) -> DVector<f64> {
        self.value_grad(y).1
    }

    pub fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let uq = self.ctx.uq(y);
        let mut pc = self.ctx.psi.clone();
        for (q, &t) in uq.iter().enumerate() {
            let c = self.ctx.weights[q] * (0.5 * jump_dd(t, self.a, self.b) + (self.p - 1.0) * t.abs().powf(self.p - 2.0));
            pc.row_mut(q).scale_mut(c);
        }
        DMatrix::identity(y.len(), y.len()) - self.ctx.psi.tr_mul(&pc)
    }

    /// ‖r‖ in the dual of the mass norm for the nodal residual r, which is
    /// |Λ^{1/2} g| for the coordinate gradient g.
    pub fn mass_dual(&self, g: &DVector<f64>) -> f64 {
        g.component_mul(&self.ctx.lambdas.map(f64::sqrt)).norm()
    }
}
