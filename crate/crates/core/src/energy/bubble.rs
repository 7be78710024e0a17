//! Truncated Aubin-Talenti bubbles u_{ε,μ}(x) = ξ(μ|x−x₀|) u_ε(x−x₀).

use std::sync::Arc;

use serde::Serialize;

use super::cutoff::xi;
use super::sobolev::bubble_constant;
use crate::error::{Error, Result};
use crate::mesh::{DiscreteFunction, Mesh};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BubbleParams {
    pub eps: f64,
    pub mu: f64,
    pub x0: [f64; 2],
    pub mu0: f64,
    pub c_ns: f64,
    #[serde(skip)]
    dim: usize,
    #[serde(skip)]
    s: f64,
}

impl BubbleParams {
    /// Checks μ₀ > 2/dist(x₀,∂Ω) and μ ≥ μ₀, so the support stays inside Ω.
    pub fn new(mesh: &Mesh, eps: f64, mu: f64, x0: [f64; 2], mu0: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("bubble scale must be positive, got {eps}")));
        }
        if !mesh.contains(x0) {
            return Err(Error::SupportOutsideDomain(format!("center {x0:?} is not inside the domain")));
        }
        let dist = mesh.dist_to_boundary(x0);
        if !(mu0 > 2.0 / dist) {
            return Err(Error::SupportOutsideDomain(format!("mu0 = {mu0} must exceed 2/dist(x0) = {}", 2.0 / dist)));
        }
        if mu < mu0 {
            return Err(Error::InvalidInput(format!("mu = {mu} below mu0 = {mu0}")));
        }
        let (dim, s) = (mesh.dim(), mesh.s());
        Ok(Self { eps, mu, x0, mu0, c_ns: bubble_constant(dim, s), dim, s })
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        if mu < self.mu0 {
            return Err(Error::InvalidInput(format!("mu = {mu} below mu0 = {}", self.mu0)));
        }
        Ok(Self { mu, ..*self })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }

    /// Radius of the support ball, 1/(2μ).
    pub fn support_radius(&self) -> f64 {
        0.5 / self.mu
    }

    fn radius(&self, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.x0[0];
        let dy = if self.dim == 2 { x[1] - self.x0[1] } else { 0.0 };
        dx.hypot(dy)
    }
}

/// u_{ε,μ} at a point.
pub fn bubble_profile(p: &BubbleParams, x: [f64; 2]) -> f64 {
    let r = p.radius(x);
    let cut = xi(p.mu * r);
    if cut == 0.0 {
        return 0.0;
    }
    let n = p.dim as f64;
    cut * p.c_ns * (p.eps / (p.eps * p.eps + r * r)).powf(0.5 * (n - 2.0 * p.s))
}

/// Nodal interpolant of u_{ε,μ}.
pub fn bubble(p: &BubbleParams, mesh: &Arc<Mesh>) -> Result<DiscreteFunction> {
    if p.dim != mesh.dim() || p.s != mesh.s() {
        return Err(Error::InvalidInput("bubble parameters belong to a different mesh".into()));
    }
    if p.support_radius() > mesh.dist_to_boundary(p.x0) {
        return Err(Error::SupportOutsideDomain(format!(
            "radius {} exceeds dist(x0) = {}",
            p.support_radius(),
            mesh.dist_to_boundary(p.x0)
        )));
    }
    Ok(mesh.interpolate(|x| bubble_profile(p, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshConfig};

    fn mesh() -> Arc<Mesh> {
        Arc::new(build_mesh(&MeshConfig::interval(-1.0, 1.0, 256, 0.2)).unwrap())
    }

    #[test]
    fn support_and_peak() {
        let m = mesh();
        let p = BubbleParams::new(&m, 0.05, 4.0, [0.0, 0.0], 2.5).unwrap();
        let u = bubble(&p, &m).unwrap();
        for (i, x) in m.nodes().iter().enumerate() {
            if x[0].abs() >= p.support_radius() {
                assert_eq!(u.coeffs[i], 0.0);
            }
        }
        let centre = m.nodes().iter().position(|x| x[0] == 0.0).unwrap();
        assert!((u.coeffs[centre] - p.c_ns * 0.05f64.powf(-0.3)).abs() < 1e-12 * u.coeffs[centre]);
    }

    #[test]
    fn rescaling_identity_on_aligned_nodes() {
        let m = mesh();
        let (mu0, mu) = (2.5, 5.0);
        let mt = mu / mu0;
        let p = BubbleParams::new(&m, 0.03, mu, [0.0, 0.0], mu0).unwrap();
        let q = p.with_eps(mt * 0.03).with_mu(mu0).unwrap();
        for x in m.nodes() {
            let y = [mt * x[0], 0.0];
            if !m.contains(y) {
                continue;
            }
            let lhs = bubble_profile(&p, x);
            let rhs = mt.powf(0.3) * bubble_profile(&q, y);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn inadmissible_parameters_are_rejected() {
        let m = mesh();
        assert!(BubbleParams::new(&m, 0.05, 4.0, [0.0, 0.0], 1.5).is_err());
        assert!(BubbleParams::new(&m, 0.05, 2.0, [0.0, 0.0], 2.5).is_err());
        assert!(BubbleParams::new(&m, 0.05, 9.0, [0.9, 0.0], 2.5).is_err());
        assert!(BubbleParams::new(&m, 0.0, 4.0, [0.0, 0.0], 2.5).is_err());
    }
}
