//! Uniform tensor grids with piecewise (multi)linear nodal bases and the
//! zero-extension convention: only interior nodes carry degrees of freedom.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub dim: usize,
    pub extent: Vec<(f64, f64)>,
    pub n_cells: Vec<usize>,
    pub s: f64,
}

impl MeshConfig {
    pub fn interval(lo: f64, hi: f64, n_cells: usize, s: f64) -> Self {
        Self { dim: 1, extent: vec![(lo, hi)], n_cells: vec![n_cells], s }
    }

    pub fn square(lo: f64, hi: f64, n_cells: usize, s: f64) -> Self {
        Self { dim: 2, extent: vec![(lo, hi); 2], n_cells: vec![n_cells; 2], s }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.extent.len() != self.dim || self.n_cells.len() != self.dim {
            return Err(Error::InvalidMesh(format!(
                "expected {} extents and cell counts, got {} and {}",
                self.dim,
                self.extent.len(),
                self.n_cells.len()
            )));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidMesh(format!("s must lie in (0,1), got {}", self.s)));
        }
        for (axis, (&(lo, hi), &n)) in self.extent.iter().zip(&self.n_cells).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidMesh(format!("degenerate extent ({lo}, {hi}) on axis {axis}")));
            }
            if n < 4 {
                return Err(Error::InvalidMesh(format!("n_cells must be at least 4, got {n} on axis {axis}")));
            }
        }
        if self.dim == 2 {
            let hx = (self.extent[0].1 - self.extent[0].0) / self.n_cells[0] as f64;
            let hy = (self.extent[1].1 - self.extent[1].0) / self.n_cells[1] as f64;
            if ((hx - hy) / hx).abs() > 1e-12 {
                return Err(Error::InvalidMesh(format!("2D grids need square cells, got hx={hx}, hy={hy}")));
            }
        }
        Ok(())
    }

    /// Critical Sobolev exponent 2N/(N-2s); requires N > 2s.
    pub fn critical_exponent(&self) -> Result<f64> {
        let n = self.dim as f64;
        if n <= 2.0 * self.s {
            return Err(Error::InvalidInput(format!(
                "critical exponent needs N > 2s (N={}, s={})",
                self.dim, self.s
            )));
        }
        Ok(2.0 * n / (n - 2.0 * self.s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub config: MeshConfig,
    pub h: f64,
    /// Interior nodes per axis.
    pub n_int: Vec<usize>,
}

pub fn build_mesh(cfg: &MeshConfig) -> Result<Mesh> {
    cfg.validate()?;
    let h = (cfg.extent[0].1 - cfg.extent[0].0) / cfg.n_cells[0] as f64;
    let n_int = cfg.n_cells.iter().map(|n| n - 1).collect();
    Ok(Mesh { config: cfg.clone(), h, n_int })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn s(&self) -> f64 {
        self.config.s
    }

    pub fn n_dofs(&self) -> usize {
        self.n_int.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Interior node indices per axis (1-based grid index) of a dof.
    pub fn grid_index(&self, dof: usize) -> [usize; 2] {
        match self.dim() {
            1 => [dof + 1, 0],
            _ => [dof % self.n_int[0] + 1, dof / self.n_int[0] + 1],
        }
    }

    /// Dof of an interior grid index, `None` on the boundary.
    pub fn dof_of(&self, idx: [usize; 2]) -> Option<usize> {
        match self.dim() {
            1 => (idx[0] >= 1 && idx[0] <= self.n_int[0]).then(|| idx[0] - 1),
            _ => {
                let ok = (1..=self.n_int[0]).contains(&idx[0]) && (1..=self.n_int[1]).contains(&idx[1]);
                ok.then(|| (idx[1] - 1) * self.n_int[0] + idx[0] - 1)
            }
        }
    }

    pub fn node(&self, dof: usize) -> [f64; 2] {
        let g = self.grid_index(dof);
        let x = self.config.extent[0].0 + g[0] as f64 * self.h;
        let y = if self.dim() == 2 { self.config.extent[1].0 + g[1] as f64 * self.h } else { 0.0 };
        [x, y]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.n_dofs()).map(|i| self.node(i)).collect()
    }

    /// Euclidean distance from a point to the boundary of the box.
    pub fn dist_to_boundary(&self, x: [f64; 2]) -> f64 {
        (0..self.dim())
            .map(|k| {
                let (lo, hi) = self.config.extent[k];
                (x[k] - lo).min(hi - x[k])
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (k, ck) in c.iter_mut().enumerate().take(self.dim()) {
            let (lo, hi) = self.config.extent[k];
            *ck = 0.5 * (lo + hi);
        }
        c
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..self.dim()).all(|k| {
            let (lo, hi) = self.config.extent[k];
            x[k] > lo && x[k] < hi
        })
    }

    /// Interpolates `f` at the interior nodes.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn([f64; 2]) -> f64) -> DiscreteFunction {
        let v = DVector::from_iterator(self.n_dofs(), (0..self.n_dofs()).map(|i| f(self.node(i))));
        DiscreteFunction::new(self.clone(), v)
    }
}

/// Nodal coefficients on interior nodes of a mesh; zero elsewhere.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    pub mesh: Arc<Mesh>,
    pub coeffs: DVector<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Arc<Mesh>, coeffs: DVector<f64>) -> Self {
        assert_eq!(coeffs.len(), mesh.n_dofs(), "coefficient vector does not match mesh");
        Self { mesh, coeffs }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_dofs();
        Self::new(mesh, DVector::zeros(n))
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { mesh: self.mesh.clone(), coeffs: &self.coeffs * t }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_nodes() {
        let m = build_mesh(&MeshConfig::interval(-1.0, 1.0, 4, 0.3)).unwrap();
        let xs: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn too_few_cells_rejected() {
        assert!(build_mesh(&MeshConfig::interval(-1.0, 1.0, 3, 0.3)).is_err());
    }

    #[test]
    fn square_has_49_interior_nodes() {
        let m = build_mesh(&MeshConfig::square(-1.0, 1.0, 8, 0.3)).unwrap();
        assert_eq!(m.n_dofs(), 49);
        for d in 0..49 {
            assert_eq!(m.dof_of(m.grid_index(d)), Some(d));
        }
        assert_eq!(m.dof_of([0, 3]), None);
    }

    #[test]
    fn bad_configs_rejected() {
        let mut c = MeshConfig::interval(-1.0, 1.0, 8, 0.3);
        c.dim = 3;
        assert!(build_mesh(&c).is_err());
        assert!(build_mesh(&MeshConfig::interval(1.0, 1.0, 8, 0.3)).is_err());
        assert!(build_mesh(&MeshConfig::interval(-1.0, 1.0, 8, 1.0)).is_err());
    }

    #[test]
    fn critical_exponent_requires_n_above_2s() {
        assert!(MeshConfig::interval(-1.0, 1.0, 8, 0.5).critical_exponent().is_err());
        let p = MeshConfig::interval(-1.0, 1.0, 8, 0.2).critical_exponent().unwrap();
        assert!((p - 10.0 / 3.0).abs() < 1e-15);
    }
}
