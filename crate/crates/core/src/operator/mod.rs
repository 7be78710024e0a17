//! Discrete fractional Laplacian: stiffness (Gagliardo form of the nodal
//! basis, extension by zero), consistent mass, and quadrature sampling.
//!
//! Both matrices are Toeplitz (block Toeplitz in 2D) on a uniform grid and
//! are stored by their generators; dense copies are built on demand.

pub mod line;
pub mod plane;
pub mod sampler;

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, DiscreteFunction, Mesh, MeshConfig};
pub use sampler::QuadratureSampler;

/// Largest system for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    /// Gauss points per cell and axis for nonlinear integrals.
    pub quad_order: usize,
    /// Tolerated relative disagreement between two angular orders (2D).
    pub quad_tol: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { quad_order: 4, quad_tol: 1e-9 }
    }
}

#[derive(Debug)]
pub struct DiscreteOperator {
    pub mesh: Arc<Mesh>,
    pub s: f64,
    /// Stiffness generator by offset (row-major in the y offset for 2D).
    k_gen: Vec<f64>,
    /// Mass generator per axis offset 0 and 1.
    m_gen: [f64; 2],
    pub sampler: QuadratureSampler,
    dense_k: OnceLock<DMatrix<f64>>,
    dense_m: OnceLock<DMatrix<f64>>,
}

pub fn assemble(cfg: &MeshConfig) -> Result<DiscreteOperator> {
    assemble_with(cfg, AssemblyOptions::default())
}

pub fn assemble_with(cfg: &MeshConfig, opts: AssemblyOptions) -> Result<DiscreteOperator> {
    let mesh = Arc::new(build_mesh(cfg)?);
    DiscreteOperator::on_mesh(mesh, opts)
}

impl DiscreteOperator {
    pub fn on_mesh(mesh: Arc<Mesh>, opts: AssemblyOptions) -> Result<Self> {
        let s = mesh.s();
        let h = mesh.h;
        let k_gen = match mesh.dim() {
            1 => line::generator(mesh.n_int[0], h, s),
            _ => plane::generator(mesh.n_int[0], mesh.n_int[1], h, s, opts.quad_tol)?,
        };
        let sampler = QuadratureSampler::new(&mesh, opts.quad_order);
        Ok(Self {
            s,
            k_gen,
            m_gen: [2.0 * h / 3.0, h / 6.0],
            sampler,
            mesh,
            dense_k: OnceLock::new(),
            dense_m: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn k_entry(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.mesh.grid_index(i), self.mesh.grid_index(j));
        let p = a[0].abs_diff(b[0]);
        match self.dim() {
            1 => self.k_gen[p],
            _ => self.k_gen[a[1].abs_diff(b[1]) * self.mesh.n_int[0] + p],
        }
    }

    pub fn m_entry(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.mesh.grid_index(i), self.mesh.grid_index(j));
        let f = |d: usize| match d {
            0 => self.m_gen[0],
            1 => self.m_gen[1],
            _ => 0.0,
        };
        match self.dim() {
            1 => f(a[0].abs_diff(b[0])),
            _ => f(a[0].abs_diff(b[0])) * f(a[1].abs_diff(b[1])),
        }
    }

    fn check_dense(&self) -> Result<()> {
        if self.n() > DENSE_LIMIT {
            return Err(Error::InvalidInput(format!(
                "{} unknowns exceed the dense limit {DENSE_LIMIT}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> Result<&DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_k.get_or_init(|| DMatrix::from_fn(self.n(), self.n(), |i, j| self.k_entry(i, j))))
    }

    pub fn mass(&self) -> Result<&DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_m.get_or_init(|| DMatrix::from_fn(self.n(), self.n(), |i, j| self.m_entry(i, j))))
    }

    /// K u without forming K, skipping zero coefficients.
    pub fn apply_k(&self, u: &[f64]) -> Vec<f64> {
        if let Some(k) = self.dense_k.get() {
            return (k * DVector::from_column_slice(u)).as_slice().to_vec();
        }
        let nz: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0).collect();
        (0..self.n())
            .map(|i| nz.iter().map(|&j| self.k_entry(i, j) * u[j]).sum())
            .collect()
    }

    pub fn apply_m(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let g = self.mesh.grid_index(i);
            let mut acc = 0.0;
            let (ylo, yhi) = if self.dim() == 2 { (g[1].saturating_sub(1).max(1), g[1] + 1) } else { (0, 0) };
            for gy in ylo..=yhi {
                for gx in g[0].saturating_sub(1).max(1)..=g[0] + 1 {
                    if let Some(j) = self.mesh.dof_of([gx, gy]) {
                        acc += self.m_entry(i, j) * u[j];
                    }
                }
            }
            *o = acc;
        }
        out
    }

    /// Gagliardo bilinear form of two coefficient vectors.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        if let Some(k) = self.dense_k.get() {
            return DVector::from_column_slice(u).dot(&(k * DVector::from_column_slice(v)));
        }
        let nu: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0).collect();
        let nv: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
        let mut acc = 0.0;
        if self.dim() == 1 {
            // Toeplitz: index the generator directly
            for &i in &nu {
                let row: f64 = nv.iter().map(|&j| self.k_gen[i.abs_diff(j)] * v[j]).sum();
                acc += u[i] * row;
            }
            return acc;
        }
        for &i in &nu {
            let mut row = 0.0;
            for &j in &nv {
                row += self.k_entry(i, j) * v[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.apply_m(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// ∬ |u(x) − u(y)|² / |x − y|^{N+2s} of the zero-extended interpolant.
    pub fn gagliardo_seminorm_sq(&self, u: &DiscreteFunction) -> f64 {
        assert_eq!(u.coeffs.len(), self.n(), "function lives on another mesh");
        self.bilinear(u.coeffs.as_slice(), u.coeffs.as_slice())
    }

    /// Writes K and M as (row, col, value) triplets plus a JSON header.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = serde_json::json!({
            "kind": "matrix_dump",
            "mesh": self.mesh.config,
            "n": self.n(),
            "files": ["stiffness.coo", "mass.coo"],
        });
        std::fs::write(dir.join("matrices.json"), serde_json::to_string_pretty(&header)? + "\n")?;
        for (name, is_k) in [("stiffness.coo", true), ("mass.coo", false)] {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            for i in 0..self.n() {
                for j in 0..self.n() {
                    let v = if is_k { self.k_entry(i, j) } else { self.m_entry(i, j) };
                    if v != 0.0 {
                        writeln!(f, "{i} {j} {v:.16e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}
