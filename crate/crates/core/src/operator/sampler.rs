//! Evaluation of the nodal interpolant at per-cell Gauss points.
//!
//! Nonlinear integrals (positive parts, powers) are taken at these points.
//! Since the rule is exact for products of two interpolants, Σ w u_q² is the
//! consistent-mass norm of u.

use crate::mesh::Mesh;
use crate::quadrature::gauss_legendre;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    idx: Vec<[u32; 4]>,
    val: Vec<[f64; 4]>,
    n_dofs: usize,
}

impl QuadratureSampler {
    pub fn new(mesh: &Mesh, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let h = mesh.h;
        let t: Vec<f64> = gx.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let w: Vec<f64> = gw.iter().map(|w| 0.5 * w * h).collect();
        let mut out = Self { points: vec![], weights: vec![], idx: vec![], val: vec![], n_dofs: mesh.n_dofs() };
        let dof = |g: [usize; 2]| mesh.dof_of(g).map_or(NONE, |d| d as u32);
        let x0 = mesh.config.extent[0].0;
        match mesh.dim() {
            1 => {
                for c in 0..mesh.config.n_cells[0] {
                    let (l, r) = (dof([c, 0]), dof([c + 1, 0]));
                    for (ti, wi) in t.iter().zip(&w) {
                        out.points.push([x0 + (c as f64 + ti) * h, 0.0]);
                        out.weights.push(*wi);
                        out.idx.push([l, r, NONE, NONE]);
                        out.val.push([1.0 - ti, *ti, 0.0, 0.0]);
                    }
                }
            }
            _ => {
                let y0 = mesh.config.extent[1].0;
                for cy in 0..mesh.config.n_cells[1] {
                    for cx in 0..mesh.config.n_cells[0] {
                        let corners = [
                            dof([cx, cy]),
                            dof([cx + 1, cy]),
                            dof([cx, cy + 1]),
                            dof([cx + 1, cy + 1]),
                        ];
                        for (ty, wy) in t.iter().zip(&w) {
                            for (tx, wx) in t.iter().zip(&w) {
                                out.points.push([x0 + (cx as f64 + tx) * h, y0 + (cy as f64 + ty) * h]);
                                out.weights.push(wx * wy);
                                out.idx.push(corners);
                                out.val.push([
                                    (1.0 - tx) * (1.0 - ty),
                                    tx * (1.0 - ty),
                                    (1.0 - tx) * ty,
                                    tx * ty,
                                ]);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Interpolant values at the quadrature points.
    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(ix, vx)| {
                let mut acc = 0.0;
                for k in 0..4 {
                    if ix[k] != NONE {
                        acc += vx[k] * u[ix[k] as usize];
                    }
                }
                acc
            })
            .collect()
    }

    /// Σ_q w_q f_q φ_i(x_q) for every basis function φ_i.
    pub fn integrate_against_basis(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        for q in 0..self.len() {
            let wf = self.weights[q] * f[q];
            if wf == 0.0 {
                continue;
            }
            for k in 0..4 {
                let i = self.idx[q][k];
                if i != NONE {
                    out[i as usize] += self.val[q][k] * wf;
                }
            }
        }
        out
    }

    /// Dense Σ_q w_q c_q φ_i(x_q) φ_j(x_q).
    pub fn weighted_gram(&self, c: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut g = nalgebra::DMatrix::zeros(self.n_dofs, self.n_dofs);
        for q in 0..self.len() {
            let wc = self.weights[q] * c[q];
            if wc == 0.0 {
                continue;
            }
            for a in 0..4 {
                let i = self.idx[q][a];
                if i == NONE {
                    continue;
                }
                for b in 0..4 {
                    let j = self.idx[q][b];
                    if j != NONE {
                        g[(i as usize, j as usize)] += wc * self.val[q][a] * self.val[q][b];
                    }
                }
            }
        }
        g
    }

    /// Dense basis-value matrix B with B[q][i] = φ_i(x_q).
    pub fn basis_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut b = nalgebra::DMatrix::zeros(self.len(), self.n_dofs);
        for q in 0..self.len() {
            for k in 0..4 {
                let i = self.idx[q][k];
                if i != NONE {
                    b[(q, i as usize)] += self.val[q][k];
                }
            }
        }
        b
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}
