//! Discrete Dirichlet fractional Laplacian on boxes, the Dancer-Fucik curves
//! through its eigenvalues, and a linking min-max solver for the critical
//! jumping problem
//!
//!   (-Δ)^s u = b u⁺ − a u⁻ + |u|^{2*−2} u  in Ω,   u = 0 outside Ω.

pub mod commands;
pub mod config;
pub mod energy;
pub mod error;
pub mod fucik;
pub mod mesh;
pub mod operator;
pub mod optim;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod spectrum;

pub use error::{Error, Result};
pub use mesh::{DiscreteFunction, Mesh, MeshConfig};
pub use operator::DiscreteOperator;
pub use spectrum::{EigenDecomposition, SubspaceSplit};
