//! TOML run configuration. Every section rejects unknown keys; only `[mesh]`
//! is required, the others fall back to the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshConfig;
use crate::solver::CaseRequest;
use crate::spectrum::DEFAULT_CLUSTER_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub fucik: FucikSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// Number of distinct eigenvalues to report.
    pub count: usize,
    pub cluster_tol: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { count: 4, cluster_tol: DEFAULT_CLUSTER_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FucikSection {
    pub level: usize,
    /// Explicit a-values; empty selects `points` values centred on λ_l.
    pub a_grid: Vec<f64>,
    pub points: usize,
    /// Bisection tolerance relative to λ_l.
    pub bisect_tol: f64,
}

impl Default for FucikSection {
    fn default() -> Self {
        Self { level: 2, a_grid: Vec::new(), points: 17, bisect_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// Strictly decreasing bubble scales.
    pub eps_grid: Vec<f64>,
    pub mu: f64,
    pub mu0: f64,
    /// Linking exponents; the midpoints of their ranges when absent.
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub x0: Vec<f64>,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { eps_grid: vec![0.25, 0.125, 0.0625], mu: 2.5, mu0: 2.5, gamma: None, beta: None, x0: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// (a, b); both default to λ_l + 0.1(λ_{l+1} − λ_l).
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub case: CaseRequest,
    pub tol: f64,
    pub seed: u64,
    /// De Giorgi iterations.
    pub k_max: usize,
    /// Bubble scale of the linking set; four cells when absent.
    pub eps: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { a: None, b: None, case: CaseRequest::Auto, tol: 1e-8, seed: 1, k_max: 20, eps: None }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate().map_err(|e| Error::Config(format!("[mesh] {e}")))?;
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        if self.spectrum.count == 0 {
            return bad("spectrum.count", "must be positive".into());
        }
        if !(self.spectrum.cluster_tol > 0.0) {
            return bad("spectrum.cluster_tol", "must be positive".into());
        }
        if self.fucik.level < 2 {
            return bad("fucik.level", format!("must be at least 2, got {}", self.fucik.level));
        }
        if self.fucik.a_grid.is_empty() && self.fucik.points < 3 {
            return bad("fucik.points", "need at least 3 points".into());
        }
        if !(self.fucik.bisect_tol > 0.0) {
            return bad("fucik.bisect_tol", "must be positive".into());
        }
        let e = &self.energy;
        if e.eps_grid.is_empty() || e.eps_grid.iter().any(|&x| !(x > 0.0)) || e.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return bad("energy.eps_grid", "must be nonempty, positive and strictly decreasing".into());
        }
        if !(e.mu0 > 0.0) || !(e.mu >= e.mu0) {
            return bad("energy.mu", format!("need 0 < mu0 <= mu, got mu0 = {}, mu = {}", e.mu0, e.mu));
        }
        if e.x0.len() != self.mesh.dim {
            return bad("energy.x0", format!("expected {} coordinates, got {}", self.mesh.dim, e.x0.len()));
        }
        let s = &self.solver;
        if !(s.tol > 0.0) {
            return bad("solver.tol", "must be positive".into());
        }
        if s.a.is_some() != s.b.is_some() {
            return bad("solver.a", "a and b must be given together".into());
        }
        if s.k_max == 0 {
            return bad("solver.k_max", "must be positive".into());
        }
        Ok(())
    }

    pub fn x0(&self) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (slot, v) in x.iter_mut().zip(&self.energy.x0) {
            *slot = *v;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\ndim = 1\nextent = [[-1.0, 1.0]]\nn_cells = [32]\ns = 0.2\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.fucik.level, 2);
        assert_eq!(cfg.solver.case, CaseRequest::Auto);
        assert_eq!(cfg.x0(), [0.0, 0.0]);
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let err = RunConfig::parse(&MINIMAL.replace("s = 0.2\n", "")).unwrap_err().to_string();
        assert!(err.contains("`s`"), "{err}");
        let err = RunConfig::parse(&format!("{MINIMAL}[solver]\nsead = 3\n")).unwrap_err().to_string();
        assert!(err.contains("sead"), "{err}");
        let err = RunConfig::parse(&format!("{MINIMAL}[solver]\ncase = \"above-mu\"\na = 1.0\n")).unwrap_err().to_string();
        assert!(err.contains("solver.a"), "{err}");
    }

    #[test]
    fn shipped_default_parses() {
        let text = include_str!("../../../configs/default.toml");
        RunConfig::parse(text).unwrap();
    }
}
