//! De Giorgi truncation iteration for an L∞ bound from L² data, on nodal
//! values with the lumped measure h^N.
//!
//! u is rescaled to |u|₂ = √δ, the levels C_k = 1 − 2^{−k} truncate it to
//! w_k = (u − C_k)⁺, and U_k = |w_k|₂² must decay like δη^k. Decay through
//! k_max certifies u ≤ 1 after scaling, so sup|u| ≤ 1/scale before. The
//! constant of the recursion U_{k+1} ≤ C^k U_k^γ uses the discrete Sobolev
//! constant for the embedding and κ for the growth of the nonlinearity.

use serde::Serialize;

use crate::mesh::DiscreteFunction;

#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiState {
    pub k: usize,
    pub c_k: f64,
    pub a_k: f64,
    pub u_k: f64,
    /// δη^k.
    pub decay_bound: f64,
    /// C^k U_k^γ for the next step.
    pub recursion_bound: f64,
    pub gamma_exp: f64,
    /// |{w_{k+1} > 0}| and its bound 2^{2(k+1)} U_k.
    pub next_measure: f64,
    pub measure_bound: f64,
    /// w_{k+1} ≤ w_k at every node.
    pub monotone: bool,
    /// {w_{k+1} > 0} ⊂ {w_k > 2^{−(k+1)}}.
    pub nested: bool,
    /// |u| < A_k w_k on {w_{k+1} > 0}.
    pub dominated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiTrace {
    /// +1 for u, −1 for −u.
    pub sign: f64,
    pub states: Vec<DeGiorgiState>,
    /// U_k ≤ δη^k for every k.
    pub decay: bool,
    /// U_{k+1} ≤ C^k U_k^γ for every k.
    pub recursion: bool,
    /// Monotonicity, nesting, measure and domination hold at every step.
    pub assertions: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiReport {
    pub kappa: f64,
    pub g_inf: f64,
    pub sobolev: f64,
    pub c_const: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    /// Factor applied to u to reach |u|₂ = √δ.
    pub scale: f64,
    pub l2: f64,
    /// 1/scale when certified.
    pub bound: f64,
    pub nodal_max: f64,
    pub k_max: usize,
    pub retried: bool,
    pub certified: bool,
    pub positive: DeGiorgiTrace,
    pub negative: DeGiorgiTrace,
}

/// κ = max_nodes |u|^{2*−2}(2*−1) + max(a,b), the growth bound of
/// bt⁺ − at⁻ + |t|^{2*−2}t on the range of u.
pub fn kappa_for(u: &DiscreteFunction, a: f64, b: f64, p: f64) -> f64 {
    u.max_abs().powf(p - 2.0) * (p - 1.0) + a.abs().max(b.abs())
}

struct Constants {
    c: f64,
    gamma: f64,
    delta: f64,
    eta: f64,
}

fn run(values: &[f64], measure: f64, k: &Constants, k_max: usize, sign: f64) -> DeGiorgiTrace {
    let l2 = |w: &[f64]| measure * w.iter().map(|t| t * t).sum::<f64>();
    let trunc = |level: f64| -> Vec<f64> { values.iter().map(|&t| (sign * t - level).max(0.0)).collect() };
    let mut states = Vec::with_capacity(k_max + 1);
    let mut w = trunc(0.0);
    let (mut decay, mut recursion, mut assertions) = (true, true, true);
    let mut prev_rhs: Option<f64> = None;
    for step in 0..=k_max {
        let c_k = 1.0 - 0.5f64.powi(step as i32);
        let a_k = 2f64.powi(step as i32 + 1) - 1.0;
        let u_k = l2(&w);
        if let Some(rhs) = prev_rhs {
            recursion &= u_k <= rhs * (1.0 + 1e-12);
        }
        let w_next = trunc(1.0 - 0.5f64.powi(step as i32 + 1));
        let gap = 0.5f64.powi(step as i32 + 1);
        let monotone = w_next.iter().zip(&w).all(|(n, c)| n <= c);
        let support: Vec<usize> = (0..w_next.len()).filter(|&i| w_next[i] > 0.0).collect();
        let nested = support.iter().all(|&i| w[i] > gap);
        let dominated = support.iter().all(|&i| values[i].abs() < a_k * w[i]);
        let next_measure = measure * support.len() as f64;
        let measure_bound = 4f64.powi(step as i32 + 1) * u_k;
        // the exponent switches with the size of U_k
        let gamma_exp = if u_k <= 1.0 { k.gamma } else { k.gamma + 0.5 };
        let decay_bound = k.delta * k.eta.powi(step as i32);
        decay &= u_k <= decay_bound * (1.0 + 1e-12);
        assertions &= monotone && nested && dominated && next_measure <= measure_bound * (1.0 + 1e-12);
        let recursion_bound = k.c.powi(step as i32) * u_k.powf(gamma_exp);
        prev_rhs = Some(recursion_bound);
        states.push(DeGiorgiState {
            k: step,
            c_k,
            a_k,
            u_k,
            decay_bound,
            recursion_bound,
            gamma_exp,
            next_measure,
            measure_bound,
            monotone,
            nested,
            dominated,
        });
        w = w_next;
    }
    DeGiorgiTrace { sign, states, decay, recursion, assertions }
}

/// Certifies sup|u| from |u|₂ for a discrete solution of (−Δ)^s u = f(x,u)
/// with |f(x,t)| ≤ κ|t| + g. `sobolev` is the discrete constant S_h in
/// |w|²_{2*} ≤ ‖w‖²/S_h.
pub fn degiorgi_linfty(u: &DiscreteFunction, kappa: f64, g_inf: f64, k_max: usize, sobolev: f64) -> DeGiorgiReport {
    let mesh = &u.mesh;
    let measure = mesh.cell_volume();
    let n = mesh.dim() as f64;
    let s = mesh.s();
    let l2 = (measure * u.coeffs.norm_squared()).sqrt();
    let nodal_max = u.max_abs();
    let gamma = 1.0 + 2.0 * s / n;
    let c_star = (1.0 / sobolev) * 2f64.powf(4.0 * s / n + 1.0) * kappa.max(g_inf);
    let c = (1.0 + c_star) * 2f64.powf(4.0 * s / n + 1.0);
    // δ^{γ−1} strictly below C^{−1/(γ−1)}, and η between the two
    let ceiling = c.powf(-1.0 / (gamma - 1.0));
    let mut delta = (0.5 * ceiling).powf(1.0 / (gamma - 1.0));
    let mut retried = false;
    let values: Vec<f64> = u.coeffs.iter().copied().collect();
    loop {
        let eta = (delta.powf(gamma - 1.0) * ceiling).sqrt();
        let scale = if l2 > 0.0 { delta.sqrt() / l2 } else { 1.0 };
        let scaled: Vec<f64> = values.iter().map(|t| t * scale).collect();
        let k = Constants { c, gamma, delta, eta };
        let positive = run(&scaled, measure, &k, k_max, 1.0);
        let negative = run(&scaled, measure, &k, k_max, -1.0);
        let ok = |t: &DeGiorgiTrace| t.decay && t.recursion && t.assertions;
        let certified = ok(&positive) && ok(&negative);
        if certified || retried {
            let bound = if l2 == 0.0 { 0.0 } else if certified { 1.0 / scale } else { f64::INFINITY };
            return DeGiorgiReport {
                kappa,
                g_inf,
                sobolev,
                c_const: c,
                gamma,
                delta,
                eta,
                scale,
                l2,
                bound,
                nodal_max,
                k_max,
                retried,
                certified,
                positive,
                negative,
            };
        }
        // shrink δ once and retry
        delta *= 1e-2;
        retried = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshConfig};
    use std::sync::Arc;

    #[test]
    fn zero_has_zero_bound() {
        let m = Arc::new(build_mesh(&MeshConfig::interval(-1.0, 1.0, 32, 0.2)).unwrap());
        let r = degiorgi_linfty(&DiscreteFunction::zeros(m), 3.0, 0.0, 20, 10.0);
        assert!(r.certified && r.bound == 0.0);
        assert!(r.positive.states.iter().all(|s| s.u_k == 0.0));
    }

    #[test]
    fn bound_dominates_the_nodal_maximum() {
        let m = Arc::new(build_mesh(&MeshConfig::interval(-1.0, 1.0, 64, 0.2)).unwrap());
        let u = m.interpolate(|x| (3.0 * x[0]).sin() * (1.0 - x[0] * x[0]) * 5.0);
        let r = degiorgi_linfty(&u, 20.0, 0.0, 20, 10.0);
        assert!(r.certified, "{:?}", r.positive.states.iter().map(|s| s.u_k).collect::<Vec<_>>());
        assert!(r.bound >= r.nodal_max);
        assert!(r.positive.states.iter().chain(&r.negative.states).all(|s| s.monotone && s.nested && s.dominated));
        assert!(r.positive.states.iter().all(|s| s.next_measure <= s.measure_bound));
    }
}
