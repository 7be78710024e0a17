//! The energy ℰ(u) = ½ℐ(u,a,b) − F(u) with the critical potential
//! F(u) = (1/2*)∫|u|^{2*}, the Sobolev constant, bubbles, cutoffs and the
//! estimate suites used by the linking arguments.

mod bubble;
mod cutoff;
mod estimates;
mod lemmas;
mod sobolev;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::fucik::{functional_i, jump, jump_d, jump_dd};
use crate::mesh::DiscreteFunction;
use crate::operator::DiscreteOperator;

pub use bubble::{bubble, bubble_profile, BubbleParams};
pub use cutoff::{eta, eta_prime, xi, xi_prime, SlopeCutoff, PLATEAU_SLOPE};
pub use estimates::{fit_slope, verify_bubble_estimates, EstimateRecord, EstimateReport};
pub use lemmas::{
    annulus_cutoff_v, i_minus_t_norm, lemma5_surface, lemma6_sup, lemma7_report, lemma8_sup, sigma_tau_sup, InequalityCheck,
    Lemma5Report, Lemma6Report, Lemma7Report, Lemma8Report, LinkingParams, SupResult, SurfaceGrid, SURFACE_POINTS,
};
pub use sobolev::{
    analytic_sobolev_constant, bubble_constant, c_star, quotient, quotient_gradient, sobolev_constant, SobolevEstimate,
    SobolevOptions,
};

/// 2*_s = 2N/(N−2s).
pub fn critical_power(op: &DiscreteOperator) -> Result<f64> {
    op.mesh.config.critical_exponent()
}

fn power(op: &DiscreteOperator) -> f64 {
    critical_power(op).expect("energy needs N > 2s")
}

/// F(u) = (1/2*)∫|u|^{2*} by quadrature of the interpolant.
pub fn potential_f(op: &DiscreteOperator, u: &DiscreteFunction) -> f64 {
    let p = power(op);
    let uq = op.sampler.eval(u.coeffs.as_slice());
    op.sampler.integral(&uq.iter().map(|t| t.abs().powf(p)).collect::<Vec<_>>()) / p
}

pub fn energy_e(op: &DiscreteOperator, u: &DiscreteFunction, a: f64, b: f64) -> f64 {
    0.5 * functional_i(op, u, a, b) - potential_f(op, u)
}

/// Nodal residual r_i = ⟨u,φ_i⟩_D − ∫(bu⁺ − au⁻ + |u|^{2*−2}u)φ_i, which is
/// the gradient of ℰ in coefficient space.
pub fn gradient_e(op: &DiscreteOperator, u: &DVector<f64>, a: f64, b: f64) -> DVector<f64> {
    let p = power(op);
    let uq = op.sampler.eval(u.as_slice());
    let f: Vec<f64> = uq.iter().map(|&t| 0.5 * jump_d(t, a, b) + t.abs().powf(p - 2.0) * t).collect();
    DVector::from_vec(op.apply_k(u.as_slice())) - DVector::from_vec(op.sampler.integrate_against_basis(&f))
}

/// Hessian of ℰ in coefficient space. The jump part is piecewise constant in
/// u, so this is its generalized derivative.
pub fn hessian_e(op: &DiscreteOperator, u: &DVector<f64>, a: f64, b: f64) -> Result<DMatrix<f64>> {
    let p = power(op);
    let uq = op.sampler.eval(u.as_slice());
    let c: Vec<f64> = uq.iter().map(|&t| 0.5 * jump_dd(t, a, b) + (p - 1.0) * t.abs().powf(p - 2.0)).collect();
    Ok(op.stiffness()? - op.sampler.weighted_gram(&c))
}

/// ‖r‖ in the dual of the L² (mass) norm, (rᵀM⁻¹r)^{1/2}.
pub fn mass_dual_norm(op: &DiscreteOperator, r: &DVector<f64>) -> f64 {
    let z = mass_solve(op, r);
    r.dot(&z).max(0.0).sqrt()
}

/// M⁻¹ r by conjugate gradients; M has condition number at most 3^N.
pub fn mass_solve(op: &DiscreteOperator, r: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(r.len());
    let mut res = r.clone();
    let mut d = res.clone();
    let mut rr = res.dot(&res);
    let stop = 1e-30 * rr;
    for _ in 0..(4 * r.len()).max(50) {
        if rr <= stop {
            break;
        }
        let md = DVector::from_vec(op.apply_m(d.as_slice()));
        let alpha = rr / d.dot(&md);
        x.axpy(alpha, &d, 1.0);
        res.axpy(-alpha, &md, 1.0);
        let rr_new = res.dot(&res);
        d = &res + &d * (rr_new / rr);
        rr = rr_new;
    }
    x
}

/// Jump integral ∫[a(u⁻)² + b(u⁺)²] of interpolant values at the quadrature points.
pub(crate) fn jump_integral(op: &DiscreteOperator, uq: &[f64], a: f64, b: f64) -> f64 {
    op.sampler.integral(&uq.iter().map(|&t| jump(t, a, b)).collect::<Vec<_>>())
}

pub(crate) fn power_integral(op: &DiscreteOperator, uq: &[f64], p: f64) -> f64 {
    op.sampler.integral(&uq.iter().map(|t| t.abs().powf(p)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshConfig;
    use crate::operator::assemble;
    use crate::spectrum::eigensolve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line() -> DiscreteOperator {
        assemble(&MeshConfig::interval(-1.0, 1.0, 32, 0.2)).unwrap()
    }

    #[test]
    fn energy_matches_an_independent_assembly() {
        let op = line();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = critical_power(&op).unwrap();
        for _ in 0..5 {
            let u = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() - 0.5);
            let (a, b) = (1.3, 2.1);
            // dense K and raw quadrature sums
            let k = op.stiffness().unwrap();
            let uq = op.sampler.basis_matrix() * &u;
            let mut direct = 0.5 * u.dot(&(k * &u));
            for (q, &t) in uq.iter().enumerate() {
                let w = op.sampler.weights[q];
                direct -= w * (0.5 * if t > 0.0 { b * t * t } else { a * t * t } + t.abs().powf(p) / p);
            }
            let f = DiscreteFunction::new(op.mesh.clone(), u);
            let e = energy_e(&op, &f, a, b);
            assert!((e - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            assert!(potential_f(&op, &f) >= 0.0);
        }
        assert_eq!(energy_e(&op, &DiscreteFunction::zeros(op.mesh.clone()), 1.0, 1.0), 0.0);
    }

    #[test]
    fn energy_on_the_first_eigenfunction_is_pure_potential() {
        let op = line();
        let dec = eigensolve(&op, 2).unwrap();
        let l1 = dec.lambda(1);
        let phi = DiscreteFunction::new(op.mesh.clone(), dec.vector(0));
        let p = critical_power(&op).unwrap();
        let uq = op.sampler.eval(phi.coeffs.as_slice());
        let lp = power_integral(&op, &uq, p);
        for t in [0.5, 2.0] {
            let e = energy_e(&op, &phi.scaled(t), l1, l1);
            assert!((e + t.powf(p) / p * lp).abs() <= 1e-10 * lp);
        }
    }

    #[test]
    fn potential_is_small_o_of_the_norm_squared() {
        let op = line();
        let dec = eigensolve(&op, 2).unwrap();
        let phi = DiscreteFunction::new(op.mesh.clone(), dec.vector(0));
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|&t| potential_f(&op, &phi.scaled(t)) / (t * t)).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        // F(tu)/t² ∝ t^{2*−2}
        let slope = (ratios[3] / ratios[0]).ln() / (1e-4f64 / 1e-1).ln();
        assert!((slope - (critical_power(&op).unwrap() - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let op = line();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(gradient_e(&op, &DVector::zeros(op.n()), 1.0, 2.0).amax(), 0.0);
        for _ in 0..20 {
            let u = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() - 0.5);
            let phi = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() - 0.5);
            let (a, b) = (1.1, 1.7);
            let e = |v: &DVector<f64>| energy_e(&op, &DiscreteFunction::new(op.mesh.clone(), v.clone()), a, b);
            let h = 1e-5;
            let fd = (e(&(&u + &phi * h)) - e(&(&u - &phi * h))) / (2.0 * h);
            let an = gradient_e(&op, &u, a, b).dot(&phi);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let op = line();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() + 0.2);
        let d = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() - 0.5);
        let h = 1e-6;
        let fd = (gradient_e(&op, &(&u + &d * h), 1.0, 2.0) - gradient_e(&op, &(&u - &d * h), 1.0, 2.0)) / (2.0 * h);
        let an = hessian_e(&op, &u, 1.0, 2.0).unwrap() * &d;
        assert!((fd - &an).norm() <= 1e-6 * an.norm());
    }

    #[test]
    fn mass_dual_norm_inverts_the_mass_matrix() {
        let op = line();
        let u = DVector::from_fn(op.n(), |i, _| (i as f64 * 0.3).sin());
        let mu = DVector::from_vec(op.apply_m(u.as_slice()));
        let n2 = op.mass_inner(u.as_slice(), u.as_slice());
        assert!((mass_dual_norm(&op, &mu).powi(2) - n2).abs() <= 1e-12 * n2);
    }
}
