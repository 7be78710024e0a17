//! The discrete operator against brute-force quadrature, exact scaling and
//! mesh refinement.

use std::sync::Arc;

use fucik_lab::mesh::{build_mesh, DiscreteFunction, MeshConfig};
use fucik_lab::operator::assemble;
use fucik_lab::quadrature::gauss_on;
use fucik_lab::spectrum::eigensolve;
use nalgebra::DVector;
use proptest::prelude::*;

/// Hat of half-width h at x0 as a function on the line.
fn hat(x0: f64, h: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (1.0 - (x - x0).abs() / h).max(0.0)
}

/// Panels on [lo, hi]: `uniform` equal pieces, with the piece at `towards`
/// split geometrically `levels` more times.
fn panels(lo: f64, hi: f64, uniform: usize, towards: f64, levels: usize) -> Vec<(f64, f64)> {
    let w = (hi - lo) / uniform as f64;
    let mut out: Vec<(f64, f64)> = (0..uniform).map(|k| (lo + k as f64 * w, lo + (k + 1) as f64 * w)).collect();
    let at_hi = (towards - hi).abs() < (towards - lo).abs();
    let idx = if at_hi { uniform - 1 } else { 0 };
    let (mut a, mut b) = out.remove(idx);
    for _ in 0..levels {
        let mid = 0.5 * (a + b);
        if at_hi {
            out.push((a, mid));
            a = mid;
        } else {
            out.push((mid, b));
            b = mid;
        }
    }
    out.push((a, b));
    out
}

/// ∬_{ℝ²} |φ(x) − φ(y)|² / |x − y|^{1+2s} for one hat φ: panel-pair Gauss
/// quadrature on supp φ × supp φ, with distinct orders in x and y so that no
/// node pair sits on the diagonal, plus the exact y-integral outside the
/// support.
fn hat_seminorm_oracle(x0: f64, h: f64, s: f64) -> f64 {
    let phi = hat(x0, h);
    let (a, b) = (x0 - h, x0 + h);
    let mut ps = panels(a, x0, 40, x0, 24);
    ps.extend(panels(x0, b, 40, x0, 24));
    let inner: f64 = ps
        .iter()
        .flat_map(|&(p0, p1)| ps.iter().map(move |&(q0, q1)| (p0, p1, q0, q1)))
        .map(|(p0, p1, q0, q1)| {
            let mut acc = 0.0;
            for (x, wx) in gauss_on(10, p0, p1) {
                for (y, wy) in gauss_on(11, q0, q1) {
                    acc += wx * wy * (phi(x) - phi(y)).powi(2) / (x - y).abs().powf(1.0 + 2.0 * s);
                }
            }
            acc
        })
        .sum();
    let tail: f64 = ps
        .iter()
        .flat_map(|&(p0, p1)| gauss_on(12, p0, p1))
        .map(|(x, w)| w * phi(x).powi(2) * ((x - a).powf(-2.0 * s) + (b - x).powf(-2.0 * s)) / (2.0 * s))
        .sum();
    inner + 2.0 * tail
}

#[test]
fn single_hat_matches_brute_force_quadrature() {
    let op = assemble(&MeshConfig::interval(-1.0, 1.0, 16, 0.5)).unwrap();
    let h = op.mesh.h;
    for dof in [0, 7, 14] {
        let mut c = DVector::zeros(op.n());
        c[dof] = 1.0;
        let got = op.gagliardo_seminorm_sq(&DiscreteFunction::new(op.mesh.clone(), c));
        let want = hat_seminorm_oracle(op.mesh.node(dof)[0], h, 0.5);
        assert!(((got - want) / want).abs() < 1e-4, "dof {dof}: {got} vs {want}");
    }
}

#[test]
fn seminorm_scales_with_the_domain() {
    let c: f64 = 2.0;
    for (base, small) in [
        (MeshConfig::interval(-1.0, 1.0, 24, 0.3), MeshConfig::interval(-1.0 / c, 1.0 / c, 24, 0.3)),
        (MeshConfig::square(-1.0, 1.0, 8, 0.4), MeshConfig::square(-1.0 / c, 1.0 / c, 8, 0.4)),
    ] {
        let (op, op_c) = (assemble(&base).unwrap(), assemble(&small).unwrap());
        let f = |x: [f64; 2]| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * (1.0 + 0.3 * x[0]);
        let u = op.mesh.interpolate(f);
        // u_c(x) = u(cx) has the same nodal values on the shrunken grid
        let u_c = DiscreteFunction::new(op_c.mesh.clone(), u.coeffs.clone());
        let n = base.dim as f64;
        let want = c.powf(2.0 * base.s - n) * op.gagliardo_seminorm_sq(&u);
        let got = op_c.gagliardo_seminorm_sq(&u_c);
        assert!(((got - want) / want).abs() < 1e-3, "dim {}: {got} vs {want}", base.dim);
    }
}

#[test]
fn stiffness_is_symmetric_and_consistent_with_the_seminorm() {
    let op = assemble(&MeshConfig::square(-1.0, 1.0, 8, 0.3)).unwrap();
    let k = op.stiffness().unwrap();
    let scale = k.amax();
    assert!((k - k.transpose()).amax() <= 1e-12 * scale);
    let u = op.mesh.interpolate(|x| (x[0] + 0.2).sin() * (1.0 - x[1] * x[1]));
    let ku: f64 = op.apply_k(u.coeffs.as_slice()).iter().zip(u.coeffs.iter()).map(|(a, b)| a * b).sum();
    let semi = op.gagliardo_seminorm_sq(&u);
    assert!(((ku - semi) / semi).abs() < 1e-12, "{ku} vs {semi}");
}

#[test]
fn rayleigh_quotient_converges_under_refinement() {
    let q = |n: usize| {
        let op = assemble(&MeshConfig::interval(-1.0, 1.0, n, 0.5)).unwrap();
        let u = op.mesh.interpolate(|x| (1.0 - x[0] * x[0]) * (1.0 + 0.5 * x[0]));
        let c = u.coeffs.as_slice();
        op.gagliardo_seminorm_sq(&u) / op.mass_inner(c, c)
    };
    let (q32, q64, q128) = (q(32), q(64), q(128));
    assert!((q32 - q64).abs() > (q64 - q128).abs(), "{q32} {q64} {q128}");
}

#[test]
fn grids_have_the_expected_interior_nodes() {
    let m = build_mesh(&MeshConfig::square(-1.0, 1.0, 8, 0.3)).unwrap();
    assert_eq!(m.n_dofs(), 49);
    let m = build_mesh(&MeshConfig::interval(-1.0, 1.0, 4, 0.3)).unwrap();
    let xs: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
    assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
    assert!(build_mesh(&MeshConfig::interval(-1.0, 1.0, 3, 0.3)).is_err());
}

#[test]
fn zero_has_zero_seminorm() {
    let op = assemble(&MeshConfig::interval(-1.0, 1.0, 16, 0.7)).unwrap();
    assert_eq!(op.gagliardo_seminorm_sq(&DiscreteFunction::zeros(op.mesh.clone())), 0.0);
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_dominates_first_eigenvalue(c in coeffs(31), s in 0.15f64..0.85) {
        let op = assemble(&MeshConfig::interval(-1.0, 1.0, 32, s)).unwrap();
        let lam1 = eigensolve(&op, 1).unwrap().lambda(1);
        let u = DiscreteFunction::new(op.mesh.clone(), DVector::from_vec(c));
        let m = op.mass_inner(u.coeffs.as_slice(), u.coeffs.as_slice());
        prop_assert!(op.gagliardo_seminorm_sq(&u) >= lam1 * m * (1.0 - 1e-12));
    }

    #[test]
    fn seminorm_is_two_homogeneous(c in coeffs(31), t in -4.0f64..4.0, k in -3i32..4) {
        let op = assemble(&MeshConfig::interval(-1.0, 1.0, 32, 0.35)).unwrap();
        let mesh = Arc::clone(&op.mesh);
        let u = DiscreteFunction::new(mesh, DVector::from_vec(c));
        let base = op.gagliardo_seminorm_sq(&u);
        let scaled = op.gagliardo_seminorm_sq(&u.scaled(t));
        prop_assert!((scaled - t * t * base).abs() <= 1e-12 * t * t * base);
        // powers of two scale without rounding
        let p = 2f64.powi(k);
        prop_assert_eq!(op.gagliardo_seminorm_sq(&u.scaled(p)), p * p * base);
    }
}
