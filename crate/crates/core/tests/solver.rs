//! The linking critical point against a direct maximization of the energy
//! over the cone {v + σe : v ∈ N_2, σ ≥ 0}.

use fucik_lab::energy::{critical_power, energy_e, gradient_e, mass_dual_norm, BubbleParams};
use fucik_lab::fucik::FucikPoint;
use fucik_lab::mesh::{DiscreteFunction, MeshConfig};
use fucik_lab::operator::{assemble, DiscreteOperator};
use fucik_lab::solver::{solve_linking, CaseRequest, LinkingCase, LinkingProblem, SolverOptions};
use fucik_lab::spectrum::eigensolve;
use nalgebra::DVector;

/// sup over t > 0 of ℰ(tw) = ½t²A − tᵖB/p, with A and B read off ℰ(w)
/// and ℰ(2w); zero when A ≤ 0.
fn ray_max(op: &DiscreteOperator, w: &DVector<f64>, a: f64, b: f64, p: f64) -> f64 {
    let f = |t: f64| energy_e(op, &DiscreteFunction::new(op.mesh.clone(), w * t), a, b);
    let (e1, e2) = (f(1.0), f(2.0));
    // e1 = A/2 − B/p, e2 = 2A − 2ᵖB/p
    let bp = (4.0 * e1 - e2) / (2f64.powf(p) - 4.0);
    let aa = 2.0 * (e1 + bp);
    if aa <= 0.0 {
        return 0.0;
    }
    let bb = bp * p;
    (0.5 - 1.0 / p) * aa.powf(p / (p - 2.0)) / bb.powf(2.0 / (p - 2.0))
}

/// Maximizes `g` over a box by a grid followed by compass search.
fn maximize(g: impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], grid: usize) -> f64 {
    let d = lo.len();
    let mut best = (f64::NEG_INFINITY, vec![0.0; d]);
    let total = grid.pow(d as u32);
    for k in 0..total {
        let mut idx = k;
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let i = idx % grid;
                idx /= grid;
                lo[j] + (hi[j] - lo[j]) * (i as f64 + 0.5) / grid as f64
            })
            .collect();
        let v = g(&x);
        if v > best.0 {
            best = (v, x);
        }
    }
    let mut step: Vec<f64> = (0..d).map(|j| (hi[j] - lo[j]) / grid as f64).collect();
    while step.iter().any(|&s| s > 1e-10) {
        let mut moved = false;
        for j in 0..d {
            for sgn in [1.0, -1.0] {
                let mut x = best.1.clone();
                x[j] = (x[j] + sgn * step[j]).clamp(lo[j], hi[j]);
                let v = g(&x);
                if v > best.0 {
                    best = (v, x);
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best.0
}

#[test]
fn solved_level_is_bracketed_by_a_direct_cone_maximum() {
    let op = assemble(&MeshConfig::interval(-1.0, 1.0, 64, 0.2)).unwrap();
    let dec = eigensolve(&op, 4).unwrap();
    let (l2, l3) = (dec.lambda(2), dec.lambda(3));
    let ab = l2 + 0.1 * (l3 - l2);
    let pt = FucikPoint::new(ab, ab, 2);
    let bp = BubbleParams::new(&op.mesh, 4.0 * op.mesh.h, 2.5, [0.0, 0.0], 2.5).unwrap();
    let prob = LinkingProblem::new(&op, &dec, pt, CaseRequest::Auto, bp).unwrap();
    assert_eq!(prob.case, LinkingCase::AboveMu);
    let r = solve_linking(&op, &prob, &SolverOptions::default()).unwrap();

    let p = critical_power(&op).unwrap();
    let (phi1, phi2) = (dec.vector(0), dec.vector(1));
    let e = prob.e.coeffs.clone();
    let e = &e / op.bilinear(e.as_slice(), e.as_slice()).sqrt();
    // directions cos φ (cos θ φ1 + sin θ φ2) + sin φ e with φ ∈ [0, π/2]
    let dir = |x: &[f64]| (x[1].cos() * (x[0].cos() * &phi1 + x[0].sin() * &phi2)) + x[1].sin() * &e;
    let cone = maximize(|x| ray_max(&op, &dir(x), ab, ab, p), &[0.0, 0.0], &[std::f64::consts::TAU, std::f64::consts::FRAC_PI_2], 48);
    // the plane through φ2 and e alone
    let plane = maximize(|x| ray_max(&op, &dir(&[std::f64::consts::FRAC_PI_2, x[0]]), ab, ab, p), &[0.0], &[std::f64::consts::PI], 400);

    assert!(plane > 0.0 && plane <= cone * (1.0 + 1e-9), "plane {plane}, cone {cone}");
    assert!(((r.sup_q - cone) / cone).abs() < 1e-6, "sup_Q {} vs direct {cone}", r.sup_q);
    assert!(r.inf_a <= r.level && r.level <= cone * (1.0 + 1e-9), "c {} not below {cone}", r.level);
    assert!(cone < r.c_star);

    // the residual is recomputed from the nodal gradient
    let g = gradient_e(&op, &r.u.coeffs, ab, ab);
    let res = mass_dual_norm(&op, &g);
    assert!(res < 1e-8 && (res - r.residual).abs() <= 1e-12, "{res} vs {}", r.residual);
}
