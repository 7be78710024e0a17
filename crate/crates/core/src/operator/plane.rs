//! Stiffness of Q1 hats on a uniform square grid.
//!
//! For an integer offset d (unit spacing) the form of two hats is
//!
//!   κ(d) = ∫ |z|^{-2-2s} (2A(d) − A(d+z) − A(d−z)) dz,
//!
//! with A(z) = a(z₁)a(z₂) and a the cubic B-spline (autocorrelation of the
//! unit hat). Because d is integer, the bracket is one bicubic polynomial
//! on every unit square of z. The four squares at the origin are integrated
//! in polar coordinates, where each ray meets a polynomial vanishing to
//! second order and the radial integral is done in closed form. Other
//! squares use tensor Gauss with subdivision near the origin, and outside a
//! box containing both supports the bracket is the constant 2A(d), whose
//! kernel integral is known. Offsets far apart use −2∫A(z)|d−z|^{-2-2s}dz.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_on};

const FAR_FROM: i64 = 4;

fn bspline(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        2.0 / 3.0 - t * t + 0.5 * t * t * t
    } else if t < 2.0 {
        let r = 2.0 - t;
        r * r * r / 6.0
    } else {
        0.0
    }
}

fn autocorr(z: [f64; 2]) -> f64 {
    bspline(z[0]) * bspline(z[1])
}

struct Rules {
    ang: Vec<(f64, f64)>,
    radial_t: Vec<f64>,
    square: Vec<(f64, f64)>,
    cos_moment: f64,
}

impl Rules {
    fn new(s: f64, angular: usize) -> Self {
        let q = std::f64::consts::FRAC_PI_4;
        let mut ang = gauss_on(angular, 0.0, q);
        ang.extend(gauss_on(angular, q, 2.0 * q));
        let (x, _) = gauss_legendre(5);
        let radial_t = x.iter().map(|xi| 0.5 * (xi + 1.0)).collect();
        let cos_moment = gauss_on(48, 0.0, q).iter().map(|(p, w)| w * p.cos().powf(2.0 * s)).sum();
        Self { ang, radial_t, square: gauss_on(8, 0.0, 1.0), cos_moment }
    }
}

fn bracket(d: [f64; 2], z: [f64; 2]) -> f64 {
    2.0 * autocorr(d) - autocorr([d[0] + z[0], d[1] + z[1]]) - autocorr([d[0] - z[0], d[1] - z[1]])
}

/// ∫ over the quadrant square at the origin with signs (sx, sy).
fn origin_square(d: [f64; 2], sx: f64, sy: f64, s: f64, rules: &Rules) -> f64 {
    // basis t^k, k = 2..6, fitted from 5 samples along each ray
    let ts = &rules.radial_t;
    let mut vander = nalgebra::DMatrix::<f64>::zeros(5, 5);
    for (i, &t) in ts.iter().enumerate() {
        for k in 0..5 {
            vander[(i, k)] = t.powi(k as i32 + 2);
        }
    }
    let lu = vander.lu();
    let mut total = 0.0;
    for &(phi, w) in &rules.ang {
        let (c, sn) = (phi.cos(), phi.sin());
        let rmax = 1.0 / c.max(sn);
        let rhs = nalgebra::DVector::from_iterator(
            5,
            ts.iter().map(|&t| bracket(d, [sx * t * rmax * c, sy * t * rmax * sn])),
        );
        let coef = lu.solve(&rhs).expect("Vandermonde system is nonsingular");
        let radial: f64 = (0..5).map(|k| coef[k] / (k as f64 + 2.0 - 2.0 * s)).sum();
        total += w * radial * rmax.powf(-2.0 * s);
    }
    total
}

fn regular_square(d: [f64; 2], i: i64, j: i64, s: f64, rules: &Rules) -> f64 {
    let (xi, yj) = (i as f64, j as f64);
    let dist = {
        let cx = if i >= 0 { xi } else { xi + 1.0 };
        let cy = if j >= 0 { yj } else { yj + 1.0 };
        (cx * cx + cy * cy).sqrt()
    };
    let sub = if dist < 1.5 {
        4
    } else if dist < 3.0 {
        2
    } else {
        1
    };
    let hs = 1.0 / sub as f64;
    let mut total = 0.0;
    for a in 0..sub {
        for b in 0..sub {
            for &(u, wu) in &rules.square {
                for &(v, wv) in &rules.square {
                    let z = [xi + (a as f64 + u) * hs, yj + (b as f64 + v) * hs];
                    let r2 = z[0] * z[0] + z[1] * z[1];
                    total += wu * wv * hs * hs * bracket(d, z) * r2.powf(-1.0 - s);
                }
            }
        }
    }
    total
}

fn near_entry(p: i64, q: i64, s: f64, rules: &Rules) -> f64 {
    let d = [p as f64, q as f64];
    let r = p.abs().max(q.abs()) + 2;
    let mut total = 0.0;
    for i in -r..r {
        for j in -r..r {
            if (i == 0 || i == -1) && (j == 0 || j == -1) {
                let sx = if i == 0 { 1.0 } else { -1.0 };
                let sy = if j == 0 { 1.0 } else { -1.0 };
                total += origin_square(d, sx, sy, s, rules);
            } else {
                total += regular_square(d, i, j, s, rules);
            }
        }
    }
    // outside the box [−r, r]² the bracket is 2A(d)
    let rf = r as f64;
    total + 2.0 * autocorr(d) * 8.0 / (2.0 * s) * rf.powf(-2.0 * s) * rules.cos_moment
}

fn far_entry(p: i64, q: i64, s: f64, rules: &Rules) -> f64 {
    let d = [p as f64, q as f64];
    let mut total = 0.0;
    for i in -2..2 {
        for j in -2..2 {
            for &(u, wu) in &rules.square {
                for &(v, wv) in &rules.square {
                    let z = [i as f64 + u, j as f64 + v];
                    let r2 = (d[0] - z[0]).powi(2) + (d[1] - z[1]).powi(2);
                    total += wu * wv * autocorr(z) * r2.powf(-1.0 - s);
                }
            }
        }
    }
    -2.0 * total
}

/// Unit-spacing entry computed with the near-field route regardless of distance.
pub fn near_unit_entry(p: i64, q: i64, s: f64) -> f64 {
    near_entry(p, q, s, &Rules::new(s, 24))
}

/// Unit-spacing entry computed with the far-field route.
pub fn far_unit_entry(p: i64, q: i64, s: f64) -> f64 {
    far_entry(p, q, s, &Rules::new(s, 24))
}

/// Generator κ(p, q) for 0 ≤ p < nx, 0 ≤ q < ny at spacing h, stored
/// row-major in q. Near entries are computed with two angular orders and
/// rejected when they disagree by more than `tol` relative to the diagonal.
pub fn generator(nx: usize, ny: usize, h: f64, s: f64, tol: f64) -> Result<Vec<f64>> {
    let coarse = Rules::new(s, 16);
    let fine = Rules::new(s, 24);
    let mut unit = vec![0.0; nx * ny];
    let mut worst = (0.0, (0usize, 0usize));
    let mut scale = 0.0f64;
    for q in 0..ny {
        for p in 0..nx {
            if q > p && q < nx && p < ny {
                unit[q * nx + p] = unit[p * nx + q];
                continue;
            }
            let (pi, qi) = (p as i64, q as i64);
            let v = if pi.max(qi) >= FAR_FROM {
                far_entry(pi, qi, s, &fine)
            } else {
                let a = near_entry(pi, qi, s, &fine);
                let b = near_entry(pi, qi, s, &coarse);
                if (a - b).abs() > worst.0 {
                    worst = ((a - b).abs(), (p, q));
                }
                a
            };
            scale = scale.max(v.abs());
            unit[q * nx + p] = v;
        }
    }
    let est = worst.0 / scale;
    if est > tol {
        return Err(Error::QuadratureBudget { offset: worst.1, estimate: est });
    }
    let factor = h.powf(2.0 - 2.0 * s);
    Ok(unit.into_iter().map(|v| v * factor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_and_far_routes_agree() {
        for &s in &[0.25, 0.6] {
            for &(p, q) in &[(4, 0), (4, 3), (5, 5)] {
                let a = near_unit_entry(p, q, s);
                let b = far_unit_entry(p, q, s);
                assert!(((a - b) / b).abs() < 1e-8, "s={s} ({p},{q}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn symmetric_in_offsets() {
        let s = 0.4;
        let a = near_unit_entry(1, 2, s);
        let b = near_unit_entry(2, 1, s);
        let c = near_unit_entry(-1, 2, s);
        assert!((a - b).abs() < 1e-12 * a.abs() && (a - c).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn diagonal_positive_offdiagonal_negative() {
        let s = 0.3;
        assert!(near_unit_entry(0, 0, s) > 0.0);
        assert!(near_unit_entry(2, 0, s) < 0.0);
        assert!(far_unit_entry(6, 1, s) < 0.0);
    }
}
