//! Generalized eigenproblem K φ = λ M φ and the splitting N_l ⊕ M_l.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{DiscreteOperator, DENSE_LIMIT};

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
/// Above this size the dense solver is replaced by inverse iteration.
pub const DENSE_EIG_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Level {
    pub lambda: f64,
    /// First column of the level's block in `vectors`.
    pub start: usize,
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalue of each computed vector, ascending.
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// Distinct eigenvalues after clustering.
    pub levels: Vec<Level>,
    pub cluster_tol: f64,
    /// True when every eigenpair of the discrete problem was computed.
    pub complete: bool,
    pub requested: usize,
}

impl EigenDecomposition {
    /// λ_l, 1-based.
    pub fn lambda(&self, l: usize) -> f64 {
        self.levels[l - 1].lambda
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// dim N_l, with N_0 = {0}.
    pub fn dim_n(&self, l: usize) -> usize {
        self.levels[..l].iter().map(|lv| lv.multiplicity).sum()
    }

    pub fn reported_levels(&self) -> &[Level] {
        &self.levels[..self.requested.min(self.levels.len())]
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

fn cluster(values: &[f64], tol: f64) -> Vec<Level> {
    let mut levels: Vec<Level> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match levels.last_mut() {
            Some(last) if (v - values[k - 1]).abs() <= tol * v.abs() => last.multiplicity += 1,
            _ => levels.push(Level { lambda: v, start: k, multiplicity: 1 }),
        }
    }
    // report the mean of each cluster
    for lv in &mut levels {
        lv.lambda = values[lv.start..lv.start + lv.multiplicity].iter().sum::<f64>() / lv.multiplicity as f64;
    }
    levels
}

fn residuals(op: &DiscreteOperator, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    (0..values.len())
        .map(|k| {
            let v = vectors.column(k);
            let kv = DVector::from_vec(op.apply_k(v.as_slice()));
            let mv = DVector::from_vec(op.apply_m(v.as_slice()));
            (&kv - &mv * values[k]).norm() / (kv.norm() + values[k].abs() * mv.norm())
        })
        .collect()
}

/// First `count` distinct eigenvalues of (K, M) with eigenspaces. Dense
/// systems return every eigenpair; larger ones fall back to block inverse
/// iteration for the requested levels.
pub fn eigensolve(op: &DiscreteOperator, count: usize) -> Result<EigenDecomposition> {
    eigensolve_with(op, count, DEFAULT_CLUSTER_TOL, op.n() > DENSE_EIG_LIMIT.min(DENSE_LIMIT))
}

pub fn eigensolve_with(op: &DiscreteOperator, count: usize, cluster_tol: f64, iterative: bool) -> Result<EigenDecomposition> {
    let n = op.n();
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!("eigenvalue count {count} not in 1..={n}")));
    }
    let (values, vectors, complete) = if iterative { inverse_iteration(op, count)? } else { dense(op)? };
    let residuals = residuals(op, &values, &vectors);
    let mut levels = cluster(&values, cluster_tol);
    if !complete {
        // the last computed cluster may be cut short
        if levels.len() <= count {
            return Err(Error::EigenNonConvergence { iterations: 0 });
        }
        levels.truncate(count + 1);
    }
    Ok(EigenDecomposition { values, vectors, residuals, levels, cluster_tol, complete, requested: count })
}

/// Ascending eigenpairs of a symmetric matrix. The QR eigensolver can return
/// eigenvalues paired with the wrong columns and leaves residuals near
/// 1e-10‖C‖, so its vectors are re-projected, the projection is cleaned by
/// Jacobi rotations, and values are read off the diagonal.
pub(crate) fn symmetric_eigen_sorted(c: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = c.nrows();
    let mut y = c.clone().symmetric_eigen().eigenvectors;
    let mut d = y.transpose() * (&c * &y);
    d = (&d + d.transpose()) * 0.5;
    let tiny = f64::EPSILON * c.norm() * 1e-2;
    for _ in 0..10 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = d[(p, q)];
                if apq.abs() <= tiny {
                    continue;
                }
                rotated = true;
                let theta = (d[(q, q)] - d[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (dkp, dkq) = (d[(k, p)], d[(k, q)]);
                    d[(k, p)] = cs * dkp - sn * dkq;
                    d[(k, q)] = sn * dkp + cs * dkq;
                }
                for k in 0..n {
                    let (dpk, dqk) = (d[(p, k)], d[(q, k)]);
                    d[(p, k)] = cs * dpk - sn * dqk;
                    d[(q, k)] = sn * dpk + cs * dqk;
                }
                for k in 0..n {
                    let (ykp, ykq) = (y[(k, p)], y[(k, q)]);
                    y[(k, p)] = cs * ykp - sn * ykq;
                    y[(k, q)] = sn * ykp + cs * ykq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[(a, a)].total_cmp(&d[(b, b)]));
    let values = order.iter().map(|&i| d[(i, i)]).collect();
    let y = DMatrix::from_fn(n, n, |r, j| y[(r, order[j])]);
    (values, y)
}

fn dense(op: &DiscreteOperator) -> Result<(Vec<f64>, DMatrix<f64>, bool)> {
    let k = op.stiffness()?;
    let m = op.mass()?;
    let chol = m.clone().cholesky().ok_or_else(|| Error::InvalidInput("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::EigenNonConvergence { iterations: 0 })?;
    let mut c = &linv * k * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let (values, y) = symmetric_eigen_sorted(c);
    let mut phi = linv.transpose() * y;
    // fix signs so that the largest component is positive
    for j in 0..phi.ncols() {
        let col = phi.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            phi.column_mut(j).neg_mut();
        }
    }
    Ok((values, phi, true))
}

fn conjugate_gradient(op: &DiscreteOperator, b: &DVector<f64>, x0: &DVector<f64>, tol: f64, max_iter: usize) -> DVector<f64> {
    let mut x = x0.clone();
    let mut r = b - DVector::from_vec(op.apply_k(x.as_slice()));
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let stop = tol * tol * b.dot(b);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let kp = DVector::from_vec(op.apply_k(p.as_slice()));
        let alpha = rr / p.dot(&kp);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &kp, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    x
}

fn inverse_iteration(op: &DiscreteOperator, count: usize) -> Result<(Vec<f64>, DMatrix<f64>, bool)> {
    let n = op.n();
    let block = (2 * count + 6).min(n);
    let watch = (count + 3).min(block);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);
    let mut values = vec![0.0; block];
    let max_iter = 500;
    for it in 0..max_iter {
        // Rayleigh-Ritz on span(x)
        let kx = DMatrix::from_columns(&(0..block).map(|j| DVector::from_vec(op.apply_k(x.column(j).as_slice()))).collect::<Vec<_>>());
        let mx = DMatrix::from_columns(&(0..block).map(|j| DVector::from_vec(op.apply_m(x.column(j).as_slice()))).collect::<Vec<_>>());
        let kr = x.transpose() * &kx;
        let mr = x.transpose() * &mx;
        let ch = mr.clone().cholesky().ok_or(Error::EigenNonConvergence { iterations: it })?;
        let li = ch.l().try_inverse().ok_or(Error::EigenNonConvergence { iterations: it })?;
        let c = &li * kr * li.transpose();
        let (new, yq) = symmetric_eigen_sorted((&c + c.transpose()) * 0.5);
        let q = li.transpose() * yq;
        x = &x * &q;
        let (kx, mx) = (kx * &q, mx * &q);
        // stop once the watched pairs have small relative residuals
        let done = (0..watch).all(|k| {
            let r = (kx.column(k) - mx.column(k) * new[k]).norm();
            r <= 1e-11 * (kx.column(k).norm() + new[k].abs() * mx.column(k).norm())
        });
        values = new;
        if done && it > 2 {
            let mut vecs = x.columns(0, watch).into_owned();
            for j in 0..watch {
                let col = vecs.column(j);
                let imax = col.iamax();
                if col[imax] < 0.0 {
                    vecs.column_mut(j).neg_mut();
                }
            }
            return Ok((values[..watch].to_vec(), vecs, false));
        }
        // x ← K⁻¹ M x
        let cols: Vec<DVector<f64>> = (0..block)
            .map(|j| {
                let rhs = DVector::from_vec(op.apply_m(x.column(j).as_slice()));
                let guess = x.column(j) / values[j].max(1e-300);
                conjugate_gradient(op, &rhs, &guess, 1e-13, 4 * n)
            })
            .collect();
        x = DMatrix::from_columns(&cols);
    }
    Err(Error::EigenNonConvergence { iterations: max_iter })
}

/// Splitting at level l: N_l spanned by the first dim N_l eigenvectors,
/// M_l its complement in both inner products.
#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    pub level: usize,
    pub basis: DMatrix<f64>,
    mass_basis: DMatrix<f64>,
}

pub fn split(dec: &EigenDecomposition, op: &DiscreteOperator, l: usize) -> Result<SubspaceSplit> {
    if l < 1 || l + 1 > dec.n_levels() {
        return Err(Error::LevelOutOfRange { level: l, available: dec.n_levels() });
    }
    let d = dec.dim_n(l);
    let basis = dec.vectors.columns(0, d).into_owned();
    let mass_basis = DMatrix::from_columns(&(0..d).map(|j| DVector::from_vec(op.apply_m(basis.column(j).as_slice()))).collect::<Vec<_>>());
    Ok(SubspaceSplit { level: l, basis, mass_basis })
}

impl SubspaceSplit {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project_n(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.mass_basis.transpose() * u)
    }

    pub fn project_m(&self, u: &DVector<f64>) -> DVector<f64> {
        u - self.project_n(u)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SignReport {
    pub samples: usize,
    /// Indices of samples with a vanishing positive or negative part.
    pub violations: Vec<usize>,
    /// min over samples of min(|w⁺|², |w⁻|²)/|w|².
    pub min_part_ratio: f64,
    pub holds: bool,
}

/// Samples M_1 ∩ S on a deterministic net and with seeded random draws and
/// reports elements that fail to change sign.
pub fn check_sign_hypothesis(dec: &EigenDecomposition, op: &DiscreteOperator, seed: u64, random_draws: usize) -> SignReport {
    let first = dec.dim_n(1);
    let avail = dec.vectors.ncols();
    let mut samples: Vec<DVector<f64>> = Vec::new();
    let net = (avail - first).min(8);
    for j in 0..net {
        let v = dec.vector(first + j);
        samples.push(v.clone());
        samples.push(-&v);
        for k in (j + 1)..net.min(5) {
            let w = dec.vector(first + k);
            samples.push(&v + &w);
            samples.push(&v - &w);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_draws {
        let mut w = DVector::zeros(op.n());
        for k in first..avail {
            let g: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            w.axpy(g / dec.values[k].sqrt(), &dec.vectors.column(k), 1.0);
        }
        samples.push(w);
    }
    let mut violations = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for (i, w) in samples.iter().enumerate() {
        let nrm = op.bilinear(w.as_slice(), w.as_slice()).sqrt();
        let w = w / nrm;
        let (pos, neg) = (w.iter().any(|&x| x > 0.0), w.iter().any(|&x| x < 0.0));
        if !(pos && neg) {
            violations.push(i);
        }
        let q = op.sampler.eval(w.as_slice());
        let pp: Vec<f64> = q.iter().map(|x| x.max(0.0).powi(2)).collect();
        let nn: Vec<f64> = q.iter().map(|x| x.min(0.0).powi(2)).collect();
        let tot: f64 = op.sampler.integral(&q.iter().map(|x| x * x).collect::<Vec<_>>());
        let r = op.sampler.integral(&pp).min(op.sampler.integral(&nn)) / tot;
        min_ratio = min_ratio.min(r);
    }
    SignReport { samples: samples.len(), holds: violations.is_empty(), violations, min_part_ratio: min_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshConfig;
    use crate::operator::assemble;

    fn line(n: usize, s: f64) -> DiscreteOperator {
        assemble(&MeshConfig::interval(-1.0, 1.0, n, s)).unwrap()
    }

    // plain inverse power iteration on the dense pencil
    fn power_lambda1(op: &DiscreteOperator) -> f64 {
        let k = op.stiffness().unwrap().clone();
        let m = op.mass().unwrap();
        let lu = k.clone().lu();
        let mut x = DVector::from_element(op.n(), 1.0);
        let mut lam = 0.0;
        for _ in 0..400 {
            x = lu.solve(&(m * &x)).unwrap();
            x /= x.norm();
            lam = x.dot(&(&k * &x)) / x.dot(&(m * &x));
        }
        lam
    }

    #[test]
    fn dense_pairs_are_accurate_and_orthonormal() {
        let op = line(32, 0.4);
        let dec = eigensolve(&op, 6).unwrap();
        assert!(dec.complete);
        assert!(dec.residuals.iter().all(|r| *r <= 1e-10), "{:?}", dec.residuals);
        let m = op.mass().unwrap();
        let g = dec.vectors.transpose() * m * &dec.vectors;
        let err = (g - DMatrix::identity(op.n(), op.n())).amax();
        assert!(err < 1e-10, "{err}");
        assert!(dec.values.windows(2).all(|w| w[0] <= w[1]));
        let l1 = power_lambda1(&op);
        assert!((dec.lambda(1) - l1).abs() <= 1e-8 * l1);
    }

    #[test]
    fn iterative_matches_dense() {
        let op = line(48, 0.3);
        let d = eigensolve_with(&op, 4, DEFAULT_CLUSTER_TOL, false).unwrap();
        let it = eigensolve_with(&op, 4, DEFAULT_CLUSTER_TOL, true).unwrap();
        assert!(!it.complete);
        for l in 1..=4 {
            assert!((d.lambda(l) - it.lambda(l)).abs() <= 1e-9 * d.lambda(l), "level {l}");
        }
        assert!(it.residuals.iter().all(|r| *r <= 1e-9));
    }

    #[test]
    fn rayleigh_bounds_and_split() {
        let op = line(32, 0.4);
        let dec = eigensolve(&op, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in 1..4 {
            let sp = split(&dec, &op, l).unwrap();
            for _ in 0..10 {
                let u = DVector::from_fn(op.n(), |_, _| rng.gen::<f64>() - 0.5);
                let (n, m) = (sp.project_n(&u), sp.project_m(&u));
                assert!((&n + &m - &u).norm() <= 1e-12 * u.norm());
                let (ns, ms) = (n.as_slice(), m.as_slice());
                assert!(op.mass_inner(ns, ms).abs() <= 1e-10 * u.norm_squared());
                assert!(op.bilinear(ns, ms).abs() <= 1e-8 * op.bilinear(u.as_slice(), u.as_slice()));
                let rq = |v: &[f64]| op.bilinear(v, v) / op.mass_inner(v, v);
                assert!(rq(ns) <= dec.lambda(l) * (1.0 + 1e-10));
                assert!(rq(ms) >= dec.lambda(l + 1) * (1.0 - 1e-10));
            }
        }
        assert!(split(&dec, &op, 0).is_err());
    }

    #[test]
    fn square_has_double_second_level() {
        let op = assemble(&MeshConfig::square(-1.0, 1.0, 8, 0.4)).unwrap();
        let dec = eigensolve(&op, 3).unwrap();
        assert_eq!(dec.levels[0].multiplicity, 1);
        assert_eq!(dec.levels[1].multiplicity, 2);
        assert_eq!(dec.dim_n(2), 3);
    }

    #[test]
    fn sign_hypothesis_is_deterministic() {
        let op = line(32, 0.4);
        let dec = eigensolve(&op, 4).unwrap();
        let a = check_sign_hypothesis(&dec, &op, 9, 50);
        let b = check_sign_hypothesis(&dec, &op, 9, 50);
        assert!(a.holds);
        assert_eq!(a.violations, b.violations);
        assert_eq!(a.min_part_ratio, b.min_part_ratio);
        assert!(a.min_part_ratio > 0.0);
    }
}
