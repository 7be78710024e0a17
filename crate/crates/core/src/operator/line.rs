//! Exact stiffness of P1 hats on a uniform line grid.
//!
//! With extension by zero the Gagliardo form of two hats depends only on
//! their offset m. Integrating |x−y|^{-1-2s} against the hat autocorrelation
//! twice by parts gives a fourth difference of |m|^{3−2s}:
//!
//!   K_m = h^{1−2s} / (s(1−2s)(2−2s)(3−2s)) · Σ_d w_d |m+d|^{3−2s},
//!   w = (1, −4, 6, −4, 1).
//!
//! The quadratic part of |x|^{3-2s} is annihilated by the difference, so
//! g(x) = x²(x^{1−2s} − 1)/(1−2s) is used instead; it has the limit x² ln x
//! at s = 1/2. For large m the difference cancels catastrophically and a
//! binomial expansion in 1/m is summed instead.

const W: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
const SERIES_FROM: usize = 8;

fn g(x: f64, s: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let e = 1.0 - 2.0 * s;
    if e.abs() < 1e-12 {
        x * x * x.ln()
    } else {
        x * x * (e * x.ln()).exp_m1() / e
    }
}

fn direct(m: usize, s: f64) -> f64 {
    let sum: f64 = (0..5).map(|k| W[k] * g((m as f64 + k as f64 - 2.0).abs(), s)).sum();
    sum / (s * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
}

fn series(m: usize, s: f64) -> f64 {
    let p = 3.0 - 2.0 * s;
    let mf = m as f64;
    let inv2 = 1.0 / (mf * mf);
    // coefficient (p−3)(p−4)…(p−k+1)/k! for even k ≥ 4, times Σ_d w_d d^k = 2(2^k − 4)
    let mut coef = (p - 3.0) / 24.0;
    let mut mpow = inv2 * inv2;
    let mut sum = 0.0;
    let mut k = 4usize;
    loop {
        let moment = 2.0 * (2f64.powi(k as i32) - 4.0);
        let term = coef * moment * mpow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || k > 120 {
            break;
        }
        let kf = k as f64;
        coef *= (p - kf) * (p - kf - 1.0) / ((kf + 1.0) * (kf + 2.0));
        mpow *= inv2;
        k += 2;
    }
    mf.powf(p) * sum / s
}

/// Generator value at unit spacing; scale by h^{1−2s}.
pub fn unit_entry(m: usize, s: f64) -> f64 {
    if m >= SERIES_FROM {
        series(m, s)
    } else {
        direct(m, s)
    }
}

/// Toeplitz generator K_0..K_{n-1} for spacing h.
pub fn generator(n: usize, h: f64, s: f64) -> Vec<f64> {
    let scale = h.powf(1.0 - 2.0 * s);
    (0..n).map(|m| scale * unit_entry(m, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_at_half_is_eight_ln_two() {
        assert!((unit_entry(0, 0.5) - 8.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn series_and_direct_agree_where_both_are_accurate() {
        for &s in &[0.1, 0.25, 0.4, 0.5, 0.75, 0.9] {
            for m in 5..10 {
                let (d, r) = (direct(m, s), series(m, s));
                assert!(((d - r) / r).abs() < 1e-9, "s={s} m={m}: {d} vs {r}");
            }
        }
    }

    #[test]
    fn far_entries_follow_the_kernel() {
        for &s in &[0.2, 0.4, 0.7] {
            let m = 1000usize;
            let lead = -2.0 * (m as f64).powf(-1.0 - 2.0 * s);
            assert!(((unit_entry(m, s) - lead) / lead).abs() < 1e-5);
        }
    }

    #[test]
    fn lattice_row_sum_matches_the_kernel_tail() {
        // the constant function has zero seminorm, so Σ_m K_m over all
        // integers vanishes and a truncated row sum equals minus the tail
        let s = 0.3;
        let big = 20000usize;
        let mut total = unit_entry(0, s);
        for m in 1..big {
            total += 2.0 * unit_entry(m, s);
        }
        let bf = big as f64 - 0.5;
        let tail = 4.0 * bf.powf(-2.0 * s) / (2.0 * s);
        assert!(((total - tail) / tail).abs() < 1e-3, "{total} vs {tail}");
    }
}
