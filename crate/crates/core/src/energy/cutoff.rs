//! Smooth cutoffs ξ (1 on [0,1/4], 0 on [1/2,∞)) and η (0 on [0,3/4], 1 on
//! [1,∞)). The transition integrates a slope profile that ramps up with a
//! smoothstep, holds a plateau and ramps down again, so the cutoff is C² and
//! its derivative never exceeds the plateau value.

/// Plateau slope of both transitions; η must satisfy |η′| ≤ 5.
pub const PLATEAU_SLOPE: f64 = 4.9;

/// Rises from 0 at `lo` to 1 at `hi`.
#[derive(Debug, Clone, Copy)]
pub struct SlopeCutoff {
    lo: f64,
    len: f64,
    slope: f64,
    /// Length of each ramp.
    ramp: f64,
}

impl SlopeCutoff {
    pub fn new(lo: f64, hi: f64, slope: f64) -> Self {
        let len = hi - lo;
        let ramp = len - 1.0 / slope;
        assert!(ramp > 0.0 && 2.0 * ramp <= len, "slope {slope} incompatible with band [{lo}, {hi}]");
        Self { lo, len, slope, ramp }
    }

    fn profile(&self, x: f64) -> f64 {
        let d = self.ramp;
        let step = |y: f64| {
            let t = y / d;
            t * t * (3.0 - 2.0 * t)
        };
        if x <= 0.0 || x >= self.len {
            0.0
        } else if x < d {
            self.slope * step(x)
        } else if x > self.len - d {
            self.slope * step(self.len - x)
        } else {
            self.slope
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let d = self.ramp;
        let x = (t - self.lo).clamp(0.0, self.len);
        // ∫ of the smoothstep ramp over [0,y]
        let ramp = |y: f64| self.slope * (y.powi(3) / (d * d) - y.powi(4) / (2.0 * d.powi(3)));
        if x < d {
            ramp(x)
        } else if x <= self.len - d {
            self.slope * (0.5 * d + x - d)
        } else {
            1.0 - ramp(self.len - x)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.profile(t - self.lo)
    }
}

fn xi_band() -> SlopeCutoff {
    SlopeCutoff::new(0.25, 0.5, PLATEAU_SLOPE)
}

fn eta_band() -> SlopeCutoff {
    SlopeCutoff::new(0.75, 1.0, PLATEAU_SLOPE)
}

pub fn xi(t: f64) -> f64 {
    1.0 - xi_band().value(t)
}

pub fn xi_prime(t: f64) -> f64 {
    -xi_band().derivative(t)
}

pub fn eta(t: f64) -> f64 {
    eta_band().value(t)
}

pub fn eta_prime(t: f64) -> f64 {
    eta_band().derivative(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_hold() {
        for t in [0.0, 0.1, 0.25] {
            assert_eq!(xi(t), 1.0);
            assert_eq!(eta(t + 0.5), 0.0);
        }
        for t in [0.5, 0.7, 3.0] {
            assert!(xi(t).abs() < 1e-15);
            assert!((eta(t + 0.5) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_is_bounded_and_consistent() {
        let mut max = 0.0f64;
        for k in 0..=10_000 {
            let t = 0.7 + 0.35 * k as f64 / 10_000.0;
            max = max.max(eta_prime(t).abs());
            let h = 1e-6;
            let fd = (eta(t + h) - eta(t - h)) / (2.0 * h);
            assert!((fd - eta_prime(t)).abs() < 1e-5, "t={t}");
            assert!((0.0..=1.0).contains(&eta(t)));
        }
        assert!(max <= 5.0);
        assert!((max - PLATEAU_SLOPE).abs() < 1e-12);
        // monotone and continuous across the ramp joints
        let vals: Vec<f64> = (0..=1000).map(|k| xi(0.2 + 0.35 * k as f64 / 1000.0)).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }
}
