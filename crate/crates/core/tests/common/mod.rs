//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Independent FAB oracle: `w` by dense grid then bisection on the
/// first-order condition, quantiles from statrs.
pub struct FabOracle {
    phi: f64,
    m_sd: f64,
    sigma: f64,
    alpha: f64,
    normal: Normal,
}

impl FabOracle {
    pub fn new(phi: f64, tau2: f64, sigma: f64, alpha: f64) -> Self {
        Self {
            phi,
            m_sd: (tau2 + sigma * sigma).sqrt(),
            sigma,
            alpha,
            normal: std_normal(),
        }
    }

    pub fn region(&self, mu: f64, w: f64) -> (f64, f64) {
        let lo = mu + self.sigma * self.normal.inverse_cdf(self.alpha * w);
        let hi = mu + self.sigma * self.normal.inverse_cdf(1.0 - self.alpha * (1.0 - w));
        (lo, hi)
    }

    pub fn prob(&self, mu: f64, w: f64) -> f64 {
        let (lo, hi) = self.region(mu, w);
        let m = Normal::new(self.phi, self.m_sd).unwrap();
        // Use the smaller tail so that remote regions keep precision.
        if lo > self.phi {
            m.sf(lo) - m.sf(hi)
        } else {
            m.cdf(hi) - m.cdf(lo)
        }
    }

    /// Sign of dP/dw: marginal density over sampling density at each end.
    fn foc(&self, mu: f64, w: f64) -> f64 {
        let (lo, hi) = self.region(mu, w);
        let ql = (lo - mu) / self.sigma;
        let qh = (hi - mu) / self.sigma;
        let lm = |x: f64| -0.5 * ((x - self.phi) / self.m_sd).powi(2);
        (lm(hi) + 0.5 * qh * qh) - (lm(lo) + 0.5 * ql * ql)
    }

    pub fn w(&self, mu: f64) -> f64 {
        let (a, b) = (1e-6, 1.0 - 1e-6);
        let n = 400;
        let node = |k: usize| a + (b - a) * k as f64 / n as f64;
        let (mut best, mut best_p) = (0, f64::INFINITY);
        for k in 0..=n {
            let p = self.prob(mu, node(k));
            if p < best_p {
                best_p = p;
                best = k;
            }
        }
        let (mut lo, mut hi) = (node(best.saturating_sub(1)), node((best + 1).min(n)));
        if self.foc(mu, lo) < 0.0 && self.foc(mu, hi) > 0.0 {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.foc(mu, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        } else {
            node(best)
        }
    }

    fn accepts(&self, z: f64, mu: f64) -> bool {
        let (lo, hi) = self.region(mu, self.w(mu));
        lo <= z && z <= hi
    }

    /// Convex hull of accepted means: coarse scan, then a fine scan at step
    /// `1e-4·σ` inside the cells containing the outermost transitions.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        let coarse = 0.01 * self.sigma;
        let fine = 1e-4 * self.sigma;
        let steps = (10.0 * self.sigma / coarse) as i64;
        let grid: Vec<f64> = (-steps..=steps).map(|k| z + coarse * k as f64).collect();
        let acc: Vec<bool> = grid.iter().map(|&mu| self.accepts(z, mu)).collect();
        let first = acc.iter().position(|&a| a).unwrap();
        let last = acc.iter().rposition(|&a| a).unwrap();
        let mut lower = grid[first];
        let mut mu = grid[first] - fine;
        while mu > grid[first] - coarse {
            if self.accepts(z, mu) {
                lower = mu;
            }
            mu -= fine;
        }
        let mut upper = grid[last];
        let mut mu = grid[last] + fine;
        while mu < grid[last] + coarse {
            if self.accepts(z, mu) {
                upper = mu;
            }
            mu += fine;
        }
        (lower, upper)
    }
}
