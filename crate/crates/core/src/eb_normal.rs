//! Normal-normal conjugate machinery: posteriors, empirical Bayes posterior
//! intervals, their exact frequentist coverage, prior-predictive CDFs and a
//! Monte Carlo Bayes-risk estimator.

use std::io::Write;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grouped_data::HyperParams;
use crate::interval::{check_alpha, Interval, Method};
use crate::numerics::special::{std_cdf, std_prob_between, std_quantile};
use crate::numerics::RngStream;

/// Relative floor applied to the posterior sd when `τ² = 0`.
pub const DEGENERATE_SD_FLOOR: f64 = 1e-8;

/// Linking model plus the sampling variance of the group at hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalModelSpec {
    pub hyper: HyperParams,
    pub sigma2: f64,
}

impl NormalModelSpec {
    pub fn new(hyper: HyperParams, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::domain(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        let hyper = HyperParams::new(hyper.phi, hyper.tau2)?;
        Ok(Self { hyper, sigma2 })
    }

    pub fn with(phi: f64, tau2: f64, sigma2: f64) -> Result<Self> {
        Self::new(HyperParams::new(phi, tau2)?, sigma2)
    }

    /// Weight on the observation in the posterior mean, `τ²/(τ² + σ²)`.
    pub fn shrinkage_weight(&self) -> f64 {
        self.hyper.tau2 / (self.hyper.tau2 + self.sigma2)
    }

    pub fn posterior_sd(&self) -> f64 {
        let tau2 = self.hyper.tau2;
        if tau2 == 0.0 {
            DEGENERATE_SD_FLOOR * self.sigma2.sqrt()
        } else {
            (tau2 * self.sigma2 / (tau2 + self.sigma2)).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub sd: f64,
}

/// Posterior of `μ` given `Z = z`: mean `(φ/τ² + z/σ²)/(1/τ² + 1/σ²)`,
/// sd `(1/τ² + 1/σ²)^(-1/2)`.
pub fn posterior(z: f64, spec: &NormalModelSpec) -> Result<Posterior> {
    if !z.is_finite() {
        return Err(Error::domain(format!(
            "observation must be finite, got {z}"
        )));
    }
    let w = spec.shrinkage_weight();
    let phi = spec.hyper.phi;
    Ok(Posterior {
        mean: phi + w * (z - phi),
        sd: spec.posterior_sd(),
    })
}

/// Equal-tailed `1 − α` posterior interval, `mean ± Φ⁻¹(1 − α/2)·sd`.
pub fn eb_interval(z: f64, spec: &NormalModelSpec, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let post = posterior(z, spec)?;
    let half = std_quantile(1.0 - alpha / 2.0) * post.sd;
    Interval::new(post.mean - half, post.mean + half, 1.0 - alpha, Method::Eb)
}

/// Exact frequentist coverage `Pr(μ ∈ C_B(Z) | μ)` of [`eb_interval`].
pub fn exact_eb_coverage(mu: f64, spec: &NormalModelSpec, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !mu.is_finite() {
        return Err(Error::domain(format!("mu must be finite, got {mu}")));
    }
    if spec.hyper.tau2 == 0.0 {
        return Err(Error::DegeneratePrior(
            "coverage is undefined for a point-mass prior (tau2 = 0)".into(),
        ));
    }
    let w = spec.shrinkage_weight();
    let s = spec.posterior_sd();
    let q = std_quantile(1.0 - alpha / 2.0);
    let sigma = spec.sigma2.sqrt();
    let shift = mu - (1.0 - w) * spec.hyper.phi;
    let lo = (shift - q * s) / w;
    let hi = (shift + q * s) / w;
    Ok(std_prob_between((lo - mu) / sigma, (hi - mu) / sigma))
}

/// [`exact_eb_coverage`] over a grid of true means.
pub fn coverage_curve(
    spec: &NormalModelSpec,
    alpha: f64,
    mu_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if mu_grid.is_empty() {
        return Err(Error::domain("mu grid is empty"));
    }
    mu_grid
        .iter()
        .map(|&mu| Ok((mu, exact_eb_coverage(mu, spec, alpha)?)))
        .collect()
}

/// Emit a coverage curve as CSV `mu,coverage`.
pub fn write_coverage_curve<W: Write>(mut sink: W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(sink, "mu,coverage")?;
    for &(mu, cov) in rows {
        writeln!(sink, "{},{}", fmt_sig(mu), fmt_sig(cov))?;
    }
    Ok(())
}

/// `count` evenly spaced points from `lo` to `hi` inclusive; interpolated so
/// that symmetric grids hit their centre exactly.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = (count - 1) as f64;
            (0..count)
                .map(|k| {
                    let t = k as f64 / last;
                    lo * (1.0 - t) + hi * t
                })
                .collect()
        }
    }
}

/// CDF of the prior predictive `N(φ, τ² + σ²)` at `z`.
pub fn prior_predictive_cdf(z: f64, spec: &NormalModelSpec) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain(format!("z must be finite, got {z}")));
    }
    let sd = (spec.hyper.tau2 + spec.sigma2).sqrt();
    Ok(std_cdf((z - spec.hyper.phi) / sd))
}

/// Monte Carlo Bayes risk `E(μ − θ(Z))²` with `μ ~ N(φ, τ²)`, `Z|μ ~ N(μ, σ²)`.
///
/// Returns `(risk, standard error)`.
pub fn mc_bayes_risk<F>(
    estimator: F,
    spec: &NormalModelSpec,
    reps: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if reps < 100 {
        return Err(Error::domain(format!(
            "reps must be at least 100, got {reps}"
        )));
    }
    let tau = spec.hyper.tau2.sqrt();
    let sigma = spec.sigma2.sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let mu = rng.normal(spec.hyper.phi, tau);
        let z = rng.normal(mu, sigma);
        let est = estimator(z);
        if !est.is_finite() {
            return Err(Error::Evaluation { at: z });
        }
        let loss = (mu - est).powi(2);
        sum += loss;
        sum_sq += loss * loss;
    }
    let n = reps as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> NormalModelSpec {
        NormalModelSpec::with(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn posterior_equal_precision() {
        let p = posterior(2.0, &unit()).unwrap();
        assert_abs_diff_eq!(p.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.sd, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn posterior_flat_prior_limit() {
        let spec = NormalModelSpec::with(0.0, 1e12, 1.0).unwrap();
        let p = posterior(3.7, &spec).unwrap();
        assert_abs_diff_eq!(p.mean, 3.7, epsilon = 1e-10);
        assert_abs_diff_eq!(p.sd, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn posterior_matches_grid_bayes_rule() {
        // Oracle: posterior moments by brute-force quadrature on a μ grid.
        let spec = NormalModelSpec::with(0.0, 0.25, 1.0).unwrap();
        let z = 3.0;
        let (mut m0, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        let h = 1e-4;
        let mut mu = -6.0f64;
        while mu <= 6.0 {
            let w = (-0.5 * mu * mu / 0.25).exp() * (-0.5 * (z - mu) * (z - mu)).exp();
            m0 += w;
            m1 += w * mu;
            m2 += w * mu * mu;
            mu += h;
        }
        let mean = m1 / m0;
        let sd = (m2 / m0 - mean * mean).sqrt();
        assert_abs_diff_eq!(mean, 0.6, epsilon = 1e-6);
        assert_abs_diff_eq!(sd, 0.447_213_6, epsilon = 1e-6);
        let p = posterior(z, &spec).unwrap();
        assert_abs_diff_eq!(p.mean, mean, epsilon = 1e-6);
        assert_abs_diff_eq!(p.sd, sd, epsilon = 1e-6);
    }

    #[test]
    fn posterior_rejects_nonfinite_and_handles_point_prior() {
        assert!(posterior(f64::NAN, &unit()).is_err());
        let spec = NormalModelSpec::with(1.5, 0.0, 4.0).unwrap();
        let p = posterior(10.0, &spec).unwrap();
        assert_eq!(p.mean, 1.5);
        assert_abs_diff_eq!(p.sd, 2e-8, epsilon = 1e-20);
    }

    #[test]
    fn spec_validation() {
        assert!(NormalModelSpec::with(0.0, 1.0, 0.0).is_err());
        assert!(NormalModelSpec::with(0.0, -1.0, 1.0).is_err());
        assert!(NormalModelSpec::with(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn eb_interval_values() {
        let iv = eb_interval(0.0, &unit(), 0.05).unwrap();
        assert_abs_diff_eq!(iv.lower, -1.385_904, epsilon = 1e-6);
        assert_abs_diff_eq!(iv.upper, 1.385_904, epsilon = 1e-6);
        assert_eq!(iv.method, Method::Eb);
        let iv = eb_interval(2.0, &unit(), 0.05).unwrap();
        assert_abs_diff_eq!(iv.lower, -0.385_904, epsilon = 1e-6);
        assert_abs_diff_eq!(iv.upper, 2.385_904, epsilon = 1e-6);
        assert!(eb_interval(0.0, &unit(), 1.0).is_err());
    }

    #[test]
    fn eb_interval_flat_prior_is_umau() {
        let spec = NormalModelSpec::with(0.0, 1e12, 1.0).unwrap();
        let iv = eb_interval(0.7, &spec, 0.05).unwrap();
        let u = crate::direct_intervals::umau_z(0.7, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(iv.lower, u.lower, epsilon = 1e-5);
        assert_abs_diff_eq!(iv.upper, u.upper, epsilon = 1e-5);
    }

    #[test]
    fn eb_width_constant_in_z() {
        let spec = NormalModelSpec::with(0.3, 0.6, 1.7).unwrap();
        let w0 = eb_interval(-40.0, &spec, 0.1).unwrap().width();
        for z in [-3.0, 0.0, 0.3, 8.0, 1e3] {
            assert_abs_diff_eq!(
                eb_interval(z, &spec, 0.1).unwrap().width(),
                w0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn exact_coverage_reference_values() {
        let spec = unit();
        assert_abs_diff_eq!(
            exact_eb_coverage(0.0, &spec, 0.05).unwrap(),
            0.99442,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            exact_eb_coverage(2.0, &spec, 0.05).unwrap(),
            0.77989,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            exact_eb_coverage(4.0, &spec, 0.05).unwrap(),
            0.10968,
            epsilon = 1e-5
        );
        let point = NormalModelSpec::with(0.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            exact_eb_coverage(0.0, &point, 0.05),
            Err(Error::DegeneratePrior(_))
        ));
    }

    #[test]
    fn coverage_symmetric_and_decreasing() {
        let spec = NormalModelSpec::with(1.0, 2.0, 2.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let d = k as f64 * 0.1;
            let up = exact_eb_coverage(1.0 + d, &spec, 0.05).unwrap();
            let down = exact_eb_coverage(1.0 - d, &spec, 0.05).unwrap();
            assert_abs_diff_eq!(up, down, epsilon = 1e-14);
            assert!(up < prev);
            prev = up;
        }
    }

    #[test]
    fn curve_tails_and_csv() {
        let grid = linspace(-6.0, 6.0, 121);
        assert_eq!(grid[60], 0.0);
        let rows = coverage_curve(&unit(), 0.05, &grid).unwrap();
        assert!(rows[0].1 < 0.01 && rows[120].1 < 0.01);
        let mut buf = Vec::new();
        write_coverage_curve(&mut buf, &rows[60..61]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "mu,coverage\n0,0.994425403\n"
        );
        assert!(coverage_curve(&unit(), 0.05, &[]).is_err());
    }

    #[test]
    fn prior_predictive() {
        let spec = unit();
        assert_eq!(prior_predictive_cdf(0.0, &spec).unwrap(), 0.5);
        // Oracle: ∫ Φ(z − μ) N(μ; 0, 1) dμ by the midpoint rule.
        let z = 2.0;
        let h = 1e-3;
        let mut acc = 0.0;
        let mut mu = -10.0 + h / 2.0;
        while mu < 10.0 {
            acc += std_cdf(z - mu) * crate::numerics::norm_pdf(mu) * h;
            mu += h;
        }
        assert_abs_diff_eq!(acc, 0.92135, epsilon = 1e-5);
        assert_abs_diff_eq!(prior_predictive_cdf(z, &spec).unwrap(), acc, epsilon = 1e-8);
        let point = NormalModelSpec::with(1.0, 0.0, 4.0).unwrap();
        assert_abs_diff_eq!(
            prior_predictive_cdf(2.0, &point).unwrap(),
            std_cdf(0.5),
            epsilon = 1e-15
        );
    }

    #[test]
    fn bayes_risk() {
        let spec = unit();
        let post_mean = |z: f64| posterior(z, &spec).unwrap().mean;
        let (r_pm, se_pm) =
            mc_bayes_risk(post_mean, &spec, 40_000, &mut RngStream::new(3, 0)).unwrap();
        assert!((r_pm - 0.5).abs() < 3.0 * se_pm, "{r_pm} ± {se_pm}");
        let (r_id, se_id) = mc_bayes_risk(|z| z, &spec, 40_000, &mut RngStream::new(3, 0)).unwrap();
        assert!((r_id - 1.0).abs() < 3.0 * se_id, "{r_id} ± {se_id}");
        assert!(r_pm < r_id);
        assert!(mc_bayes_risk(|z| z, &spec, 10, &mut RngStream::new(3, 0)).is_err());
        assert!(matches!(
            mc_bayes_risk(|_| f64::NAN, &spec, 100, &mut RngStream::new(3, 0)),
            Err(Error::Evaluation { .. })
        ));
    }
}
