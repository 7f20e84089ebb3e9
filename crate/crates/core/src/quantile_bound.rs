//! Confidence bounds for an individual mean built from a bound on the
//! posterior quantile.
//!
//! With total miscoverage `α` split as `α₁ + (α − α₁)`, let `v(z)` be the
//! upper `α₁` posterior quantile and `u(z)` an upper confidence bound for
//! `v(z)` at level `1 − (α − α₁)`. Then `Pr(μ > u(Z)) ≤ α` marginally. Here
//! `u(z)` comes from a parametric bootstrap of the hyperparameter estimates.

use log::warn;
use rayon::prelude::*;

use crate::eb_normal::{posterior, NormalModelSpec};
use crate::error::{Error, Result};
use crate::grouped_data::{estimate, estimate_from_moments, Estimator, GroupSummary, HyperParams};
use crate::interval::{check_alpha, Interval, Method};
use crate::numerics::special::std_quantile;
use crate::numerics::RngStream;

pub const MIN_REPLICATES: usize = 50;
/// Relative floor (in units of the group's `σ²`) on bootstrap `τ²*`.
const TAU2_FLOOR: f64 = 1e-8;

/// Split of the miscoverage budget `α` into the posterior-quantile share
/// `α₁` and the bootstrap share `α − α₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub alpha: f64,
    pub alpha1: f64,
}

impl BudgetSplit {
    /// `alpha1 == alpha` is accepted and means no bootstrap budget: the
    /// bound is then the plug-in quantile itself.
    pub fn new(alpha: f64, alpha1: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(alpha1 > 0.0 && alpha1 <= alpha) {
            return Err(Error::domain(format!(
                "alpha1 must lie in (0, alpha = {alpha}], got {alpha1}"
            )));
        }
        Ok(Self { alpha, alpha1 })
    }

    /// Equal split, `α₁ = α/2`.
    pub fn even(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha / 2.0)
    }

    pub fn bootstrap_share(&self) -> f64 {
        self.alpha - self.alpha1
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub estimator: Estimator,
    pub rng: RngStream,
    /// Skip estimation and use these hyperparameters as the truth.
    pub known_hyper: Option<HyperParams>,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, estimator: Estimator, rng: RngStream) -> Result<Self> {
        if replicates < MIN_REPLICATES {
            return Err(Error::domain(format!(
                "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
            )));
        }
        Ok(Self {
            replicates,
            estimator,
            rng,
            known_hyper: None,
        })
    }

    pub fn with_known_hyper(mut self, hyper: HyperParams) -> Self {
        self.known_hyper = Some(hyper);
        self
    }
}

/// Upper `α₁` posterior quantile `v(z) = mean + sd·Φ⁻¹(1 − α₁)`.
pub fn posterior_upper_quantile(z: f64, spec: &NormalModelSpec, alpha1: f64) -> Result<f64> {
    check_alpha(alpha1)?;
    if spec.hyper.tau2 == 0.0 {
        return Err(Error::DegeneratePrior(
            "posterior quantile needs tau2 > 0".into(),
        ));
    }
    let post = posterior(z, spec)?;
    Ok(post.mean + post.sd * std_quantile(1.0 - alpha1))
}

/// Posterior quantile at level `alpha1` in the given tail, with `τ²` floored.
fn floored_quantile(
    z: f64,
    hyper: HyperParams,
    sigma2: f64,
    alpha1: f64,
    upper: bool,
) -> Result<f64> {
    let tau2 = hyper.tau2.max(TAU2_FLOOR * sigma2);
    let spec = NormalModelSpec::with(hyper.phi, tau2, sigma2)?;
    let post = posterior(z, &spec)?;
    let q = std_quantile(1.0 - alpha1);
    Ok(if upper {
        post.mean + post.sd * q
    } else {
        post.mean - post.sd * q
    })
}

/// Fitted hyperparameters and their parametric-bootstrap replicates.
///
/// Replicate `b` uses substream `b` of the configured stream, so the ensemble
/// is identical whether replicates run in parallel or not.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    fitted: HyperParams,
    replicates: Vec<HyperParams>,
}

impl BootstrapEnsemble {
    pub fn fit(summaries: &[GroupSummary], cfg: &BootstrapConfig) -> Result<Self> {
        if let Some(hyper) = cfg.known_hyper {
            return Ok(Self {
                fitted: hyper,
                replicates: Vec::new(),
            });
        }
        if summaries.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "bootstrap bound needs at least 2 groups, got {}",
                summaries.len()
            )));
        }
        if cfg.replicates < MIN_REPLICATES {
            return Err(Error::domain(format!(
                "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
                cfg.replicates
            )));
        }
        let fitted = estimate(summaries, cfg.estimator)?;
        let vars: Vec<f64> = summaries
            .iter()
            .map(GroupSummary::noise_variance)
            .collect::<Result<_>>()?;
        let tau = fitted.tau2.sqrt();
        let replicates = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = cfg.rng.substream(b);
                let means: Vec<f64> = vars
                    .iter()
                    .map(|&v| {
                        let mu = rng.normal(fitted.phi, tau);
                        rng.normal(mu, v.sqrt())
                    })
                    .collect();
                estimate_from_moments(&means, &vars, cfg.estimator)
            })
            .collect::<Result<Vec<_>>>()?;
        if fitted.tau2 > 0.0 && replicates.iter().all(|h| h.tau2 == 0.0) {
            warn!("every bootstrap replicate has tau2 = 0; bounds use a floored tau2");
        }
        Ok(Self { fitted, replicates })
    }

    pub fn fitted(&self) -> HyperParams {
        self.fitted
    }

    pub fn replicates(&self) -> &[HyperParams] {
        &self.replicates
    }

    /// Upper bound `u(z)` for a group with sampling variance `sigma2`.
    pub fn upper_bound(&self, z: f64, sigma2: f64, split: &BudgetSplit) -> Result<f64> {
        self.bound(z, sigma2, split, true)
    }

    /// Lower bound, mirroring [`Self::upper_bound`] in the other tail.
    pub fn lower_bound(&self, z: f64, sigma2: f64, split: &BudgetSplit) -> Result<f64> {
        self.bound(z, sigma2, split, false)
    }

    fn bound(&self, z: f64, sigma2: f64, split: &BudgetSplit, upper: bool) -> Result<f64> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::domain(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        let share = split.bootstrap_share();
        if self.replicates.is_empty() || share <= 0.0 {
            return floored_quantile(z, self.fitted, sigma2, split.alpha1, upper);
        }
        let mut draws: Vec<f64> = self
            .replicates
            .iter()
            .map(|&h| floored_quantile(z, h, sigma2, split.alpha1, upper))
            .collect::<Result<_>>()?;
        draws.sort_by(f64::total_cmp);
        let b = draws.len() as f64;
        // 1-based order statistics, conservative side in each tail.
        let rank = if upper {
            ((1.0 - share) * b).ceil()
        } else {
            (share * b).floor()
        };
        let rank = (rank as usize).clamp(1, draws.len());
        Ok(draws[rank - 1])
    }

    /// Number of adjacent grid pairs where the upper bound decreases in `z`.
    /// Bootstrap noise can cause small violations; each is logged.
    pub fn monotonicity_violations(
        &self,
        grid: &[f64],
        sigma2: f64,
        split: &BudgetSplit,
    ) -> Result<usize> {
        let values: Vec<f64> = grid
            .iter()
            .map(|&z| self.upper_bound(z, sigma2, split))
            .collect::<Result<_>>()?;
        let mut count = 0;
        for (pair, zs) in values.windows(2).zip(grid.windows(2)) {
            if pair[1] < pair[0] {
                warn!(
                    "upper bound decreases between z = {} and z = {}",
                    zs[0], zs[1]
                );
                count += 1;
            }
        }
        Ok(count)
    }
}

/// Bootstrap upper confidence bound for `v(z)`; this is also the final
/// one-sided upper bound for `μ`.
pub fn bootstrap_upper_bound(
    z: f64,
    sigma2: f64,
    summaries: &[GroupSummary],
    split: &BudgetSplit,
    cfg: &BootstrapConfig,
) -> Result<f64> {
    BootstrapEnsemble::fit(summaries, cfg)?.upper_bound(z, sigma2, split)
}

/// Upper bound `u(z)` with `Pr(μ > u(Z)) ≤ α₁ + (α − α₁) = α`.
pub fn one_sided_upper(
    z: f64,
    sigma2: f64,
    summaries: &[GroupSummary],
    split: &BudgetSplit,
    cfg: &BootstrapConfig,
) -> Result<f64> {
    bootstrap_upper_bound(z, sigma2, summaries, split, cfg)
}

/// Per-side split for a two-sided interval: `α/2` each side, `α₁ = α/4`.
pub fn two_sided_split(alpha: f64) -> Result<BudgetSplit> {
    check_alpha(alpha)?;
    BudgetSplit::new(alpha / 2.0, alpha / 4.0)
}

pub fn two_sided_from(
    ensemble: &BootstrapEnsemble,
    z: f64,
    sigma2: f64,
    alpha: f64,
) -> Result<Interval> {
    let split = two_sided_split(alpha)?;
    let lower = ensemble.lower_bound(z, sigma2, &split)?;
    let upper = ensemble.upper_bound(z, sigma2, &split)?;
    Interval::new(lower, upper, 1.0 - alpha, Method::QBound)
}

/// Two-sided `1 − α` interval from a lower and an upper quantile bound.
pub fn two_sided_interval(
    z: f64,
    sigma2: f64,
    summaries: &[GroupSummary],
    alpha: f64,
    cfg: &BootstrapConfig,
) -> Result<Interval> {
    two_sided_from(&BootstrapEnsemble::fit(summaries, cfg)?, z, sigma2, alpha)
}

/// Two-sided intervals for every group, sharing one bootstrap ensemble.
pub fn qbound_all_groups(
    summaries: &[GroupSummary],
    alpha: f64,
    cfg: &BootstrapConfig,
) -> Result<Vec<Interval>> {
    let ensemble = BootstrapEnsemble::fit(summaries, cfg)?;
    summaries
        .iter()
        .map(|s| two_sided_from(&ensemble, s.mean, s.noise_variance()?, alpha))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eb_normal::eb_interval;
    use approx::assert_abs_diff_eq;

    fn unit() -> NormalModelSpec {
        NormalModelSpec::with(0.0, 1.0, 1.0).unwrap()
    }

    fn sample_groups(k: usize, seed: u64) -> Vec<GroupSummary> {
        let mut rng = RngStream::new(seed, 0);
        (0..k)
            .map(|i| {
                let mu = rng.standard_normal();
                GroupSummary::known(format!("g{i}"), rng.normal(mu, 1.0), 1.0)
            })
            .collect()
    }

    fn config(b: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig::new(b, Estimator::Mom, RngStream::new(seed, 1)).unwrap()
    }

    #[test]
    fn posterior_quantile_values() {
        assert_abs_diff_eq!(
            posterior_upper_quantile(0.0, &unit(), 0.025).unwrap(),
            1.385_904,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            posterior_upper_quantile(1.3, &unit(), 0.5).unwrap(),
            0.65,
            epsilon = 1e-12
        );
        let point = NormalModelSpec::with(0.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            posterior_upper_quantile(0.0, &point, 0.025),
            Err(Error::DegeneratePrior(_))
        ));
    }

    #[test]
    fn posterior_quantile_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..50 {
            let v = posterior_upper_quantile(-5.0 + 0.2 * k as f64, &unit(), 0.025).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn split_validation() {
        assert!(BudgetSplit::new(0.05, 0.06).is_err());
        assert!(BudgetSplit::new(0.05, 0.0).is_err());
        let s = BudgetSplit::even(0.05).unwrap();
        assert_abs_diff_eq!(s.alpha1 + s.bootstrap_share(), 0.05, epsilon = 1e-15);
        assert!(BootstrapConfig::new(49, Estimator::Mom, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn known_hyper_gives_posterior_quantile() {
        let groups = sample_groups(20, 3);
        let cfg = config(200, 3).with_known_hyper(HyperParams::new(0.0, 1.0).unwrap());
        let split = BudgetSplit::even(0.05).unwrap();
        let u = one_sided_upper(0.7, 1.0, &groups, &split, &cfg).unwrap();
        let v = posterior_upper_quantile(0.7, &unit(), 0.025).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn zero_bootstrap_budget_gives_plug_in_quantile() {
        let groups = sample_groups(40, 5);
        let hyper = estimate(&groups, Estimator::Mom).unwrap();
        let spec = NormalModelSpec::new(hyper, 1.0).unwrap();
        let split = BudgetSplit::new(0.05, 0.05).unwrap();
        let u = bootstrap_upper_bound(1.2, 1.0, &groups, &split, &config(100, 5)).unwrap();
        let v = posterior_upper_quantile(1.2, &spec, 0.05).unwrap();
        assert_abs_diff_eq!(u, v, epsilon = 1e-12);
    }

    #[test]
    fn upper_bound_is_conservative() {
        let groups = sample_groups(50, 11);
        let ensemble = BootstrapEnsemble::fit(&groups, &config(300, 11)).unwrap();
        let spec = NormalModelSpec::new(ensemble.fitted(), 1.0).unwrap();
        let split = BudgetSplit::even(0.05).unwrap();
        for z in [-3.0, -1.0, 0.0, 1.5, 3.0] {
            let u = ensemble.upper_bound(z, 1.0, &split).unwrap();
            let v = posterior_upper_quantile(z, &spec, split.alpha1).unwrap();
            assert!(u >= v, "u({z}) = {u} < v = {v}");
        }
    }

    #[test]
    fn ensemble_is_deterministic() {
        let groups = sample_groups(30, 2);
        let a = BootstrapEnsemble::fit(&groups, &config(120, 9)).unwrap();
        let b = BootstrapEnsemble::fit(&groups, &config(120, 9)).unwrap();
        assert_eq!(a.replicates(), b.replicates());
        let sequential: Vec<HyperParams> = {
            let cfg = config(120, 9);
            let vars = vec![1.0; groups.len()];
            let fitted = a.fitted();
            (0..120)
                .map(|b| {
                    let mut rng = cfg.rng.substream(b);
                    let means: Vec<f64> = vars
                        .iter()
                        .map(|&v: &f64| {
                            let mu = rng.normal(fitted.phi, fitted.tau2.sqrt());
                            rng.normal(mu, v.sqrt())
                        })
                        .collect();
                    estimate_from_moments(&means, &vars, Estimator::Mom).unwrap()
                })
                .collect()
        };
        assert_eq!(a.replicates(), &sequential[..]);
    }

    #[test]
    fn two_sided_known_hyper_is_wider_than_eb() {
        let groups = sample_groups(10, 4);
        let cfg = config(50, 4).with_known_hyper(HyperParams::new(0.0, 1.0).unwrap());
        let iv = two_sided_interval(0.0, 1.0, &groups, 0.05, &cfg).unwrap();
        let post_q = posterior_upper_quantile(0.0, &unit(), 0.0125).unwrap();
        assert_abs_diff_eq!(iv.upper, post_q, epsilon = 1e-12);
        assert_abs_diff_eq!(iv.lower, -post_q, epsilon = 1e-12);
        let eb = eb_interval(0.0, &unit(), 0.05).unwrap();
        assert!(iv.width() > eb.width());
        assert_eq!(iv.method, Method::QBound);
    }

    #[test]
    fn two_sided_symmetric_at_centre() {
        // Symmetric data about 0 and z = φ̂: the bounds mirror each other.
        let groups: Vec<GroupSummary> = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &z)| GroupSummary::known(format!("g{i}"), z, 0.5))
            .collect();
        let cfg = config(200, 8);
        let ensemble = BootstrapEnsemble::fit(&groups, &cfg).unwrap();
        assert_abs_diff_eq!(ensemble.fitted().phi, 0.0, epsilon = 1e-15);
        let iv = two_sided_from(&ensemble, 0.0, 0.25, 0.05).unwrap();
        assert!(iv.contains(0.0));
        // Replicate φ* are symmetric only in distribution; allow MC slack.
        assert!((iv.upper + iv.lower).abs() < 0.1 * iv.width());
    }

    #[test]
    fn monotone_on_grid() {
        let groups = sample_groups(50, 21);
        let ensemble = BootstrapEnsemble::fit(&groups, &config(200, 21)).unwrap();
        let grid: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
        let split = BudgetSplit::even(0.05).unwrap();
        assert_eq!(
            ensemble
                .monotonicity_violations(&grid, 1.0, &split)
                .unwrap(),
            0
        );
    }

    #[test]
    fn needs_two_groups() {
        let groups = sample_groups(1, 1);
        let split = BudgetSplit::even(0.05).unwrap();
        assert!(matches!(
            bootstrap_upper_bound(0.0, 1.0, &groups, &split, &config(50, 1)),
            Err(Error::InsufficientData(_))
        ));
    }
}
