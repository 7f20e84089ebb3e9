//! FAB ("frequentist and Bayesian") constant-coverage intervals.
//!
//! For each candidate mean `μ` the acceptance region is the asymmetric
//! `1 − α` region
//!
//! ```text
//! A_w(μ) = (μ + σ·Φ⁻¹(α·w), μ + σ·Φ⁻¹(1 − α(1 − w)))
//! ```
//!
//! with `w = w(μ)` chosen to minimize the prior-predictive probability of
//! `A_w(μ)` under the linking model. Expected interval width equals the
//! integral over `μ` of that acceptance probability, so minimizing it
//! pointwise minimizes prior expected width while every region keeps exact
//! sampling probability `1 − α`. The interval for an observation `z` is the
//! set of `μ` whose region contains `z`.
//!
//! The linking model never involves the observation being inverted, which is
//! what keeps the coverage exact for any linking values.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouped_data::{loo_hyperparams, Estimator, GroupSummary, HyperParams};
use crate::interval::{check_alpha, Interval, Method};
use crate::numerics::special::{
    ln_std_prob_between, std_prob_between_fast, std_quantile, t_quantile_unchecked, wichura,
};
use crate::numerics::{find_root, minimize_scalar, ToleranceConfig};

/// `w` is restricted to `[W_CLAMP, 1 − W_CLAMP]`.
pub const W_CLAMP: f64 = 1e-6;
pub const W_GRID_POINTS: usize = 21;
pub const SCAN_POINTS: usize = 512;
/// Scan half-width in units of `√(σ² + τ̂² + |φ̂ − z|·σ)`.
pub const SCAN_HALF_WIDTH: f64 = 12.0;
/// How many extra scan windows may be appended when an endpoint falls
/// outside the initial window.
const MAX_SCAN_EXTENSIONS: usize = 16;
/// Relative floor on `τ̂²` inside the objective.
const TAU2_FLOOR: f64 = 1e-8;

/// Beyond this many marginal sds from `φ̂` the objective switches to logs.
const FAR_TAIL: f64 = 30.0;
/// Bound on `|Φ⁻¹(·)|` over clamped regions, used with [`FAR_TAIL`].
const FAR_REGION_REACH: f64 = 8.0;

const W_TOL: ToleranceConfig = ToleranceConfig {
    abs_tol: 1e-9,
    rel_tol: 1e-6,
    max_iter: 200,
};

/// Linking model estimated without the group being inverted.
///
/// `scale2` is the sampling-variance proxy used inside the objective only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkingModel {
    pub hyper: HyperParams,
    pub scale2: f64,
}

impl LinkingModel {
    pub fn new(hyper: HyperParams, scale2: f64) -> Result<Self> {
        if !(scale2 > 0.0) || !scale2.is_finite() {
            return Err(Error::domain(format!(
                "scale2 must be positive, got {scale2}"
            )));
        }
        let hyper = HyperParams::new(hyper.phi, hyper.tau2)?;
        Ok(Self { hyper, scale2 })
    }

    /// Linking model for the known-variance case, `scale2 = σ²`.
    pub fn for_known_sigma(hyper: HyperParams, sigma: f64) -> Result<Self> {
        Self::new(hyper, sigma * sigma)
    }

    fn marginal_sd(&self) -> f64 {
        let tau2 = self.hyper.tau2.max(TAU2_FLOOR * self.scale2);
        (tau2 + self.scale2).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRegion {
    pub lo: f64,
    pub hi: f64,
    pub w: f64,
}

fn check_w(w: f64) -> Result<()> {
    if (W_CLAMP..=1.0 - W_CLAMP).contains(&w) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "w must lie in [{W_CLAMP}, {}], got {w}",
            1.0 - W_CLAMP
        )))
    }
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be positive, got {x}")))
    }
}

/// Optimal-`w` solver for a fixed `α`. Normal quantiles at the scan nodes of
/// the `w` grid do not depend on `μ` and are computed once.
#[derive(Debug, Clone)]
pub struct WSolver {
    alpha: f64,
    nodes: Vec<f64>,
    node_quantiles: Vec<(f64, f64)>,
}

impl WSolver {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let last = (W_GRID_POINTS - 1) as f64;
        let (lo, hi) = (W_CLAMP, 1.0 - W_CLAMP);
        let nodes: Vec<f64> = (0..W_GRID_POINTS)
            .map(|k| {
                if k == W_GRID_POINTS - 1 {
                    hi
                } else {
                    lo + (hi - lo) / last * k as f64
                }
            })
            .collect();
        let node_quantiles = nodes.iter().map(|&w| region_quantiles(alpha, w)).collect();
        Ok(Self {
            alpha,
            nodes,
            node_quantiles,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn node_index(&self, w: f64) -> Option<usize> {
        let step = (1.0 - 2.0 * W_CLAMP) / (W_GRID_POINTS - 1) as f64;
        let k = ((w - W_CLAMP) / step).round();
        if k < 0.0 || k >= W_GRID_POINTS as f64 {
            return None;
        }
        let k = k as usize;
        (self.nodes[k] == w).then_some(k)
    }

    /// Optimal `w` at candidate mean `mu`.
    ///
    /// The objective is `Pr_M(A_w(μ))` with `M = N(φ̂, τ̂² + scale2)`. Far in
    /// the marginal tail, where that probability would underflow, its log is
    /// minimized instead; the argmin is the same.
    pub fn solve(&self, mu: f64, link: &LinkingModel, sigma: f64) -> Result<f64> {
        let alpha = self.alpha;
        let m_sd = link.marginal_sd();
        let c = (mu - link.hyper.phi) / m_sd;
        let k = sigma / m_sd;
        let far = c.abs() - k * FAR_REGION_REACH > FAR_TAIL;
        let objective = |w: f64| {
            let (ql, qh) = match self.node_index(w) {
                Some(i) => self.node_quantiles[i],
                None => (wichura(alpha * w), wichura(1.0 - alpha * (1.0 - w))),
            };
            if far {
                ln_std_prob_between(c + k * ql, c + k * qh)
            } else {
                std_prob_between_fast(c + k * ql, c + k * qh)
            }
        };
        let (w, _) = minimize_scalar(objective, (W_CLAMP, 1.0 - W_CLAMP), W_GRID_POINTS, &W_TOL)?;
        Ok(w.clamp(W_CLAMP, 1.0 - W_CLAMP))
    }
}

fn region_quantiles(alpha: f64, w: f64) -> (f64, f64) {
    (
        std_quantile(alpha * w),
        std_quantile(1.0 - alpha * (1.0 - w)),
    )
}

/// The `w` minimizing prior-predictive acceptance probability at `mu`.
pub fn fab_w(mu: f64, link: &LinkingModel, sigma: f64, alpha: f64) -> Result<f64> {
    check_positive(sigma, "sigma")?;
    if !mu.is_finite() {
        return Err(Error::domain(format!("mu must be finite, got {mu}")));
    }
    WSolver::new(alpha)?.solve(mu, link, sigma)
}

/// Normal acceptance region for `H: μ` with tail split `w`.
pub fn acceptance_region_z(mu: f64, w: f64, sigma: f64, alpha: f64) -> Result<AcceptanceRegion> {
    check_alpha(alpha)?;
    check_w(w)?;
    check_positive(sigma, "sigma")?;
    let (ql, qh) = region_quantiles(alpha, w);
    Ok(AcceptanceRegion {
        lo: mu + sigma * ql,
        hi: mu + sigma * qh,
        w,
    })
}

/// Student-t acceptance region for the group mean with standard error `se`.
pub fn acceptance_region_t(
    mu: f64,
    w: f64,
    se: f64,
    dof: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    check_alpha(alpha)?;
    check_w(w)?;
    check_positive(se, "se")?;
    check_positive(dof, "dof")?;
    Ok(AcceptanceRegion {
        lo: mu + se * t_quantile_unchecked(alpha * w, dof),
        hi: mu + se * t_quantile_unchecked(1.0 - alpha * (1.0 - w), dof),
        w,
    })
}

/// Invert a family of acceptance regions at observation `z`.
///
/// The lower endpoint is the first crossing of `hi(μ) = z`, the upper the
/// last crossing of `lo(μ) = z`, which is the convex hull of accepted `μ`.
fn invert<F>(z: f64, half_width: f64, mut region: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<AcceptanceRegion>,
{
    let step = 2.0 * half_width / (SCAN_POINTS - 1) as f64;
    let root_tol = ToleranceConfig {
        abs_tol: 1e-10 * half_width.max(f64::MIN_POSITIVE),
        rel_tol: 1e-12,
        max_iter: 200,
    };

    let mut grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| z - half_width + step * k as f64)
        .collect();
    let mut regions: Vec<AcceptanceRegion> =
        grid.iter().map(|&mu| region(mu)).collect::<Result<_>>()?;

    // Extend the window while an endpoint is not bracketed.
    for _ in 0..MAX_SCAN_EXTENSIONS {
        let need_left = regions[0].hi >= z;
        let need_right = regions[regions.len() - 1].lo <= z;
        if !need_left && !need_right {
            break;
        }
        if need_left {
            let start = grid[0];
            let extra: Vec<f64> = (1..SCAN_POINTS)
                .rev()
                .map(|k| start - step * k as f64)
                .collect();
            let extra_regions: Vec<AcceptanceRegion> =
                extra.iter().map(|&mu| region(mu)).collect::<Result<_>>()?;
            grid.splice(0..0, extra);
            regions.splice(0..0, extra_regions);
        }
        if need_right {
            let end = grid[grid.len() - 1];
            let extra: Vec<f64> = (1..SCAN_POINTS).map(|k| end + step * k as f64).collect();
            for &mu in &extra {
                regions.push(region(mu)?);
            }
            grid.extend(extra);
        }
    }
    let n = grid.len();
    if regions[0].hi >= z || regions[n - 1].lo <= z {
        return Err(Error::Inversion(format!(
            "acceptance set at z = {z} not bracketed within ±{} of z",
            z - grid[0]
        )));
    }

    let first_hi = regions
        .iter()
        .position(|r| r.hi >= z)
        .ok_or_else(|| Error::Inversion(format!("no candidate mean accepts z = {z}")))?;
    let last_lo = regions
        .iter()
        .rposition(|r| r.lo <= z)
        .ok_or_else(|| Error::Inversion(format!("no candidate mean accepts z = {z}")))?;
    let crossings_hi = regions
        .windows(2)
        .filter(|p| (p[0].hi >= z) != (p[1].hi >= z))
        .count();
    let crossings_lo = regions
        .windows(2)
        .filter(|p| (p[0].lo <= z) != (p[1].lo <= z))
        .count();
    if crossings_hi > 1 || crossings_lo > 1 {
        warn!("non-contiguous acceptance set at z = {z}; using its convex hull");
    }

    let mut failure = None;
    let mut boundary = |mu: f64, upper_side: bool| match region(mu) {
        Ok(r) => z - if upper_side { r.hi } else { r.lo },
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let lower = find_root(
        |mu| boundary(mu, true),
        (grid[first_hi - 1], grid[first_hi]),
        &root_tol,
    );
    let upper = find_root(
        |mu| boundary(mu, false),
        (grid[last_lo], grid[last_lo + 1]),
        &root_tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let (lower, upper) = (lower?, upper?);
    if lower > upper {
        return Err(Error::Inversion(format!(
            "inverted endpoints out of order at z = {z}: ({lower}, {upper})"
        )));
    }
    Ok((lower, upper))
}

fn scan_half_width(z: f64, sigma: f64, hyper: &HyperParams) -> f64 {
    SCAN_HALF_WIDTH * (sigma * sigma + hyper.tau2 + (hyper.phi - z).abs() * sigma).sqrt()
}

fn check_observation(z: f64) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "observation must be finite, got {z}"
        )))
    }
}

/// FAB interval for `z ~ N(μ, σ²)` with known `σ`, reusing a prepared solver.
pub fn fab_interval_z_with(
    solver: &WSolver,
    z: f64,
    sigma: f64,
    link: &LinkingModel,
) -> Result<Interval> {
    check_observation(z)?;
    check_positive(sigma, "sigma")?;
    let alpha = solver.alpha();
    let half = scan_half_width(z, sigma, &link.hyper);
    let (lower, upper) = invert(z, half, |mu| {
        let w = solver.solve(mu, link, sigma)?;
        let (ql, qh) = region_quantiles(alpha, w);
        Ok(AcceptanceRegion {
            lo: mu + sigma * ql,
            hi: mu + sigma * qh,
            w,
        })
    })?;
    Interval::new(lower, upper, 1.0 - alpha, Method::FabZ)
}

/// FAB interval for `z ~ N(μ, σ²)` with known `σ`.
pub fn fab_interval_z(z: f64, sigma: f64, link: &LinkingModel, alpha: f64) -> Result<Interval> {
    fab_interval_z_with(&WSolver::new(alpha)?, z, sigma, link)
}

/// FAB t-interval for a group with unknown variance.
///
/// `w(μ)` comes from the normal objective with `σ = √link.scale2`, so it
/// depends on the other groups only; the acceptance regions are exact
/// t-pivot regions built from this group's own standard error.
pub fn fab_interval_t_with(
    solver: &WSolver,
    summary: &GroupSummary,
    link: &LinkingModel,
) -> Result<Interval> {
    let sd = match summary.sd {
        Some(sd) if summary.n >= 2 && sd > 0.0 => sd,
        _ => {
            return Err(Error::InsufficientData(format!(
                "FAB t-interval for group `{}` needs n >= 2 and a positive sd",
                summary.group_id
            )))
        }
    };
    check_observation(summary.mean)?;
    let alpha = solver.alpha();
    let dof = (summary.n - 1) as f64;
    let se = sd / (summary.n as f64).sqrt();
    let objective_sigma = link.scale2.sqrt();
    // Scale the scan to the t spread of this group.
    let t_inflation =
        t_quantile_unchecked(1.0 - alpha / 2.0, dof) / std_quantile(1.0 - alpha / 2.0);
    let half = scan_half_width(summary.mean, se * t_inflation, &link.hyper);
    let (lower, upper) = invert(summary.mean, half, |mu| {
        let w = solver.solve(mu, link, objective_sigma)?;
        Ok(AcceptanceRegion {
            lo: mu + se * t_quantile_unchecked(alpha * w, dof),
            hi: mu + se * t_quantile_unchecked(1.0 - alpha * (1.0 - w), dof),
            w,
        })
    })?;
    Interval::new(lower, upper, 1.0 - alpha, Method::FabT)
}

pub fn fab_interval_t(summary: &GroupSummary, link: &LinkingModel, alpha: f64) -> Result<Interval> {
    fab_interval_t_with(&WSolver::new(alpha)?, summary, link)
}

/// Leave-one-out linking model for group `i`: hyperparameters from the other
/// groups, `scale2` the mean of the other groups' `sd²/n`.
pub fn loo_linking(
    summaries: &[GroupSummary],
    i: usize,
    estimator: Estimator,
) -> Result<LinkingModel> {
    let hyper = loo_hyperparams(summaries, i, estimator)?;
    let others: Vec<f64> = summaries
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, s)| s.sample_noise_variance())
        .collect::<Result<_>>()?;
    let scale2 = others.iter().sum::<f64>() / others.len() as f64;
    LinkingModel::new(hyper, scale2)
}

/// FAB t-intervals for every group with leave-one-out linking, in input order.
pub fn fab_all_groups(
    summaries: &[GroupSummary],
    alpha: f64,
    estimator: Estimator,
) -> Result<Vec<Interval>> {
    if summaries.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "FAB with leave-one-out linking needs at least 3 groups, got {}",
            summaries.len()
        )));
    }
    let solver = WSolver::new(alpha)?;
    (0..summaries.len())
        .into_par_iter()
        .map(|i| {
            let link = loo_linking(summaries, i, estimator)?;
            fab_interval_t_with(&solver, &summaries[i], &link)
        })
        .collect()
}
