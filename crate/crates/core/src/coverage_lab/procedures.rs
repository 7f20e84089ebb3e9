//! Running any interval procedure over a set of groups.

use crate::direct_intervals::{umau_t, umau_z};
use crate::eb_normal::{eb_interval, NormalModelSpec};
use crate::error::{Error, Result};
use crate::fab::{fab_interval_t_with, fab_interval_z_with, loo_linking, LinkingModel, WSolver};
use crate::grouped_data::{estimate, loo_hyperparams, Estimator, GroupSummary, HyperParams};
use crate::interval::{Interval, Method};
use crate::numerics::RngStream;
use crate::quantile_bound::{two_sided_from, BootstrapConfig, BootstrapEnsemble};

/// Settings shared by every procedure in [`compute_intervals`].
#[derive(Debug, Clone)]
pub struct ProcedureOptions {
    pub alpha: f64,
    pub estimator: Estimator,
    /// When set, used as the linking model instead of estimating it.
    pub fixed_hyper: Option<HyperParams>,
    pub bootstrap_replicates: usize,
    pub rng: RngStream,
}

impl ProcedureOptions {
    pub fn new(alpha: f64, estimator: Estimator, seed: u64) -> Self {
        Self {
            alpha,
            estimator,
            fixed_hyper: None,
            bootstrap_replicates: 200,
            rng: RngStream::new(seed, 0),
        }
    }
}

fn known_sigma(s: &GroupSummary) -> Result<f64> {
    Ok(s.noise_variance()?.sqrt())
}

/// Mean of the other groups' `sd²/n`, never touching group `i`.
fn others_scale2(summaries: &[GroupSummary], i: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (j, s) in summaries.iter().enumerate() {
        if j != i {
            total += s.sample_noise_variance()?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData(
            "t-based FAB needs at least one other group".into(),
        ));
    }
    Ok(total / count as f64)
}

/// Intervals of one method for every group.
///
/// The outer error covers failures that affect all groups at once (for
/// example, hyperparameters that cannot be estimated); per-group failures
/// are reported in place.
pub fn compute_intervals(
    summaries: &[GroupSummary],
    method: Method,
    opts: &ProcedureOptions,
) -> Result<Vec<Result<Interval>>> {
    let alpha = opts.alpha;
    let out = match method {
        Method::UmauZ => summaries
            .iter()
            .map(|s| umau_z(s.mean, known_sigma(s)?, alpha))
            .collect(),
        Method::UmauT => summaries.iter().map(|s| umau_t(s, alpha)).collect(),
        Method::Eb => {
            let hyper = match opts.fixed_hyper {
                Some(h) => h,
                None => estimate(summaries, opts.estimator)?,
            };
            summaries
                .iter()
                .map(|s| {
                    let spec = NormalModelSpec::new(hyper, s.noise_variance()?)?;
                    eb_interval(s.mean, &spec, alpha)
                })
                .collect()
        }
        Method::FabZ => {
            let solver = WSolver::new(alpha)?;
            (0..summaries.len())
                .map(|i| {
                    let s = &summaries[i];
                    let sigma = known_sigma(s)?;
                    let hyper = match opts.fixed_hyper {
                        Some(h) => h,
                        None => loo_hyperparams(summaries, i, opts.estimator)?,
                    };
                    let link = LinkingModel::for_known_sigma(hyper, sigma)?;
                    fab_interval_z_with(&solver, s.mean, sigma, &link)
                })
                .collect()
        }
        Method::FabT => {
            let solver = WSolver::new(alpha)?;
            (0..summaries.len())
                .map(|i| {
                    let link = match opts.fixed_hyper {
                        Some(h) => LinkingModel::new(h, others_scale2(summaries, i)?)?,
                        None => loo_linking(summaries, i, opts.estimator)?,
                    };
                    fab_interval_t_with(&solver, &summaries[i], &link)
                })
                .collect()
        }
        Method::QBound => {
            let mut cfg =
                BootstrapConfig::new(opts.bootstrap_replicates, opts.estimator, opts.rng.clone())?;
            cfg.known_hyper = opts.fixed_hyper;
            let ensemble = BootstrapEnsemble::fit(summaries, &cfg)?;
            summaries
                .iter()
                .map(|s| two_sided_from(&ensemble, s.mean, s.noise_variance()?, alpha))
                .collect()
        }
    };
    Ok(out)
}

/// Like [`compute_intervals`] but failing on the first per-group error.
pub fn compute_intervals_strict(
    summaries: &[GroupSummary],
    method: Method,
    opts: &ProcedureOptions,
) -> Result<Vec<Interval>> {
    compute_intervals(summaries, method, opts)?
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups() -> Vec<GroupSummary> {
        [(4, 1.0, 0.8), (6, 2.0, 1.1), (9, 0.5, 0.9), (5, 1.4, 1.3)]
            .iter()
            .enumerate()
            .map(|(i, &(n, m, sd))| GroupSummary::from_sample(format!("g{i}"), n, m, sd))
            .collect()
    }

    #[test]
    fn every_method_runs() {
        let opts = ProcedureOptions::new(0.05, Estimator::Mom, 1);
        for method in Method::ALL {
            let ivs = compute_intervals_strict(&groups(), method, &opts).unwrap();
            assert_eq!(ivs.len(), 4);
            assert!(ivs.iter().all(|iv| iv.method == method));
        }
    }

    #[test]
    fn per_group_failure_is_local() {
        let mut g = groups();
        g.push(GroupSummary::known("solo", 1.0, 0.5));
        let opts = ProcedureOptions::new(0.05, Estimator::Mom, 1);
        let out = compute_intervals(&g, Method::UmauT, &opts).unwrap();
        assert!(out[..4].iter().all(|r| r.is_ok()));
        assert!(matches!(out[4], Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fixed_hyper_bypasses_estimation() {
        let mut opts = ProcedureOptions::new(0.05, Estimator::Mom, 1);
        let hyper = HyperParams::new(0.0, 1e8).unwrap();
        opts.fixed_hyper = Some(hyper);
        let eb = compute_intervals_strict(&groups(), Method::Eb, &opts).unwrap();
        let umau = compute_intervals_strict(&groups(), Method::UmauZ, &opts).unwrap();
        for (a, b) in eb.iter().zip(&umau) {
            assert!((a.lower - b.lower).abs() < 1e-6 && (a.upper - b.upper).abs() < 1e-6);
        }
    }
}
