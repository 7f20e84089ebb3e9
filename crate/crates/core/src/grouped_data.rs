//! Grouped observations, per-group sufficient statistics and estimation of
//! the across-group normal linking model `μ_i ~ N(φ, τ²)`.
//!
//! Two CSV layouts are understood: raw measurements (`group,value`) and
//! pre-aggregated summaries (`group,n,mean,sd`).

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::numerics::{minimize_scalar, ToleranceConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupObservations {
    pub group_id: String,
    pub values: Vec<f64>,
}

/// Sufficient statistics for one group.
///
/// `sd` is the within-group sample standard deviation (n − 1 denominator),
/// present only when `n ≥ 2`. `known_sigma`, when set, is a known
/// observation-level standard deviation and takes precedence for procedures
/// that treat the noise as known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    pub known_sigma: Option<f64>,
}

impl GroupSummary {
    pub fn from_sample(group_id: impl Into<String>, n: usize, mean: f64, sd: f64) -> Self {
        Self {
            group_id: group_id.into(),
            n,
            mean,
            sd: Some(sd),
            known_sigma: None,
        }
    }

    /// A single observation `z ~ N(μ, sigma²)` with known `sigma`.
    pub fn known(group_id: impl Into<String>, z: f64, sigma: f64) -> Self {
        Self {
            group_id: group_id.into(),
            n: 1,
            mean: z,
            sd: None,
            known_sigma: Some(sigma),
        }
    }

    /// Sampling variance of the group mean, `v_i = σ²/n`.
    pub fn noise_variance(&self) -> Result<f64> {
        let sigma = self.known_sigma.or(self.sd).ok_or_else(|| {
            Error::InsufficientData(format!(
                "group `{}` has no usable noise variance (n = {}, no known sigma)",
                self.group_id, self.n
            ))
        })?;
        Ok(sigma * sigma / self.n as f64)
    }

    /// Sampling variance of the mean computed from the sample sd only.
    pub fn sample_noise_variance(&self) -> Result<f64> {
        match self.sd {
            Some(sd) if self.n >= 2 => Ok(sd * sd / self.n as f64),
            _ => Err(Error::InsufficientData(format!(
                "group `{}` needs n >= 2 for a sample variance (n = {})",
                self.group_id, self.n
            ))),
        }
    }
}

/// Across-group normal linking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub phi: f64,
    pub tau2: f64,
}

impl HyperParams {
    pub fn new(phi: f64, tau2: f64) -> Result<Self> {
        if !phi.is_finite() || !tau2.is_finite() || tau2 < 0.0 {
            return Err(Error::domain(format!(
                "hyperparameters must be finite with tau2 >= 0, got phi = {phi}, tau2 = {tau2}"
            )));
        }
        Ok(Self { phi, tau2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Mom,
    Mle,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Mom => "mom",
            Estimator::Mle => "mle",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mom" => Ok(Estimator::Mom),
            "mle" => Ok(Estimator::Mle),
            other => Err(Error::domain(format!("unknown estimator `{other}`"))),
        }
    }
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(csv_err)?;
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data("empty input".into()));
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn parse_finite(field: &str, line: u64, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("{what} `{field}` is not a finite number"),
        }),
    }
}

/// Read raw `group,value` CSV; groups keep their order of first appearance.
pub fn ingest_raw<R: Read>(source: R) -> Result<Vec<GroupObservations>> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, &["group", "value"])?;
    let mut groups: Vec<GroupObservations> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty group id".into(),
            });
        }
        let value = parse_finite(&record[1], line, "value")?;
        match index.get(id) {
            Some(&k) => groups[k].values.push(value),
            None => {
                index.insert(id.to_owned(), groups.len());
                groups.push(GroupObservations {
                    group_id: id.to_owned(),
                    values: vec![value],
                });
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Data("input has a header but no data rows".into()));
    }
    Ok(groups)
}

/// Read aggregated `group,n,mean,sd` CSV. `sd` may be empty when `n = 1`.
pub fn read_summaries<R: Read>(source: R) -> Result<Vec<GroupSummary>> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, &["group", "n", "mean", "sd"])?;
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let id = record[0].to_owned();
        if seen.insert(id.clone(), line).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate group `{id}`"),
            });
        }
        let n: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("n `{}` is not a positive integer", &record[1]),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                line,
                message: "n must be at least 1".into(),
            });
        }
        let mean = parse_finite(&record[2], line, "mean")?;
        let sd = if record[3].is_empty() {
            None
        } else {
            let sd = parse_finite(&record[3], line, "sd")?;
            if sd < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("sd {sd} is negative"),
                });
            }
            Some(sd)
        };
        if n >= 2 && sd.is_none() {
            return Err(Error::Parse {
                line,
                message: "sd is required when n >= 2".into(),
            });
        }
        out.push(GroupSummary {
            group_id: id,
            n,
            mean,
            sd: if n >= 2 { sd } else { None },
            known_sigma: None,
        });
    }
    if out.is_empty() {
        return Err(Error::Data("input has a header but no data rows".into()));
    }
    Ok(out)
}

/// Write summaries in the aggregated CSV layout (9 significant digits).
pub fn write_summaries<W: Write>(sink: W, summaries: &[GroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["group", "n", "mean", "sd"])
        .map_err(csv_err)?;
    for s in summaries {
        let sd = s.sd.map(fmt_sig).unwrap_or_default();
        w.write_record([s.group_id.as_str(), &s.n.to_string(), &fmt_sig(s.mean), &sd])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Load summaries from a file in either layout, detected from the header.
/// Raw input is summarized with `min_n`.
pub fn load_summaries(path: &Path, min_n: usize) -> Result<Vec<GroupSummary>> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("").replace(' ', "");
    match header.as_str() {
        "group,value" => summarize(&ingest_raw(text.as_bytes())?, min_n),
        "group,n,mean,sd" => {
            let all = read_summaries(text.as_bytes())?;
            let kept: Vec<_> = all.into_iter().filter(|s| s.n >= min_n).collect();
            if kept.is_empty() {
                return Err(Error::Data(format!("no group has n >= {min_n}")));
            }
            Ok(kept)
        }
        "" => Err(Error::Data(format!("{} is empty", path.display()))),
        other => Err(Error::Parse {
            line: 1,
            message: format!(
                "unrecognised header `{other}` (expected `group,value` or `group,n,mean,sd`)"
            ),
        }),
    }
}

/// Per-group mean and sample sd, dropping groups with fewer than `min_n`
/// observations.
pub fn summarize(groups: &[GroupObservations], min_n: usize) -> Result<Vec<GroupSummary>> {
    if min_n == 0 {
        return Err(Error::domain("min_n must be at least 1"));
    }
    let out: Vec<GroupSummary> = groups
        .iter()
        .filter(|g| g.values.len() >= min_n && !g.values.is_empty())
        .map(|g| {
            let n = g.values.len();
            let mean = g.values.iter().sum::<f64>() / n as f64;
            let sd = (n >= 2).then(|| {
                let ss: f64 = g.values.iter().map(|v| (v - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            });
            GroupSummary {
                group_id: g.group_id.clone(),
                n,
                mean,
                sd,
                known_sigma: None,
            }
        })
        .collect();
    if out.is_empty() {
        return Err(Error::Data(format!(
            "every group has fewer than {min_n} observations"
        )));
    }
    Ok(out)
}

fn means_and_vars(summaries: &[GroupSummary]) -> Result<(Vec<f64>, Vec<f64>)> {
    let means = summaries.iter().map(|s| s.mean).collect();
    let vars = summaries
        .iter()
        .map(GroupSummary::noise_variance)
        .collect::<Result<_>>()?;
    Ok((means, vars))
}

fn require_groups(count: usize, needed: usize) -> Result<()> {
    if count < needed {
        return Err(Error::InsufficientData(format!(
            "need at least {needed} groups, got {count}"
        )));
    }
    Ok(())
}

/// Unweighted moment estimate from group means and their noise variances.
pub fn mom_from_moments(means: &[f64], vars: &[f64]) -> Result<HyperParams> {
    require_groups(means.len(), 2)?;
    let k = means.len() as f64;
    let phi = means.iter().sum::<f64>() / k;
    let spread = means.iter().map(|z| (z - phi).powi(2)).sum::<f64>() / (k - 1.0);
    let mean_v = vars.iter().sum::<f64>() / vars.len() as f64;
    HyperParams::new(phi, (spread - mean_v).max(0.0))
}

/// `φ̂` = mean of group means, `τ̂² = max(0, s²_means − mean(v_i))`.
pub fn mom_estimate(summaries: &[GroupSummary]) -> Result<HyperParams> {
    require_groups(summaries.len(), 2)?;
    let (means, vars) = means_and_vars(summaries)?;
    mom_from_moments(&means, &vars)
}

fn weighted_phi(means: &[f64], vars: &[f64], tau2: f64) -> f64 {
    let (num, den) = means
        .iter()
        .zip(vars)
        .fold((0.0, 0.0), |(num, den), (z, v)| {
            let w = 1.0 / (tau2 + v);
            (num + w * z, den + w)
        });
    num / den
}

fn profile_loglik(means: &[f64], vars: &[f64], tau2: f64) -> f64 {
    let phi = weighted_phi(means, vars, tau2);
    -0.5 * means
        .iter()
        .zip(vars)
        .map(|(z, v)| {
            let s = tau2 + v;
            s.ln() + (z - phi).powi(2) / s
        })
        .sum::<f64>()
}

const MLE_GRID_POINTS: usize = 161;

/// Marginal maximum likelihood for `z_i ~ N(φ, τ² + v_i)` by profiling `φ`.
pub fn mle_from_moments(means: &[f64], vars: &[f64]) -> Result<HyperParams> {
    require_groups(means.len(), 2)?;
    if vars.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InsufficientData(
            "maximum likelihood needs strictly positive noise variances".into(),
        ));
    }
    let k = means.len() as f64;
    let centre = means.iter().sum::<f64>() / k;
    let spread = means.iter().map(|z| (z - centre).powi(2)).sum::<f64>() / k;
    let mean_v = vars.iter().sum::<f64>() / k;
    let scale = spread + mean_v;
    let domain = ((1e-10 * scale).ln(), (1e4 * scale).ln());
    let tol = ToleranceConfig {
        abs_tol: 1e-10,
        rel_tol: 1e-12,
        max_iter: 200,
    };
    let (log_tau2, neg_ll) = minimize_scalar(
        |t| -profile_loglik(means, vars, t.exp()),
        domain,
        MLE_GRID_POINTS,
        &tol,
    )?;
    let at_zero = profile_loglik(means, vars, 0.0);
    let tau2 = if at_zero >= -neg_ll {
        0.0
    } else {
        log_tau2.exp()
    };
    HyperParams::new(weighted_phi(means, vars, tau2), tau2)
}

pub fn mle_estimate(summaries: &[GroupSummary]) -> Result<HyperParams> {
    require_groups(summaries.len(), 2)?;
    let (means, vars) = means_and_vars(summaries)?;
    mle_from_moments(&means, &vars)
}

pub fn estimate(summaries: &[GroupSummary], estimator: Estimator) -> Result<HyperParams> {
    match estimator {
        Estimator::Mom => mom_estimate(summaries),
        Estimator::Mle => mle_estimate(summaries),
    }
}

pub fn estimate_from_moments(
    means: &[f64],
    vars: &[f64],
    estimator: Estimator,
) -> Result<HyperParams> {
    match estimator {
        Estimator::Mom => mom_from_moments(means, vars),
        Estimator::Mle => mle_from_moments(means, vars),
    }
}

/// Hyperparameters estimated from every group except `i`.
pub fn loo_hyperparams(
    summaries: &[GroupSummary],
    i: usize,
    estimator: Estimator,
) -> Result<HyperParams> {
    require_groups(summaries.len(), 3)?;
    if i >= summaries.len() {
        return Err(Error::domain(format!(
            "group index {i} out of range for {} groups",
            summaries.len()
        )));
    }
    let others: Vec<GroupSummary> = summaries
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, s)| s.clone())
        .collect();
    estimate(&others, estimator)
}
