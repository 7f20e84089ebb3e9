//! Scenario files: the simulated world and the procedures to run in it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped_data::{Estimator, HyperParams};
use crate::interval::Method;
use crate::numerics::RngStream;

/// Distribution of the true group means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GDist {
    Normal {
        phi: f64,
        tau2: f64,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// The means themselves, one per group.
    Points {
        values: Vec<f64>,
    },
}

impl GDist {
    /// Mean and variance of the distribution, used as oracle hyperparameters.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            GDist::Normal { phi, tau2 } => (*phi, *tau2),
            GDist::Mixture {
                weights,
                means,
                variances,
            } => {
                let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
                let second: f64 = weights
                    .iter()
                    .zip(means.iter().zip(variances))
                    .map(|(w, (m, v))| w * (v + m * m))
                    .sum();
                (mean, (second - mean * mean).max(0.0))
            }
            GDist::Points { values } => {
                let k = values.len() as f64;
                let mean = values.iter().sum::<f64>() / k;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
                (mean, var)
            }
        }
    }

    fn draw(&self, index: usize, rng: &mut RngStream) -> f64 {
        match self {
            GDist::Normal { phi, tau2 } => rng.normal(*phi, tau2.sqrt()),
            GDist::Mixture {
                weights,
                means,
                variances,
            } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut pick = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                rng.normal(means[pick], variances[pick].sqrt())
            }
            GDist::Points { values } => values[index],
        }
    }

    fn validate(&self, n_groups: usize) -> Result<()> {
        match self {
            GDist::Normal { phi, tau2 } => {
                if !phi.is_finite() || !(*tau2 >= 0.0) || !tau2.is_finite() {
                    return Err(Error::Scenario(format!(
                        "normal g_dist needs finite phi and tau2 >= 0, got ({phi}, {tau2})"
                    )));
                }
            }
            GDist::Mixture {
                weights,
                means,
                variances,
            } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != variances.len()
                {
                    return Err(Error::Scenario(
                        "mixture weights, means and variances must have equal, non-zero length"
                            .into(),
                    ));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::Scenario(
                        "mixture weights must be non-negative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Scenario(format!(
                        "mixture weights must sum to 1, got {total}"
                    )));
                }
                if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::Scenario("mixture variances must be positive".into()));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Scenario("mixture means must be finite".into()));
                }
            }
            GDist::Points { values } => {
                if values.len() != n_groups {
                    return Err(Error::Scenario(format!(
                        "points g_dist needs one value per group ({n_groups}), got {}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Scenario("point means must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Per-group noise standard deviations.
///
/// Without `per_group_n` this is the sd of the single observation `Z_i`;
/// with it, the sd of each of the `n_i` raw observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Noise {
    Constant {
        sigma: f64,
    },
    List {
        sigmas: Vec<f64>,
    },
    /// Drawn once, uniformly on `[lo, hi]`.
    Range {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerGroupN {
    Constant(usize),
    List(Vec<usize>),
}

impl PerGroupN {
    pub fn get(&self, i: usize) -> usize {
        match self {
            PerGroupN::Constant(n) => *n,
            PerGroupN::List(ns) => ns[i],
        }
    }
}

/// Where procedures get their linking model from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Linking {
    /// Re-estimated from the simulated data in every replication.
    #[default]
    Estimated,
    /// The mean and variance of `g_dist`.
    Oracle,
    Fixed {
        phi: f64,
        tau2: f64,
    },
}

/// Whether true means are held fixed across replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// Drawn once; coverage is conditional on each group's mean.
    #[default]
    Fixed,
    /// Redrawn every replication; coverage is marginal over `g_dist`.
    Redraw,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_reps() -> usize {
    10_000
}

fn default_bootstrap() -> usize {
    200
}

fn default_procedures() -> Vec<Method> {
    vec![Method::UmauZ, Method::Eb]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n_groups: usize,
    pub g_dist: GDist,
    /// True means that override the last `planted.len()` groups.
    #[serde(default)]
    pub planted: Vec<f64>,
    pub noise: Noise,
    #[serde(default)]
    pub per_group_n: Option<PerGroupN>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_procedures")]
    pub procedures: Vec<Method>,
    #[serde(default)]
    pub linking: Linking,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub mu_mode: MuMode,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_b: usize,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        if self.n_groups == 0 {
            return bad("n_groups must be positive".into());
        }
        self.g_dist.validate(self.n_groups)?;
        if self.planted.len() > self.n_groups {
            return bad(format!(
                "{} planted means for {} groups",
                self.planted.len(),
                self.n_groups
            ));
        }
        if self.planted.iter().any(|m| !m.is_finite()) {
            return bad("planted means must be finite".into());
        }
        match &self.noise {
            Noise::Constant { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                return bad(format!("noise sigma must be positive, got {sigma}"));
            }
            Noise::List { sigmas } => {
                if sigmas.len() != self.n_groups {
                    return bad(format!(
                        "noise list needs {} sigmas, got {}",
                        self.n_groups,
                        sigmas.len()
                    ));
                }
                if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("noise sigmas must be positive".into());
                }
            }
            Noise::Range { lo, hi } if !(*lo > 0.0 && lo <= hi && hi.is_finite()) => {
                return bad(format!("noise range needs 0 < lo <= hi, got [{lo}, {hi}]"));
            }
            _ => {}
        }
        match &self.per_group_n {
            Some(PerGroupN::Constant(n)) if *n == 0 => {
                return bad("per_group_n must be positive".into());
            }
            Some(PerGroupN::List(ns)) => {
                if ns.len() != self.n_groups {
                    return bad(format!(
                        "per_group_n list needs {} entries, got {}",
                        self.n_groups,
                        ns.len()
                    ));
                }
                if ns.contains(&0) {
                    return bad("per_group_n entries must be positive".into());
                }
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.procedures.is_empty() {
            return bad("no procedures requested".into());
        }
        if self.reps < 100 {
            return bad(format!("reps must be at least 100, got {}", self.reps));
        }
        if let Linking::Fixed { phi, tau2 } = self.linking {
            if let Err(e) = HyperParams::new(phi, tau2) {
                return bad(format!("fixed linking: {e}"));
            }
        }
        let estimated = self.linking == Linking::Estimated;
        for &m in &self.procedures {
            if m.needs_replicates() {
                let ok = (0..self.n_groups)
                    .all(|i| self.per_group_n.as_ref().is_some_and(|n| n.get(i) >= 2));
                if !ok {
                    return bad(format!("{m} needs per_group_n >= 2 for every group"));
                }
            }
            let needed = match m {
                Method::FabZ | Method::FabT if estimated => 3,
                Method::Eb | Method::QBound if estimated => 2,
                Method::FabT => 2,
                _ => 1,
            };
            if self.n_groups < needed {
                return bad(format!("{m} needs at least {needed} groups"));
            }
            if m == Method::QBound && self.bootstrap_b < 50 {
                return bad(format!(
                    "bootstrap_b must be at least 50, got {}",
                    self.bootstrap_b
                ));
            }
        }
        Ok(())
    }

    /// Hyperparameters handed to procedures, or `None` to re-estimate.
    pub fn linking_hyper(&self) -> Option<HyperParams> {
        match self.linking {
            Linking::Estimated => None,
            Linking::Oracle => {
                let (phi, tau2) = self.g_dist.moments();
                Some(HyperParams { phi, tau2 })
            }
            Linking::Fixed { phi, tau2 } => Some(HyperParams { phi, tau2 }),
        }
    }

    /// Draw one mean per group (planted groups last).
    pub(crate) fn draw_mus(&self, rng: &mut RngStream) -> Vec<f64> {
        let free = self.n_groups - self.planted.len();
        (0..self.n_groups)
            .map(|i| {
                if i < free {
                    self.g_dist.draw(i, rng)
                } else {
                    self.planted[i - free]
                }
            })
            .collect()
    }

    pub(crate) fn draw_sigmas(&self, rng: &mut RngStream) -> Vec<f64> {
        match &self.noise {
            Noise::Constant { sigma } => vec![*sigma; self.n_groups],
            Noise::List { sigmas } => sigmas.clone(),
            Noise::Range { lo, hi } => (0..self.n_groups)
                .map(|_| lo + (hi - lo) * rng.uniform())
                .collect(),
        }
    }

    pub(crate) fn is_planted(&self, i: usize) -> bool {
        i >= self.n_groups - self.planted.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "basic",
        "n_groups": 10,
        "g_dist": {"type": "normal", "phi": 0, "tau2": 1},
        "noise": {"type": "constant", "sigma": 1}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.alpha, 0.05);
        assert_eq!(s.reps, 10_000);
        assert_eq!(s.linking, Linking::Estimated);
        assert_eq!(s.mu_mode, MuMode::Fixed);
        assert_eq!(s.procedures, vec![Method::UmauZ, Method::Eb]);
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_invalid() {
        let mixture = r#"{
            "name": "m", "n_groups": 5,
            "g_dist": {"type": "mixture", "weights": [0.5, 0.4], "means": [0, 1], "variances": [1, 1]},
            "noise": {"type": "constant", "sigma": 1}
        }"#;
        assert!(matches!(
            Scenario::from_json(mixture),
            Err(Error::Scenario(_))
        ));
        let few_reps = MINIMAL.replace("\"name\"", "\"reps\": 99, \"name\"");
        assert!(Scenario::from_json(&few_reps).is_err());
        let t_without_n = MINIMAL.replace("\"name\"", "\"procedures\": [\"umau_t\"], \"name\"");
        assert!(Scenario::from_json(&t_without_n).is_err());
        let typo = MINIMAL.replace("\"name\"", "\"repz\": 100, \"name\"");
        assert!(matches!(Scenario::from_json(&typo), Err(Error::Json(_))));
    }

    #[test]
    fn mixture_moments() {
        let g = GDist::Mixture {
            weights: vec![0.5, 0.5],
            means: vec![-2.0, 2.0],
            variances: vec![1.0, 1.0],
        };
        assert_eq!(g.moments(), (0.0, 5.0));
    }

    #[test]
    fn planted_means_go_last() {
        let mut s = Scenario::from_json(MINIMAL).unwrap();
        s.planted = vec![4.0, -4.0];
        let mus = s.draw_mus(&mut RngStream::new(1, 0));
        assert_eq!(&mus[8..], &[4.0, -4.0]);
        assert!(s.is_planted(8) && !s.is_planted(7));
    }
}
