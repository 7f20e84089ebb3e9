//! Monte Carlo measurement of group-specific and across-group coverage.
//!
//! A [`Scenario`] fixes the true means (or their distribution), the noise
//! and the procedures to run; [`simulate_coverage`] replicates the data and
//! tallies, per group and method, how often the interval contains the truth.

mod procedures;
mod scenario;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use procedures::{compute_intervals, compute_intervals_strict, ProcedureOptions};
pub use scenario::{GDist, Linking, MuMode, Noise, PerGroupN, Scenario};

use crate::eb_normal::{exact_eb_coverage, NormalModelSpec};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::grouped_data::GroupSummary;
use crate::interval::{check_alpha, Method};
use crate::numerics::special::std_pdf;
use crate::numerics::RngStream;

/// Replications per work unit. Fixed so that floating-point sums are the
/// same however the units are scheduled.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoverage {
    pub group: String,
    /// `None` when means are redrawn every replication.
    pub true_mu: Option<f64>,
    pub method: Method,
    pub coverage: f64,
    pub se: f64,
    pub mean_width: f64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub average_coverage: f64,
    pub min_coverage: f64,
    pub mean_width: f64,
    /// Failed (group, replication) evaluations over all attempted.
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrowerFraction {
    pub a: Method,
    pub b: Method,
    /// Fraction of groups whose mean width under `a` is below that under `b`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: String,
    pub reps: usize,
    pub alpha: f64,
    pub per_group: Vec<GroupCoverage>,
    pub methods: Vec<MethodSummary>,
    pub narrower: Vec<NarrowerFraction>,
}

impl CoverageReport {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-group rows of one method, in group order.
    pub fn groups(&self, method: Method) -> impl Iterator<Item = &GroupCoverage> {
        self.per_group.iter().filter(move |g| g.method == method)
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut sink, self)?;
        writeln!(sink)?;
        Ok(())
    }

    /// CSV `group,true_mu,method,coverage,se,mean_width`.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "group,true_mu,method,coverage,se,mean_width")?;
        for g in &self.per_group {
            writeln!(
                sink,
                "{},{},{},{},{},{}",
                g.group,
                g.true_mu.map(fmt_sig).unwrap_or_default(),
                g.method,
                fmt_sig(g.coverage),
                fmt_sig(g.se),
                fmt_sig(g.mean_width)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    covered: u64,
    ok: u64,
    failed: u64,
    width_sum: f64,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.covered += other.covered;
        self.ok += other.ok;
        self.failed += other.failed;
        self.width_sum += other.width_sum;
    }
}

/// Tallies indexed `[method][group]`.
type Tallies = Vec<Vec<Tally>>;

fn sample_group(
    id: String,
    mu: f64,
    sigma: f64,
    n: Option<usize>,
    rng: &mut RngStream,
) -> GroupSummary {
    match n {
        None => GroupSummary::known(id, rng.normal(mu, sigma), sigma),
        Some(n) => {
            // Welford's update over the raw draws.
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 0..n {
                let x = rng.normal(mu, sigma);
                let delta = x - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (x - mean);
            }
            let mut s = GroupSummary::from_sample(id, n, mean, 0.0);
            s.sd = (n >= 2).then(|| (m2 / (n - 1) as f64).sqrt());
            s.known_sigma = Some(sigma);
            s
        }
    }
}

struct World<'a> {
    scenario: &'a Scenario,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    ids: Vec<String>,
}

impl World<'_> {
    fn replicate(&self, rep: usize, tallies: &mut Tallies) {
        let sc = self.scenario;
        let mut rng = RngStream::new(sc.seed, rep as u64 + 1);
        let mus = match sc.mu_mode {
            MuMode::Fixed => self.mus.clone(),
            MuMode::Redraw => sc.draw_mus(&mut rng),
        };
        let summaries: Vec<GroupSummary> = (0..sc.n_groups)
            .map(|i| {
                let n = sc.per_group_n.as_ref().map(|p| p.get(i));
                sample_group(self.ids[i].clone(), mus[i], self.sigmas[i], n, &mut rng)
            })
            .collect();
        let opts = ProcedureOptions {
            alpha: sc.alpha,
            estimator: sc.estimator,
            fixed_hyper: sc.linking_hyper(),
            bootstrap_replicates: sc.bootstrap_b,
            rng: RngStream::new(sc.seed, rep as u64 + 1),
        };
        for (m, &method) in sc.procedures.iter().enumerate() {
            match compute_intervals(&summaries, method, &opts) {
                Ok(results) => {
                    for (i, res) in results.into_iter().enumerate() {
                        let t = &mut tallies[m][i];
                        match res {
                            Ok(iv) => {
                                t.ok += 1;
                                t.covered += u64::from(iv.contains(mus[i]));
                                t.width_sum += iv.width();
                            }
                            Err(_) => t.failed += 1,
                        }
                    }
                }
                Err(_) => tallies[m].iter_mut().for_each(|t| t.failed += 1),
            }
        }
    }
}

/// Coverage of every requested procedure in `scenario`. Deterministic in
/// the scenario (including its seed), independent of thread count.
pub fn simulate_coverage(scenario: &Scenario) -> Result<CoverageReport> {
    scenario.validate()?;
    let mut setup = RngStream::new(scenario.seed, 0);
    let mus = scenario.draw_mus(&mut setup);
    let sigmas = scenario.draw_sigmas(&mut setup);
    let world = World {
        scenario,
        mus,
        sigmas,
        ids: (0..scenario.n_groups)
            .map(|i| format!("g{}", i + 1))
            .collect(),
    };
    let methods = scenario.procedures.len();
    let empty: Tallies = vec![vec![Tally::default(); scenario.n_groups]; methods];
    let chunks = scenario.reps.div_ceil(CHUNK);
    let partials: Vec<Tallies> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tallies = empty.clone();
            for rep in c * CHUNK..((c + 1) * CHUNK).min(scenario.reps) {
                world.replicate(rep, &mut tallies);
            }
            tallies
        })
        .collect();
    let mut totals = empty;
    for part in &partials {
        for (tm, pm) in totals.iter_mut().zip(part) {
            for (t, p) in tm.iter_mut().zip(pm) {
                t.merge(p);
            }
        }
    }
    Ok(build_report(&world, &totals))
}

fn build_report(world: &World<'_>, totals: &Tallies) -> CoverageReport {
    let sc = world.scenario;
    let mut per_group = Vec::new();
    let mut methods = Vec::new();
    for (m, &method) in sc.procedures.iter().enumerate() {
        let rows: Vec<GroupCoverage> = totals[m]
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (coverage, mean_width) = if t.ok > 0 {
                    (t.covered as f64 / t.ok as f64, t.width_sum / t.ok as f64)
                } else {
                    (f64::NAN, f64::NAN)
                };
                let true_mu = match sc.mu_mode {
                    MuMode::Fixed => Some(world.mus[i]),
                    MuMode::Redraw => sc.is_planted(i).then(|| world.mus[i]),
                };
                GroupCoverage {
                    group: world.ids[i].clone(),
                    true_mu,
                    method,
                    coverage,
                    se: (coverage * (1.0 - coverage) / t.ok as f64).sqrt(),
                    mean_width,
                    failures: t.failed,
                }
            })
            .collect();
        let valid: Vec<&GroupCoverage> = rows.iter().filter(|r| r.coverage.is_finite()).collect();
        let k = valid.len().max(1) as f64;
        let failed: u64 = totals[m].iter().map(|t| t.failed).sum();
        let attempted = (sc.reps * sc.n_groups) as f64;
        methods.push(MethodSummary {
            method,
            average_coverage: valid.iter().map(|r| r.coverage).sum::<f64>() / k,
            min_coverage: valid
                .iter()
                .map(|r| r.coverage)
                .fold(f64::INFINITY, f64::min),
            mean_width: valid.iter().map(|r| r.mean_width).sum::<f64>() / k,
            failure_rate: failed as f64 / attempted,
        });
        per_group.extend(rows);
    }
    let mut narrower = Vec::new();
    let procs = &sc.procedures;
    for a in 0..procs.len() {
        for b in a + 1..procs.len() {
            let wins = (0..sc.n_groups)
                .filter(|&i| {
                    let wa = totals[a][i].width_sum / totals[a][i].ok as f64;
                    let wb = totals[b][i].width_sum / totals[b][i].ok as f64;
                    wa < wb
                })
                .count();
            narrower.push(NarrowerFraction {
                a: procs[a],
                b: procs[b],
                fraction: wins as f64 / sc.n_groups as f64,
            });
        }
    }
    CoverageReport {
        scenario: sc.name.clone(),
        reps: sc.reps,
        alpha: sc.alpha,
        per_group,
        methods,
        narrower,
    }
}

/// `∫ Pr(μ ∈ C_B(Z) | μ) g(μ) dμ` for `g = N(φ, τ²)`, by composite Simpson
/// over `φ ± 10τ`; equals `1 − α` up to quadrature error.
pub fn average_coverage_identity_check(
    spec: &NormalModelSpec,
    alpha: f64,
    quad_points: usize,
) -> Result<f64> {
    check_alpha(alpha)?;
    if quad_points < 100 {
        return Err(Error::domain(format!(
            "quad_points must be at least 100, got {quad_points}"
        )));
    }
    let intervals = quad_points + quad_points % 2;
    let tau = spec.hyper.tau2.sqrt();
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / intervals as f64;
    let mut sum = 0.0;
    for k in 0..=intervals {
        let x = lo + h * k as f64;
        let weight = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += weight * exact_eb_coverage(spec.hyper.phi + tau * x, spec, alpha)? * std_pdf(x);
    }
    Ok(sum * h / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthComparison {
    pub a: Method,
    pub b: Method,
    pub groups: usize,
    /// Fraction of groups where `a` is strictly narrower than `b`.
    pub fraction_narrower: f64,
    /// Across-group mean of `width_b / width_a`.
    pub mean_width_ratio: f64,
}

/// Compare two procedures on observed data, group by group.
pub fn width_comparison(
    summaries: &[GroupSummary],
    methods: (Method, Method),
    opts: &ProcedureOptions,
) -> Result<WidthComparison> {
    let (a, b) = methods;
    let ia = compute_intervals_strict(summaries, a, opts)?;
    let ib = compute_intervals_strict(summaries, b, opts)?;
    if ia.is_empty() {
        return Err(Error::InsufficientData("no groups to compare".into()));
    }
    let k = ia.len() as f64;
    let narrower = ia
        .iter()
        .zip(&ib)
        .filter(|(x, y)| x.width() < y.width())
        .count();
    let ratio = ia
        .iter()
        .zip(&ib)
        .map(|(x, y)| y.width() / x.width())
        .sum::<f64>()
        / k;
    Ok(WidthComparison {
        a,
        b,
        groups: ia.len(),
        fraction_narrower: narrower as f64 / k,
        mean_width_ratio: ratio,
    })
}
