use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupcover::{Estimator, Method};

#[derive(Debug, Parser)]
#[command(
    name = "groupcover",
    version,
    about = "Confidence intervals for many group means",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Miscoverage level; intervals have level 1 - alpha
    #[arg(long, global = true, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,

    /// Estimator for the across-group hyperparameters
    #[arg(long, global = true, value_enum, default_value_t = EstimatorArg::Mom)]
    pub estimator: EstimatorArg,

    /// Master seed for every random stream
    #[arg(long, global = true, env = "GROUPCOVER_SEED", hide_env_values = true)]
    pub seed: Option<u64>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write output here instead of standard output
    #[arg(short, long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the across-group mean and variance
    Fit(FitArgs),
    /// Interval for every group
    Intervals(IntervalsArgs),
    /// Exact coverage of the empirical Bayes interval over a grid of true means
    CoverageCurve(CurveArgs),
    /// Monte Carlo coverage study described by a scenario file
    Simulate(SimulateArgs),
    /// Compare interval widths of two procedures on the same data
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Raw `group,value` or aggregated `group,n,mean,sd` CSV
    #[arg(value_name = "INPUT")]
    pub input: PathBuf,

    /// Drop groups with fewer observations than this
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_n: u64,

    /// Treat the noise as known with this per-observation standard deviation
    #[arg(long, value_name = "SD")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Also write the per-group summaries as aggregated CSV
    #[arg(long, value_name = "PATH")]
    pub emit_summaries: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntervalsArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Procedure: umau, eb, fab, qbound, or an explicit tag (umau_z, umau_t, fab_z, fab_t)
    #[arg(long, default_value = "fab")]
    pub method: String,

    /// Bootstrap replicates for qbound
    #[arg(long, default_value_t = 200)]
    pub bootstrap_b: usize,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Prior mean
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub phi: f64,

    /// Prior variance
    #[arg(long, default_value_t = 1.0)]
    pub tau2: f64,

    /// Sampling variance of the observation
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,

    /// True-mean grid as lo:hi:step
    #[arg(long, allow_hyphen_values = true, default_value = "-6:6:0.1")]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file
    #[arg(long, value_name = "PATH")]
    pub scenario: PathBuf,

    /// Override the scenario's replication count
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Procedure whose narrowness is counted
    #[arg(long, default_value = "fab")]
    pub a: String,

    /// Baseline procedure
    #[arg(long, default_value = "umau")]
    pub b: String,

    /// Bootstrap replicates for qbound
    #[arg(long, default_value_t = 200)]
    pub bootstrap_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mom,
    Mle,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mom => Estimator::Mom,
            EstimatorArg::Mle => Estimator::Mle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let alpha: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

/// Resolve a family name to a concrete procedure. Families pick the
/// known-noise variant when `--sigma` is given.
pub fn resolve_method(name: &str, known_sigma: bool) -> Result<Method, String> {
    let family = |z, t| if known_sigma { z } else { t };
    match name {
        "umau" => Ok(family(Method::UmauZ, Method::UmauT)),
        "fab" => Ok(family(Method::FabZ, Method::FabT)),
        other => other.parse().map_err(|_| {
            format!(
                "unknown method `{other}` (expected umau, eb, fab, qbound, umau_z, umau_t, fab_z or fab_t)"
            )
        }),
    }
}

/// Parse `lo:hi:step` into an inclusive point count.
pub fn parse_grid(spec: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(format!("grid `{spec}` is not lo:hi:step"));
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("grid value `{s}` is not a finite number"))
    };
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if hi <= lo || step <= 0.0 {
        return Err(format!("grid `{spec}` needs lo < hi and step > 0"));
    }
    let intervals = ((hi - lo) / step).round();
    if (lo + intervals * step - hi).abs() > 1e-9 * step.max(hi.abs()) {
        return Err(format!("grid step {step} does not divide [{lo}, {hi}]"));
    }
    if intervals > 1e7 {
        return Err(format!("grid `{spec}` has too many points"));
    }
    Ok((lo, hi, intervals as usize + 1))
}
