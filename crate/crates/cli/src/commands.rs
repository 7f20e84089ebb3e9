use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use groupcover::coverage_lab::{
    compute_intervals, simulate_coverage, width_comparison, ProcedureOptions, Scenario,
};
use groupcover::eb_normal::{coverage_curve, linspace, write_coverage_curve, NormalModelSpec};
use groupcover::format::fmt_sig;
use groupcover::grouped_data::{estimate, load_summaries, write_summaries};
use groupcover::{Error, Estimator, GroupSummary, Interval, Method};

use crate::args::{
    parse_grid, resolve_method, Cli, Command, CommonArgs, CompareArgs, CurveArgs, FitArgs, Format,
    InputArgs, IntervalsArgs, SimulateArgs,
};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let mut out = open_output(common)?;
    match &cli.command {
        Command::Fit(args) => fit(common, args, &mut out)?,
        Command::Intervals(args) => intervals(common, args, &mut out)?,
        Command::CoverageCurve(args) => curve(common, args, &mut out)?,
        Command::Simulate(args) => simulate(common, args, &mut out)?,
        Command::Compare(args) => compare(common, args, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn open_output(common: &CommonArgs) -> Result<Box<dyn Write>> {
    Ok(match &common.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(input: &InputArgs) -> Result<Vec<GroupSummary>> {
    let mut groups = load_summaries(&input.input, input.min_n as usize)
        .map_err(|e| with_path(e, &input.input))?;
    if let Some(sigma) = input.sigma {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::Usage(format!(
                "--sigma must be positive, got {sigma}"
            )));
        }
        for g in &mut groups {
            g.known_sigma = Some(sigma);
        }
    }
    info!(
        "loaded {} groups from {}",
        groups.len(),
        input.input.display()
    );
    Ok(groups)
}

/// Name the file in I/O failures, which otherwise carry only the OS message.
fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(e) => Error::Data(format!("cannot read {}: {e}", path.display())),
        e => e,
    }
}

fn options(common: &CommonArgs, bootstrap_b: usize) -> ProcedureOptions {
    let mut opts = ProcedureOptions::new(
        common.alpha,
        common.estimator.into(),
        common.seed.unwrap_or(0),
    );
    opts.bootstrap_replicates = bootstrap_b;
    opts
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    phi: f64,
    tau2: f64,
    estimator: Estimator,
    groups: usize,
}

fn fit(common: &CommonArgs, args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let groups = load(&args.input)?;
    if let Some(path) = &args.emit_summaries {
        write_summaries(BufWriter::new(File::create(path)?), &groups)?;
    }
    let estimator: Estimator = common.estimator.into();
    let hyper = estimate(&groups, estimator)?;
    let row = FitRow {
        phi: hyper.phi,
        tau2: hyper.tau2,
        estimator,
        groups: groups.len(),
    };
    match common.format {
        Format::Csv => {
            writeln!(out, "phi,tau2,estimator,groups")?;
            writeln!(
                out,
                "{},{},{},{}",
                fmt_sig(row.phi),
                fmt_sig(row.tau2),
                estimator,
                row.groups
            )?;
        }
        Format::Json => write_json(out, &row)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct IntervalRow<'a> {
    group: &'a str,
    n: usize,
    mean: f64,
    method: Method,
    alpha: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    width: Option<f64>,
}

/// Run one procedure; per-group failures are reported and left blank
/// unless every group fails.
fn run_method(
    groups: &[GroupSummary],
    method: Method,
    opts: &ProcedureOptions,
) -> Result<Vec<Option<Interval>>> {
    let results = compute_intervals(groups, method, opts)?;
    if results.iter().all(|r| r.is_err()) {
        if let Some(Err(e)) = results.into_iter().next() {
            return Err(e.into());
        }
        return Ok(Vec::new());
    }
    Ok(results
        .into_iter()
        .zip(groups)
        .map(|(r, g)| match r {
            Ok(iv) => Some(iv),
            Err(e) => {
                warn!("{method} interval for group `{}` failed: {e}", g.group_id);
                None
            }
        })
        .collect())
}

fn intervals(common: &CommonArgs, args: &IntervalsArgs, out: &mut dyn Write) -> Result<()> {
    let method =
        resolve_method(&args.method, args.input.sigma.is_some()).map_err(CliError::Usage)?;
    let groups = load(&args.input)?;
    let results = run_method(&groups, method, &options(common, args.bootstrap_b))?;
    let rows: Vec<IntervalRow> = groups
        .iter()
        .zip(&results)
        .map(|(g, iv)| IntervalRow {
            group: &g.group_id,
            n: g.n,
            mean: g.mean,
            method,
            alpha: common.alpha,
            lower: iv.map(|iv| iv.lower),
            upper: iv.map(|iv| iv.upper),
            width: iv.map(|iv| iv.width()),
        })
        .collect();
    match common.format {
        Format::Csv => {
            writeln!(out, "group,n,mean,method,alpha,lower,upper,width")?;
            let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(r.group),
                    r.n,
                    fmt_sig(r.mean),
                    r.method,
                    fmt_sig(r.alpha),
                    opt(r.lower),
                    opt(r.upper),
                    opt(r.width)
                )?;
            }
        }
        Format::Json => write_json(out, &rows)?,
    }
    Ok(())
}

/// Quote a group id if it would break the CSV row.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Serialize)]
struct CurvePoint {
    mu: f64,
    coverage: f64,
}

fn curve(common: &CommonArgs, args: &CurveArgs, out: &mut dyn Write) -> Result<()> {
    let (lo, hi, count) = parse_grid(&args.grid).map_err(CliError::Usage)?;
    let spec = NormalModelSpec::with(args.phi, args.tau2, args.sigma2)?;
    let rows = coverage_curve(&spec, common.alpha, &linspace(lo, hi, count))?;
    match common.format {
        Format::Csv => write_coverage_curve(&mut *out, &rows)?,
        Format::Json => {
            let points: Vec<CurvePoint> = rows
                .iter()
                .map(|&(mu, coverage)| CurvePoint { mu, coverage })
                .collect();
            write_json(out, &points)?;
        }
    }
    Ok(())
}

fn simulate(common: &CommonArgs, args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut scenario = Scenario::load(&args.scenario).map_err(|e| with_path(e, &args.scenario))?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(reps) = args.reps {
        scenario.reps = reps;
    }
    info!(
        "simulating `{}`: {} groups, {} reps, seed {}",
        scenario.name, scenario.n_groups, scenario.reps, scenario.seed
    );
    let report = simulate_coverage(&scenario)?;
    match common.format {
        Format::Csv => report.write_csv(&mut *out)?,
        Format::Json => report.write_json(&mut *out)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    a: Method,
    b: Method,
    groups: usize,
    narrower: usize,
    fraction_narrower: f64,
    mean_width_ratio: f64,
}

fn compare(common: &CommonArgs, args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let known = args.input.sigma.is_some();
    let a = resolve_method(&args.a, known).map_err(CliError::Usage)?;
    let b = resolve_method(&args.b, known).map_err(CliError::Usage)?;
    if a == b {
        return Err(CliError::Usage(format!("--a and --b are both {a}")));
    }
    let groups = load(&args.input)?;
    let cmp = width_comparison(&groups, (a, b), &options(common, args.bootstrap_b))?;
    let row = CompareRow {
        a,
        b,
        groups: cmp.groups,
        narrower: (cmp.fraction_narrower * cmp.groups as f64).round() as usize,
        fraction_narrower: cmp.fraction_narrower,
        mean_width_ratio: cmp.mean_width_ratio,
    };
    match common.format {
        Format::Csv => {
            writeln!(
                out,
                "a,b,groups,narrower,fraction_narrower,mean_width_ratio"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.a,
                row.b,
                row.groups,
                row.narrower,
                fmt_sig(row.fraction_narrower),
                fmt_sig(row.mean_width_ratio)
            )?;
        }
        Format::Json => write_json(out, &row)?,
    }
    Ok(())
}
