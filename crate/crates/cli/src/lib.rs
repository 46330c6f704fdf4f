//! Command-line driver for the descest estimators.
//!
//! `descest <command> --model <path> [--measurements <path>] [options]`
//!
//! Exit codes: 0 on success, 2 for invalid input (missing or malformed
//! files, failed validation, bad flags), 3 when an estimator reports a
//! numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, ValueEnum};
use serde::Serialize;

use descest::continuous::{
    aposteriori_solve, apriori_solve, block_decompose, check_condition_a, functional_estimate,
};
use descest::io;
use descest::oracle::{direction_interval, stacked_minimize};
use descest::{Matrix, MinimaxFilter, Tolerances, Vector};

pub mod demo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Estimate,
    Ellipsoid,
    Index,
    ContinuousApriori,
    ContinuousAposteriori,
    Oracle,
    Demo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Minimax state estimation for linear descriptor systems.
#[derive(Debug, Clone, Parser)]
#[command(name = "descest", version)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,

    /// Model JSON (discrete or continuous, depending on the command).
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Measurement CSV (`k,y0,...` or `t,y0,...`).
    #[arg(long)]
    pub measurements: Option<PathBuf>,

    /// Direction `l` of the estimated functional, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "all_basis"
    )]
    pub direction: Option<Vec<f64>>,

    /// Estimate along every coordinate direction.
    #[arg(long)]
    pub all_basis: bool,

    /// Relative rank tolerance; 0 selects `max(m, n) * eps`.
    #[arg(long, default_value_t = 0.0)]
    pub rank_tol: f64,

    /// Relative tolerance of the observability test.
    #[arg(long, default_value_t = 1e-8)]
    pub obs_tol: f64,

    /// Output file (directory for `demo`); standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t)]
    pub format: Format,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 32)]
    pub steps: usize,
}

impl RunConfig {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rank_tol: self.rank_tol,
            obs_tol: self.obs_tol,
            ..Tolerances::default()
        }
    }

    fn model_path(&self) -> anyhow::Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| anyhow!("--model is required for this command"))
    }

    fn measurements_path(&self) -> anyhow::Result<&Path> {
        self.measurements
            .as_deref()
            .ok_or_else(|| anyhow!("--measurements is required for this command"))
    }

    fn directions(&self, n: usize) -> anyhow::Result<Vec<Vector>> {
        match &self.direction {
            Some(d) if d.len() != n => {
                bail!("--direction has {} components, the state has {n}", d.len())
            }
            Some(d) => Ok(vec![Vector::from_row_slice(d)]),
            None => Ok((0..n)
                .map(|i| Vector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect()),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<descest::Error>() {
        Some(err) if err.is_numerical() => 3,
        _ => 2,
    }
}

pub fn execute(config: &RunConfig) -> anyhow::Result<()> {
    let text = match config.command {
        Command::Estimate => estimate(config)?,
        Command::Ellipsoid => ellipsoid(config)?,
        Command::Index => index(config)?,
        Command::Oracle => oracle(config)?,
        Command::ContinuousApriori => continuous_apriori(config)?,
        Command::ContinuousAposteriori => continuous_aposteriori(config)?,
        Command::Demo => return run_demo(config),
    };
    emit(config.out.as_deref(), &text)
}

/// Writes to `path` through a temporary file in the same directory, so the
/// target is either untouched or complete.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json(value: &impl Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn entries(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn load_discrete(
    config: &RunConfig,
) -> anyhow::Result<(
    descest::DescriptorModel,
    descest::UncertaintyWeights,
    descest::MeasurementSequence,
)> {
    let model_path = config.model_path()?;
    let y_path = config.measurements_path()?;
    let (model, weights) = io::read_discrete_model(model_path)
        .with_context(|| format!("reading {}", model_path.display()))?;
    let y =
        io::read_measurements(y_path).with_context(|| format!("reading {}", y_path.display()))?;
    let mut diags = descest::model::validate(&model, &weights);
    diags.extend(descest::model::validate_measurements(&model, &y));
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{}: {d}", model_path.display());
        }
        bail!("{} validation problem(s)", diags.len());
    }
    Ok((model, weights, y))
}

#[derive(Serialize)]
pub struct EstimateOut {
    pub value: f64,
    #[serde(with = "io::extended_float")]
    pub error: f64,
    pub observable: bool,
}

fn estimate(config: &RunConfig) -> anyhow::Result<String> {
    let (model, weights, y) = load_discrete(config)?;
    let state = MinimaxFilter::new(&model, &weights)?
        .with_tolerances(config.tolerances())
        .run(&y)?;
    let dirs = config.directions(model.n)?;
    let estimates = dirs
        .iter()
        .map(|l| {
            state.estimate(l).map(|e| EstimateOut {
                value: e.value,
                error: e.error,
                observable: e.observable,
            })
        })
        .collect::<descest::Result<Vec<_>>>()?;
    match config.format {
        Format::Json if config.direction.is_some() => to_json(&estimates[0]),
        Format::Json => to_json(&estimates),
        Format::Csv => {
            let mut out = String::from("direction,value,error,observable\n");
            for (i, e) in estimates.iter().enumerate() {
                out += &format!("{i},{},{},{}\n", e.value, e.error, e.observable);
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct EllipsoidOut {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    center: Vec<f64>,
    alpha: f64,
    #[serde(with = "io::extended_float")]
    radius: f64,
}

fn json_only(config: &RunConfig) -> anyhow::Result<()> {
    if config.format == Format::Csv {
        bail!("{:?} output is only available as JSON", config.command);
    }
    Ok(())
}

fn ellipsoid(config: &RunConfig) -> anyhow::Result<String> {
    json_only(config)?;
    let (model, weights, y) = load_discrete(config)?;
    let state = MinimaxFilter::new(&model, &weights)?
        .with_tolerances(config.tolerances())
        .run(&y)?;
    let e = state.posterior_ellipsoid()?;
    to_json(&EllipsoidOut {
        q: rows(&e.q),
        center: entries(&e.center),
        alpha: e.alpha,
        radius: e.radius,
    })
}

#[derive(Serialize)]
struct IndexOut {
    #[serde(rename = "I_N")]
    index: usize,
    causal: bool,
}

fn index(config: &RunConfig) -> anyhow::Result<String> {
    let (model, weights, y) = load_discrete(config)?;
    let state = MinimaxFilter::new(&model, &weights)?
        .with_tolerances(config.tolerances())
        .run(&y)?;
    let out = IndexOut {
        index: state.noncausality_index()?,
        causal: state.is_causal()?,
    };
    match config.format {
        Format::Json => to_json(&out),
        Format::Csv => Ok(format!("I_N,causal\n{},{}\n", out.index, out.causal)),
    }
}

#[derive(Serialize)]
struct IntervalOut {
    #[serde(with = "io::extended_float")]
    lo: f64,
    #[serde(with = "io::extended_float")]
    hi: f64,
}

#[derive(Serialize)]
struct OracleOut {
    min_cost: f64,
    trajectory: Vec<Vec<f64>>,
    marginal_q: Vec<Vec<f64>>,
    marginal_center: Vec<f64>,
    marginal_alpha: f64,
    intervals: Vec<IntervalOut>,
}

fn oracle(config: &RunConfig) -> anyhow::Result<String> {
    let (model, weights, y) = load_discrete(config)?;
    let sol = stacked_minimize(&model, &weights, &y)?;
    let traj = sol.trajectory();
    match config.format {
        Format::Csv => Ok(io::grid_csv(
            "k",
            "x",
            (0..traj.x.len()).map(|k| k.to_string()),
            &traj.x,
        )?),
        Format::Json => {
            let intervals = config
                .directions(model.n)?
                .iter()
                .map(|l| direction_interval(&sol, l).map(|i| IntervalOut { lo: i.lo, hi: i.hi }))
                .collect::<descest::Result<Vec<_>>>()?;
            to_json(&OracleOut {
                min_cost: sol.min_cost,
                trajectory: traj.x.iter().map(entries).collect(),
                marginal_q: rows(&sol.marginal_q),
                marginal_center: entries(&sol.marginal_center),
                marginal_alpha: sol.marginal_alpha,
                intervals,
            })
        }
    }
}

fn load_continuous(config: &RunConfig) -> anyhow::Result<descest::ContinuousModel> {
    let path = config.model_path()?;
    let model =
        io::read_continuous_model(path).with_context(|| format!("reading {}", path.display()))?;
    let diags = model.validate();
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{}: {d}", path.display());
        }
        bail!("{} validation problem(s)", diags.len());
    }
    Ok(model)
}

#[derive(Serialize)]
struct ConditionOut {
    holds: bool,
    sup_estimate: f64,
}

#[derive(Serialize)]
struct AprioriOut {
    sigma2: f64,
    condition_a: ConditionOut,
    t: Vec<f64>,
    u_hat: Vec<Vec<f64>>,
}

fn continuous_apriori(config: &RunConfig) -> anyhow::Result<String> {
    let model = load_continuous(config)?;
    let grid = model.grid()?;
    let cond = check_condition_a(&block_decompose(&model)?, 50)?;
    let sol = apriori_solve(&model, &grid)?;
    match config.format {
        Format::Csv => Ok(io::grid_csv(
            "t",
            "u",
            grid.nodes().map(|t| t.to_string()),
            &sol.u_hat,
        )?),
        Format::Json => to_json(&AprioriOut {
            sigma2: sol.sigma2,
            condition_a: ConditionOut {
                holds: cond.holds,
                sup_estimate: cond.sup_estimate,
            },
            t: grid.nodes().collect(),
            u_hat: sol.u_hat.iter().map(entries).collect(),
        }),
    }
}

#[derive(Serialize)]
struct AposterioriOut {
    estimate: f64,
    t: Vec<f64>,
    x_hat: Vec<Vec<f64>>,
}

fn continuous_aposteriori(config: &RunConfig) -> anyhow::Result<String> {
    let model = load_continuous(config)?;
    let y_path = config.measurements_path()?;
    let y = io::read_continuous_measurements(y_path)
        .with_context(|| format!("reading {}", y_path.display()))?;
    let grid = model.grid()?;
    let sol = aposteriori_solve(&model, &y, &grid)?;
    match config.format {
        Format::Csv => Ok(io::grid_csv(
            "t",
            "x",
            grid.nodes().map(|t| t.to_string()),
            &sol.x_hat,
        )?),
        Format::Json => {
            let ell: Vec<Vector> = grid.nodes().map(|t| model.ell.at(t)).collect();
            to_json(&AposterioriOut {
                estimate: functional_estimate(&sol, &ell)?,
                t: grid.nodes().collect(),
                x_hat: sol.x_hat.iter().map(entries).collect(),
            })
        }
    }
}

fn run_demo(config: &RunConfig) -> anyhow::Result<()> {
    json_only(config)?;
    let demo = demo::demo_generate(config.seed, config.steps)?;
    let files = match &config.out {
        Some(dir) => demo.write(dir)?,
        None => Vec::new(),
    };
    emit(None, &to_json(&demo.summary(files))?)
}
