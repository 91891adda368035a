//! Command-line surface: `analyze`, `simulate` and `demo-data`.
//!
//! Exit codes: 0 success, 1 input error, 2 method failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::analysis::{run_analysis, AnalysisConfig, MethodSpec};
use crate::demo::generate_demo_data;
use crate::error::{Error, Result};
use crate::io::{read_dataset, write_atomic};
use crate::model::BetaParams;
use crate::propensity::{WeightScheme, WeightVariant, DEFAULT_RIDGE};
use crate::simulation::{default_grid, run_grid, Method, Scenario, ScenarioConfig, Setting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_METHOD: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "propp", version, about = "Propensity-weighted power priors for single-arm trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a dataset and write a JSON result document.
    Analyze(AnalyzeArgs),
    /// Run an operating-characteristics simulation and write metrics as CSV.
    Simulate(SimulateArgs),
    /// Write the synthetic demo cohort as CSV.
    DemoData(DemoDataArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// ignore | pool | mpp | propp | fixed:<delta> | wang:<fraction>
    #[arg(long, default_value = "propp")]
    pub method: String,
    /// ate | att | ate-ext
    #[arg(long, default_value = "att")]
    pub weight_scheme: String,
    /// Cap external weights at 1 (default).
    #[arg(long, overrides_with = "no_cap")]
    pub cap: bool,
    #[arg(long, overrides_with = "cap")]
    pub no_cap: bool,
    /// Beta prior on the power parameter, as `a,b`.
    #[arg(long, default_value = "1,1")]
    pub delta_prior: String,
    #[arg(long, default_value_t = crate::borrowing::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_floor: f64,
    /// Number of propensity strata for `wang:<fraction>`.
    #[arg(long, default_value_t = crate::borrowing::DEFAULT_STRATA)]
    pub strata: usize,
    /// Output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// drift | mixture | nomixture | superfluous
    #[arg(long)]
    pub scenario: String,
    /// equal | large-external | large-trial | many-covariates
    #[arg(long, default_value = "equal")]
    pub setting: String,
    /// Comma-separated values of the swept parameter (η for drift, μₑ otherwise).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = ScenarioConfig::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Comma-separated subset of ignore,pool,mpp,propp,wang10,wang20.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of outcome coefficients set to zero (superfluous scenario).
    #[arg(long)]
    pub superfluous: Option<usize>,
    #[arg(long, default_value_t = crate::borrowing::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoDataArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let started = Instant::now();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::DemoData(a) => demo_data(a),
    };
    match result {
        Ok(()) => {
            eprintln!("done in {:.2?}", started.elapsed());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_method_failure() {
                EXIT_METHOD
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::rng().random();
        eprintln!("no --seed given, using {s}");
        s
    })
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Input(format!("expected `a,b`, got `{s}`")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Input(format!("invalid number `{v}`")))
    };
    Ok((parse(a)?, parse(b)?))
}

fn parse_list<T, F>(s: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(f)
        .collect()
}

fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let method: MethodSpec = a.method.parse()?;
    let variant: WeightVariant = a.weight_scheme.parse()?;
    let (pa, pb) = parse_pair(&a.delta_prior)?;
    if !(a.ridge >= 0.0 && a.ridge.is_finite()) || !(a.weight_floor >= 0.0) {
        return Err(Error::Input("ridge and weight floor must be nonnegative".into()));
    }
    let cfg = AnalysisConfig {
        method,
        weight_scheme: WeightScheme::new(variant, !a.no_cap),
        delta_prior: BetaParams::new(pa, pb).map_err(|e| Error::Input(e.to_string()))?,
        n_samples: a.samples,
        seed: seed_or_entropy(a.seed),
        ridge: a.ridge,
        weight_floor: a.weight_floor,
        n_strata: a.strata,
    };
    let data = read_dataset(&a.data)?;
    let doc = run_analysis(&data, &a.data.to_string_lossy(), &cfg)?;
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    emit(a.out.as_ref(), &bytes)
}

#[derive(Serialize)]
struct MetricsCsvRow<'a> {
    scenario: String,
    setting: String,
    parameter: &'a str,
    method: String,
    grid_value: f64,
    rmse: f64,
    type1: f64,
    failures: usize,
    replicates: usize,
    truth: f64,
    seed: u64,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let setting: Setting = a.setting.parse()?;
    let mut cfg = ScenarioConfig::new(scenario, setting);
    if let Some(m) = a.superfluous {
        cfg = cfg.with_superfluous(m);
    }
    cfg.replicates = a.replicates;
    cfg.n_samples = a.samples;
    cfg.seed = seed_or_entropy(a.seed);
    if let Some(m) = &a.methods {
        cfg.methods = parse_list(m, |v| v.parse::<Method>())?;
    }
    let grid = match &a.grid {
        Some(g) => parse_list(g, |v| {
            v.parse::<f64>()
                .map_err(|_| Error::Input(format!("invalid grid value `{v}`")))
        })?,
        None => default_grid(),
    };
    let rows = run_grid(&cfg, &grid)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(MetricsCsvRow {
            scenario: scenario.to_string(),
            setting: setting.to_string(),
            parameter: scenario.grid_parameter(),
            method: r.method.to_string(),
            grid_value: r.grid_value,
            rmse: r.rmse,
            type1: r.type1,
            failures: r.failures,
            replicates: r.replicates,
            truth: r.truth,
            seed: cfg.seed,
        })?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    emit(a.out.as_ref(), &bytes)
}

pub fn demo_data(a: DemoDataArgs) -> Result<()> {
    let seed = seed_or_entropy(a.seed);
    generate_demo_data(seed).write_csv(&a.out)
}
