//! Operating-characteristics simulation.
//!
//! Each replicate draws a trial and an external cohort, fits every requested
//! method, and records its posterior mean and 95% interval. Replicates are
//! seeded from `(seed, grid value, replicate index)` only, so a grid point's
//! results do not depend on which other grid points are run, and replicates
//! can be executed in parallel.
//!
//! Outcomes follow `logit P(y = 1) = β₀ + βᵀx + η·z` with `z = 1` for trial
//! patients. External covariates come from a two-class mixture: with
//! probability ψ from the trial distribution, otherwise from `N(μₑ, σₑ²)`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::borrowing::{
    fit_ignore, fit_mpp, fit_pooled, fit_propp, fit_wang_stratified, DeltaPrior, WangOptions,
    DEFAULT_SAMPLES,
};
use crate::error::{Error, Result};
use crate::model::{Dataset, PatientRecord, PosteriorSummary, Source};
use crate::propensity::{weight_dataset, PropensityOptions, WeightedDataset};
use crate::seed;

const TRUE_RATE_DRAWS: usize = 1_000_000;
const TRUE_RATE_SEED: u64 = 0x7472_7565_5f72_6174;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Same covariate distribution, outcomes differ by the drift η.
    Drift,
    /// Latent-class covariate shift (ψ = 0.5), no drift.
    Mixture,
    /// Whole external population shifted (ψ = 0), no drift.
    NoMixture,
    /// Mixture with some outcome coefficients forced to zero.
    Superfluous,
}

impl Scenario {
    /// Name of the parameter swept by the grid.
    pub fn grid_parameter(self) -> &'static str {
        match self {
            Scenario::Drift => "eta",
            _ => "mu_e",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Drift => "drift",
            Scenario::Mixture => "mixture",
            Scenario::NoMixture => "nomixture",
            Scenario::Superfluous => "superfluous",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drift" => Ok(Scenario::Drift),
            "mixture" => Ok(Scenario::Mixture),
            "nomixture" | "no-mixture" => Ok(Scenario::NoMixture),
            "superfluous" => Ok(Scenario::Superfluous),
            other => Err(Error::Input(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    EqualN,
    LargeExternal,
    LargeTrial,
    ManyCovariates,
}

impl Setting {
    /// (N₀, Nₑ, K)
    pub fn dimensions(self) -> (usize, usize, usize) {
        match self {
            Setting::EqualN => (400, 400, 5),
            Setting::LargeExternal => (400, 2000, 5),
            Setting::LargeTrial => (400, 200, 5),
            Setting::ManyCovariates => (400, 400, 10),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::EqualN => "equal",
            Setting::LargeExternal => "large-external",
            Setting::LargeTrial => "large-trial",
            Setting::ManyCovariates => "many-covariates",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equal" => Ok(Setting::EqualN),
            "large-external" => Ok(Setting::LargeExternal),
            "large-trial" => Ok(Setting::LargeTrial),
            "many-covariates" => Ok(Setting::ManyCovariates),
            other => Err(Error::Input(format!("unknown setting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ignore,
    Pool,
    Mpp,
    Propp,
    Wang10,
    Wang20,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ignore,
        Method::Pool,
        Method::Mpp,
        Method::Propp,
        Method::Wang10,
        Method::Wang20,
    ];

    pub fn needs_propensity(self) -> bool {
        matches!(self, Method::Propp | Method::Wang10 | Method::Wang20)
    }

    fn salt(self) -> u64 {
        100 + self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ignore => "ignore",
            Method::Pool => "pool",
            Method::Mpp => "mpp",
            Method::Propp => "propp",
            Method::Wang10 => "wang10",
            Method::Wang20 => "wang20",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ignore" => Ok(Method::Ignore),
            "pool" | "pooled" => Ok(Method::Pool),
            "mpp" => Ok(Method::Mpp),
            "propp" => Ok(Method::Propp),
            "wang10" => Ok(Method::Wang10),
            "wang20" => Ok(Method::Wang20),
            other => Err(Error::Input(format!("unknown simulation method `{other}`"))),
        }
    }
}

/// Full parameterization of one simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub setting: Setting,
    pub n_trial: usize,
    pub n_external: usize,
    pub k: usize,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub eta: f64,
    pub psi: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub mu_e: f64,
    pub sigma_e: f64,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Leading coefficients forced to zero (superfluous scenario only).
    pub n_superfluous: usize,
    /// Posterior draws per sampled fit.
    pub n_samples: usize,
    pub propensity: PropensityOptions,
    pub delta_prior: DeltaPrior,
}

impl ScenarioConfig {
    pub const DEFAULT_REPLICATES: usize = 1000;

    pub fn new(scenario: Scenario, setting: Setting) -> Self {
        let (n_trial, n_external, k) = setting.dimensions();
        let n_superfluous = usize::from(scenario == Scenario::Superfluous);
        let psi = match scenario {
            Scenario::Drift => 1.0,
            Scenario::Mixture | Scenario::Superfluous => 0.5,
            Scenario::NoMixture => 0.0,
        };
        let mut cfg = Self {
            scenario,
            setting,
            n_trial,
            n_external,
            k,
            beta0: 0.0,
            beta: Vec::new(),
            eta: 0.0,
            psi,
            mu0: 0.0,
            sigma0: 1.0,
            mu_e: 0.0,
            sigma_e: 1.0,
            replicates: Self::DEFAULT_REPLICATES,
            methods: Method::ALL.to_vec(),
            seed: 0,
            n_superfluous,
            n_samples: DEFAULT_SAMPLES,
            propensity: PropensityOptions::default(),
            delta_prior: DeltaPrior::default(),
        };
        cfg.beta = cfg.default_coefficients();
        cfg
    }

    /// β = 0 under drift; otherwise 0.1 per covariate, with the superfluous
    /// scenario zeroing the leading `n_superfluous` entries and spreading the
    /// same total over the rest.
    pub fn default_coefficients(&self) -> Vec<f64> {
        match self.scenario {
            Scenario::Drift => vec![0.0; self.k],
            Scenario::Superfluous => {
                let total = 0.1 * self.k as f64;
                let m = self.n_superfluous.min(self.k.saturating_sub(1));
                let rest = total / (self.k - m) as f64;
                (0..self.k).map(|j| if j < m { 0.0 } else { rest }).collect()
            }
            _ => vec![0.1; self.k],
        }
    }

    pub fn with_superfluous(mut self, m: usize) -> Self {
        self.n_superfluous = m;
        self.beta = self.default_coefficients();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (n0, ne, k) = self.setting.dimensions();
        if (self.n_trial, self.n_external, self.k) != (n0, ne, k) {
            return Err(Error::Input(format!(
                "setting {} fixes (N0, Ne, K) = ({n0}, {ne}, {k})",
                self.setting
            )));
        }
        if self.beta.len() != self.k {
            return Err(Error::Input(format!(
                "{} outcome coefficients for {} covariates",
                self.beta.len(),
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.psi) {
            return Err(Error::Input(format!("psi must lie in [0, 1], got {}", self.psi)));
        }
        if !(self.sigma0 > 0.0 && self.sigma_e > 0.0) {
            return Err(Error::Input("covariate standard deviations must be positive".into()));
        }
        if self.replicates == 0 || self.n_samples == 0 {
            return Err(Error::Input("replicates and n_samples must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Input("no methods requested".into()));
        }
        if self.scenario == Scenario::Superfluous && self.n_superfluous >= self.k {
            return Err(Error::Input("at least one coefficient must stay nonzero".into()));
        }
        Ok(())
    }

    /// Copy with the swept parameter set to `grid_value`.
    pub fn at(&self, grid_value: f64) -> ScenarioConfig {
        let mut c = self.clone();
        match self.scenario {
            Scenario::Drift => c.eta = grid_value,
            _ => c.mu_e = grid_value,
        }
        c
    }
}

/// The swept grid {−0.5, −0.375, …, 0.5}.
pub fn default_grid() -> Vec<f64> {
    (0..9).map(|i| -0.5 + 0.125 * i as f64).collect()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draw one simulated dataset.
pub fn generate_dataset<R: Rng + ?Sized>(cfg: &ScenarioConfig, grid_value: f64, rng: &mut R) -> Result<Dataset> {
    cfg.validate()?;
    let c = cfg.at(grid_value);
    let trial_dist = Normal::new(c.mu0, c.sigma0).map_err(|e| Error::Input(e.to_string()))?;
    let ext_dist = Normal::new(c.mu_e, c.sigma_e).map_err(|e| Error::Input(e.to_string()))?;

    let mut records = Vec::with_capacity(c.n_trial + c.n_external);
    let mut push = |source: Source, dist: &Normal<f64>, rng: &mut R| {
        let x: Vec<f64> = (0..c.k).map(|_| dist.sample(rng)).collect();
        let drift = if source.is_trial() { c.eta } else { 0.0 };
        let lp = c.beta0 + c.beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>() + drift;
        let y = rng.random::<f64>() < expit(lp);
        records.push(PatientRecord::new(source, y, x));
    };
    for _ in 0..c.n_trial {
        push(Source::Trial, &trial_dist, rng);
    }
    for _ in 0..c.n_external {
        let like_trial = c.psi >= 1.0 || (c.psi > 0.0 && rng.random::<f64>() < c.psi);
        push(
            Source::External,
            if like_trial { &trial_dist } else { &ext_dist },
            rng,
        );
    }
    let names = (1..=c.k).map(|j| format!("x{j}")).collect();
    Dataset::new(names, records)
}

fn true_rate_cache() -> &'static Mutex<HashMap<Vec<u64>, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<Vec<u64>, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// E[expit(β₀ + βᵀX + η)] for trial covariates X ~ N(μ₀, σ₀² I).
///
/// Monte Carlo with 10⁶ antithetic draws and a fixed seed; results are
/// cached per parameter combination.
pub fn true_trial_rate(cfg: &ScenarioConfig, grid_value: f64) -> f64 {
    let c = cfg.at(grid_value);
    let shift = c.beta0 + c.eta + c.beta.iter().sum::<f64>() * c.mu0;
    if c.beta.iter().all(|b| *b == 0.0) {
        return expit(shift);
    }
    let mut key: Vec<u64> = vec![c.beta0.to_bits(), c.eta.to_bits(), c.mu0.to_bits(), c.sigma0.to_bits()];
    key.extend(c.beta.iter().map(|b| b.to_bits()));
    if let Some(v) = true_rate_cache().lock().expect("cache poisoned").get(&key) {
        return *v;
    }

    let mut rng = seed::rng(TRUE_RATE_SEED);
    let pairs = TRUE_RATE_DRAWS / 2;
    let mut acc = 0.0;
    for _ in 0..pairs {
        // centred linear predictor; its mirror image gives the antithetic draw
        let u: f64 = c
            .beta
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(&mut rng);
                b * c.sigma0 * z
            })
            .sum();
        acc += expit(shift + u) + expit(shift - u);
    }
    let value = acc / (2 * pairs) as f64;
    true_rate_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, value);
    value
}

/// Posterior mean and equal-tailed 95% interval of one method on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

impl From<&PosteriorSummary> for Estimate {
    fn from(s: &PosteriorSummary) -> Self {
        Self {
            mean: s.mean,
            q025: s.q025,
            q975: s.q975,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub method: Method,
    pub replicate: usize,
    /// `Err` holds the failure message of a method that could not run.
    pub outcome: std::result::Result<Estimate, String>,
}

pub fn replicate_seed(seed: u64, grid_value: f64, replicate: usize) -> u64 {
    seed::derive(seed::derive(seed, grid_value.to_bits()), replicate as u64)
}

/// Generate one dataset and fit every configured method on it.
///
/// Method failures are recorded in the results, never propagated.
pub fn run_replicate(cfg: &ScenarioConfig, grid_value: f64, replicate: usize) -> Result<Vec<ReplicateResult>> {
    let rep_seed = replicate_seed(cfg.seed, grid_value, replicate);
    let mut rng = seed::rng(rep_seed);
    let data = generate_dataset(cfg, grid_value, &mut rng)?;

    let weighted: Option<std::result::Result<WeightedDataset, String>> = cfg
        .methods
        .iter()
        .any(|m| m.needs_propensity())
        .then(|| {
            weight_dataset(&data, &cfg.propensity)
                .map(|(_, wd, _)| wd)
                .map_err(|e| e.to_string())
        });

    let results = cfg
        .methods
        .iter()
        .map(|&method| {
            let s = seed::derive(rep_seed, method.salt());
            let outcome = fit_method(method, &data, weighted.as_ref(), cfg, s);
            ReplicateResult {
                method,
                replicate,
                outcome,
            }
        })
        .collect();
    Ok(results)
}

fn fit_method(
    method: Method,
    data: &Dataset,
    weighted: Option<&std::result::Result<WeightedDataset, String>>,
    cfg: &ScenarioConfig,
    seed: u64,
) -> std::result::Result<Estimate, String> {
    let wd = || -> std::result::Result<&WeightedDataset, String> {
        match weighted {
            Some(Ok(wd)) => Ok(wd),
            Some(Err(e)) => Err(format!("propensity fit failed: {e}")),
            None => Err("propensity weights were not computed".into()),
        }
    };
    let summary = match method {
        Method::Ignore => fit_ignore(data),
        Method::Pool => fit_pooled(data),
        Method::Mpp => fit_mpp(data, &cfg.delta_prior, cfg.n_samples, seed).map(|(_, s)| s),
        Method::Propp => fit_propp(wd()?, &cfg.delta_prior, cfg.n_samples, seed).map(|(_, s)| s),
        Method::Wang10 | Method::Wang20 => {
            let fraction = if method == Method::Wang10 { 0.1 } else { 0.2 };
            let opts = WangOptions {
                n_draws: cfg.n_samples,
                ..WangOptions::new(fraction, seed)
            };
            fit_wang_stratified(data, wd()?.scores(), &opts).map(|f| f.summary)
        }
    };
    summary.map(|s| Estimate::from(&s)).map_err(|e| e.to_string())
}

/// Aggregated performance of one method at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub grid_value: f64,
    pub rmse: f64,
    /// Share of successful replicates whose interval excludes the truth.
    pub type1: f64,
    pub failures: usize,
    pub replicates: usize,
    pub truth: f64,
}

/// Aggregate replicate results of one method. Results are ordered by
/// replicate index first, so the input order does not affect the output.
pub fn aggregate(method: Method, grid_value: f64, truth: f64, results: &[ReplicateResult]) -> MetricsRow {
    let mut mine: Vec<&ReplicateResult> = results.iter().filter(|r| r.method == method).collect();
    mine.sort_by_key(|r| r.replicate);

    let mut sq = 0.0;
    let mut misses = 0usize;
    let mut ok = 0usize;
    let mut failures = 0usize;
    for r in &mine {
        match &r.outcome {
            Ok(est) => {
                ok += 1;
                sq += (est.mean - truth).powi(2);
                if truth < est.q025 || truth > est.q975 {
                    misses += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let (rmse, type1) = if ok > 0 {
        ((sq / ok as f64).sqrt(), misses as f64 / ok as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    MetricsRow {
        method,
        grid_value,
        rmse,
        type1,
        failures,
        replicates: mine.len(),
        truth,
    }
}

/// Run every replicate at every grid value; rows are ordered by grid value
/// (as given) and then by the configured method order.
pub fn run_grid(cfg: &ScenarioConfig, grid: &[f64]) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::Input("grid values must be finite".into()));
    }
    let mut rows = Vec::with_capacity(grid.len() * cfg.methods.len());
    for &g in grid {
        let truth = true_trial_rate(cfg, g);
        let results: Vec<ReplicateResult> = (0..cfg.replicates)
            .into_par_iter()
            .map(|i| run_replicate(cfg, g, i))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        rows.extend(cfg.methods.iter().map(|&m| aggregate(m, g, truth, &results)));
    }
    Ok(rows)
}
