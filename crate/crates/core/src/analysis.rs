//! The two-stage analysis of one dataset and its result document.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::borrowing::{
    fit_fixed_power, fit_ignore, fit_mpp, fit_pooled, fit_propp, fit_wang_stratified, DeltaPrior,
    Stratum, WangOptions, DEFAULT_SAMPLES, DEFAULT_STRATA,
};
use crate::error::{Error, Result};
use crate::model::{BetaParams, Dataset, PosteriorSummary, Source};
use crate::propensity::{
    standardized_mean_diff, weight_dataset, FitOptions, PropensityModel, PropensityOptions,
    WeightScheme, WeightedDataset, DEFAULT_RIDGE,
};

pub const HISTOGRAM_BINS: usize = 20;

/// Borrowing method of an analysis run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Ignore,
    Pool,
    Mpp,
    Propp,
    /// Power prior with a fixed power.
    Fixed(f64),
    /// Stratified power prior borrowing at most this fraction of N₀.
    Wang(f64),
}

impl MethodSpec {
    pub fn needs_propensity(&self) -> bool {
        matches!(self, MethodSpec::Propp | MethodSpec::Wang(_))
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Ignore => f.write_str("ignore"),
            MethodSpec::Pool => f.write_str("pool"),
            MethodSpec::Mpp => f.write_str("mpp"),
            MethodSpec::Propp => f.write_str("propp"),
            MethodSpec::Fixed(d) => write!(f, "fixed:{d}"),
            MethodSpec::Wang(p) => write!(f, "wang:{p}"),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let number = |v: &str, what: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Input(format!("invalid {what} `{v}`")))
        };
        match s.split_once(':') {
            None => match s.as_str() {
                "ignore" => Ok(MethodSpec::Ignore),
                "pool" | "pooled" => Ok(MethodSpec::Pool),
                "mpp" => Ok(MethodSpec::Mpp),
                "propp" => Ok(MethodSpec::Propp),
                other => Err(Error::Input(format!("unknown method `{other}`"))),
            },
            Some(("fixed", v)) => {
                let d = number(v, "fixed power")?;
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::Input(format!("fixed power must lie in [0, 1], got {d}")));
                }
                Ok(MethodSpec::Fixed(d))
            }
            Some(("wang", v)) => {
                let p = number(v, "borrow fraction")?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Input(format!("borrow fraction must lie in (0, 1], got {p}")));
                }
                Ok(MethodSpec::Wang(p))
            }
            Some((other, _)) => Err(Error::Input(format!("unknown method `{other}`"))),
        }
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every setting of an analysis run, defaults included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub method: MethodSpec,
    pub weight_scheme: WeightScheme,
    pub delta_prior: BetaParams,
    pub n_samples: usize,
    pub seed: u64,
    pub ridge: f64,
    pub weight_floor: f64,
    pub n_strata: usize,
}

impl AnalysisConfig {
    pub fn new(method: MethodSpec, seed: u64) -> Self {
        Self {
            method,
            weight_scheme: WeightScheme::default(),
            delta_prior: BetaParams::UNIFORM,
            n_samples: DEFAULT_SAMPLES,
            seed,
            ridge: DEFAULT_RIDGE,
            weight_floor: 0.0,
            n_strata: DEFAULT_STRATA,
        }
    }

    fn propensity_options(&self) -> PropensityOptions {
        PropensityOptions {
            fit: FitOptions {
                ridge: self.ridge,
                ..FitOptions::default()
            },
            scheme: self.weight_scheme,
            weight_floor: self.weight_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub n_trial: usize,
    pub n_external: usize,
    pub trial_responders: usize,
    pub external_responders: usize,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub trial: usize,
    pub external: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_unweighted: Option<f64>,
    pub smd_weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityDiagnostics {
    pub model: PropensityModel,
    pub score_histogram: Vec<HistogramBin>,
    pub balance: Vec<BalanceRow>,
    /// External patients whose weight is exactly zero.
    pub zero_weights: usize,
    /// External weights set to zero by the weight floor.
    pub floored_weights: usize,
    /// External weights below 1e-3.
    pub near_zero_weights: usize,
    pub external_weight_sum: f64,
    pub min_external_weight: f64,
    pub max_external_weight: f64,
    /// Score and weight of every patient, in input order.
    pub patients: Vec<PatientWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientWeight {
    pub source: Source,
    pub score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub version: String,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    /// Keyed by method; always includes `trial_only` and, when external
    /// patients exist, `external_only`.
    pub results: BTreeMap<String, PosteriorSummary>,
    pub propensity: Option<PropensityDiagnostics>,
    pub strata: Option<Vec<Stratum>>,
}

/// Conjugate posterior of the external patients alone.
pub fn fit_external_only(data: &Dataset) -> Result<PosteriorSummary> {
    let e = data.counts(Source::External);
    PosteriorSummary::from_beta(BetaParams::new(e.s1 + 1.0, e.s0 + 1.0)?)
}

fn histogram(wd: &WeightedDataset) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: b as f64 / HISTOGRAM_BINS as f64,
            upper: (b + 1) as f64 / HISTOGRAM_BINS as f64,
            trial: 0,
            external: 0,
        })
        .collect();
    for (r, s) in wd.dataset().records().iter().zip(wd.scores()) {
        let b = ((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        match r.source {
            Source::Trial => bins[b].trial += 1,
            Source::External => bins[b].external += 1,
        }
    }
    bins
}

fn diagnostics(
    model: PropensityModel,
    wd: &WeightedDataset,
    floored: usize,
) -> PropensityDiagnostics {
    let data = wd.dataset();
    let unit = vec![1.0; data.len()];
    let before = standardized_mean_diff(data, &unit).ok();
    let after = standardized_mean_diff(data, wd.weights()).ok();
    let balance = data
        .covariate_names()
        .iter()
        .enumerate()
        .map(|(j, name)| BalanceRow {
            covariate: name.clone(),
            smd_unweighted: before.as_ref().map(|v| v[j]),
            smd_weighted: after.as_ref().map(|v| v[j]),
        })
        .collect();
    let ext: Vec<f64> = data
        .records()
        .iter()
        .zip(wd.weights())
        .filter(|(r, _)| !r.source.is_trial())
        .map(|(_, w)| *w)
        .collect();
    PropensityDiagnostics {
        model,
        score_histogram: histogram(wd),
        balance,
        zero_weights: ext.iter().filter(|w| **w == 0.0).count(),
        floored_weights: floored,
        near_zero_weights: ext.iter().filter(|w| **w < 1e-3).count(),
        external_weight_sum: ext.iter().sum(),
        min_external_weight: ext.iter().cloned().fold(f64::INFINITY, f64::min),
        max_external_weight: ext.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        patients: data
            .records()
            .iter()
            .zip(wd.scores().iter().zip(wd.weights()))
            .map(|(r, (&score, &weight))| PatientWeight {
                source: r.source,
                score,
                weight,
            })
            .collect(),
    }
}

/// Run the configured method on `data`.
///
/// `source` is echoed into the document to identify the input.
pub fn run_analysis(data: &Dataset, source: &str, cfg: &AnalysisConfig) -> Result<ResultDocument> {
    if cfg.n_samples == 0 {
        return Err(Error::Input("number of samples must be positive".into()));
    }
    let prior = DeltaPrior(cfg.delta_prior);
    let trial = data.counts(Source::Trial);
    let external = data.counts(Source::External);

    let mut results = BTreeMap::new();
    results.insert("trial_only".to_owned(), fit_ignore(data)?);
    if data.n_external() > 0 {
        results.insert("external_only".to_owned(), fit_external_only(data)?);
    }

    let weighted = if data.n_external() > 0 {
        match weight_dataset(data, &cfg.propensity_options()) {
            Ok(w) => Some(w),
            Err(e) if cfg.method.needs_propensity() => return Err(e),
            Err(_) => None,
        }
    } else if cfg.method.needs_propensity() {
        return Err(Error::Input(format!(
            "method {} needs external patients",
            cfg.method
        )));
    } else {
        None
    };

    let mut strata = None;
    let summary = match cfg.method {
        MethodSpec::Ignore => fit_ignore(data)?,
        MethodSpec::Pool => fit_pooled(data)?,
        MethodSpec::Fixed(d) => fit_fixed_power(data, d)?,
        MethodSpec::Mpp => fit_mpp(data, &prior, cfg.n_samples, cfg.seed)?.1,
        MethodSpec::Propp => {
            let (_, wd, _) = weighted.as_ref().expect("weights computed above");
            fit_propp(wd, &prior, cfg.n_samples, cfg.seed)?.1
        }
        MethodSpec::Wang(fraction) => {
            let (_, wd, _) = weighted.as_ref().expect("weights computed above");
            let opts = WangOptions {
                n_strata: cfg.n_strata,
                borrow_fraction: fraction,
                n_draws: cfg.n_samples,
                seed: cfg.seed,
            };
            let fit = fit_wang_stratified(data, wd.scores(), &opts)?;
            strata = Some(fit.strata);
            fit.summary
        }
    };
    results.insert(cfg.method.to_string(), summary);

    Ok(ResultDocument {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config: cfg.clone(),
        data: DataSummary {
            source: source.to_owned(),
            n_trial: data.n_trial(),
            n_external: data.n_external(),
            trial_responders: trial.s1 as usize,
            external_responders: external.s1 as usize,
            covariates: data.covariate_names().to_vec(),
        },
        results,
        propensity: weighted.map(|(model, wd, floored)| diagnostics(model, &wd, floored)),
        strata,
    })
}
