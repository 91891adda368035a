//! Domain types shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_quantile, ln_beta_unchecked};

/// Which data source a patient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Trial,
    External,
}

impl Source {
    pub fn is_trial(self) -> bool {
        matches!(self, Source::Trial)
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::Trial => "trial",
            Source::External => "external",
        }
    }
}

/// One patient row: data source, binary response and covariate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub source: Source,
    pub outcome: bool,
    pub covariates: Vec<f64>,
}

impl PatientRecord {
    pub fn new(source: Source, outcome: bool, covariates: Vec<f64>) -> Self {
        Self {
            source,
            outcome,
            covariates,
        }
    }

    pub fn y(&self) -> f64 {
        if self.outcome {
            1.0
        } else {
            0.0
        }
    }
}

/// Validated collection of patients sharing one covariate layout.
///
/// Covariates are purely numeric here; categorical variables have already
/// been expanded to indicator columns (see [`crate::io`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<PatientRecord>,
    n_trial: usize,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<PatientRecord>) -> Result<Self> {
        let k = covariate_names.len();
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != k {
                return Err(Error::Input(format!(
                    "record {i} has {} covariates, expected {k}",
                    r.covariates.len()
                )));
            }
            if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "record {i} has a non-finite value for covariate `{}`",
                    covariate_names[j]
                )));
            }
        }
        let n_trial = records.iter().filter(|r| r.source.is_trial()).count();
        if n_trial == 0 {
            return Err(Error::Input("dataset contains no trial patients".into()));
        }
        Ok(Self {
            covariate_names,
            records,
            n_trial,
        })
    }

    /// Dataset without covariates.
    pub fn from_counts(
        trial_responders: usize,
        n_trial: usize,
        external_responders: usize,
        n_external: usize,
    ) -> Result<Self> {
        if trial_responders > n_trial || external_responders > n_external {
            return Err(Error::Input("more responders than patients".into()));
        }
        let mut records = Vec::with_capacity(n_trial + n_external);
        for i in 0..n_trial {
            records.push(PatientRecord::new(Source::Trial, i < trial_responders, vec![]));
        }
        for i in 0..n_external {
            records.push(PatientRecord::new(
                Source::External,
                i < external_responders,
                vec![],
            ));
        }
        Self::new(vec![], records)
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn k(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_trial(&self) -> usize {
        self.n_trial
    }

    pub fn n_external(&self) -> usize {
        self.records.len() - self.n_trial
    }

    pub fn sources(&self) -> Vec<Source> {
        self.records.iter().map(|r| r.source).collect()
    }

    /// Unweighted sufficient statistics of one group.
    pub fn counts(&self, source: Source) -> WeightedCounts {
        WeightedCounts::from_weighted(
            self.records
                .iter()
                .filter(|r| r.source == source)
                .map(|r| (r.outcome, 1.0)),
        )
    }

    /// Copy keeping only the trial patients.
    pub fn trial_only(&self) -> Dataset {
        Dataset {
            covariate_names: self.covariate_names.clone(),
            records: self
                .records
                .iter()
                .filter(|r| r.source.is_trial())
                .cloned()
                .collect(),
            n_trial: self.n_trial,
        }
    }
}

/// Weighted responder / non-responder totals of one group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedCounts {
    /// Σ wᵢ yᵢ
    pub s1: f64,
    /// Σ wᵢ (1 − yᵢ)
    pub s0: f64,
}

impl WeightedCounts {
    pub fn new(s1: f64, s0: f64) -> Result<Self> {
        if !(s1.is_finite() && s0.is_finite()) || s1 < 0.0 || s0 < 0.0 {
            return Err(Error::Input(format!(
                "weighted counts must be finite and nonnegative, got ({s1}, {s0})"
            )));
        }
        Ok(Self { s1, s0 })
    }

    pub fn from_weighted(rows: impl IntoIterator<Item = (bool, f64)>) -> Self {
        let mut out = Self::default();
        for (y, w) in rows {
            if y {
                out.s1 += w;
            } else {
                out.s0 += w;
            }
        }
        out
    }

    pub fn n_effective(&self) -> f64 {
        self.s1 + self.s0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            s1: self.s1 * factor,
            s0: self.s0 * factor,
        }
    }
}

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams {
        alpha: 1.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::Domain(format!(
                "Beta parameters must be finite and positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Conjugate posterior under a U(0,1) prior on the rate.
    pub fn posterior_from_uniform(counts: WeightedCounts) -> Result<Self> {
        Self::new(counts.s1 + 1.0, counts.s0 + 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn ln_norm(&self) -> f64 {
        ln_beta_unchecked(self.alpha, self.beta)
    }
}

impl TryFrom<(f64, f64)> for BetaParams {
    type Error = Error;

    fn try_from((a, b): (f64, f64)) -> Result<Self> {
        Self::new(a, b)
    }
}

impl From<BetaParams> for (f64, f64) {
    fn from(p: BetaParams) -> Self {
        (p.alpha, p.beta)
    }
}

/// Point estimate and equal-tailed 95% interval for a response rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// Posterior mean of the power parameter, for methods that sample it.
    pub delta_mean: Option<f64>,
    /// Number of draws behind the summary; `None` for closed-form results.
    pub n_samples: Option<usize>,
}

impl PosteriorSummary {
    /// Exact summary of a Beta posterior.
    pub fn from_beta(params: BetaParams) -> Result<Self> {
        Ok(Self {
            mean: params.mean(),
            sd: params.variance().sqrt(),
            q025: beta_quantile(params, 0.025)?,
            q975: beta_quantile(params, 0.975)?,
            delta_mean: None,
            n_samples: None,
        })
    }

    /// Monte Carlo summary: sample mean, sample sd and type-7 quantiles.
    pub fn from_samples(theta: &[f64], delta: Option<&[f64]>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Input("cannot summarize an empty sample".into()));
        }
        let n = theta.len();
        let mean = theta.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (theta.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = theta.to_vec();
        sorted.sort_by(f64::total_cmp);
        let delta_mean = delta
            .filter(|d| !d.is_empty())
            .map(|d| d.iter().sum::<f64>() / d.len() as f64);
        Ok(Self {
            mean,
            sd,
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
            delta_mean,
            n_samples: Some(n),
        })
    }

    pub fn width(&self) -> f64 {
        self.q975 - self.q025
    }

    pub fn contains(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

/// Type-7 (linear interpolation) quantile of already-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
