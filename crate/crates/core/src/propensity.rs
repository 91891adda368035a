//! First stage: propensity of trial membership and the patient weights
//! derived from it.
//!
//! The score λᵢ = Pr(Z = 1 | xᵢ) is fitted by ridge-penalized logistic
//! regression on standardized covariates. Standardization makes the penalty
//! scale-free, so affine rescaling of any covariate leaves the scores
//! unchanged. A small default penalty keeps the fit finite when a covariate
//! level occurs in only one source (quasi-complete separation); those
//! patients then get scores close to zero instead of a divergent fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Source, WeightedCounts};

pub const DEFAULT_RIDGE: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Smallest and largest representable scores strictly inside (0, 1).
const SCORE_MIN: f64 = f64::MIN_POSITIVE;
const SCORE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Penalty on the standardized slope coefficients (intercept is free).
    pub ridge: f64,
    /// Convergence threshold on the max-norm of the penalized gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Fitted logistic model for trial membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    /// Slopes on the standardized covariate scale.
    pub coefficients: Vec<f64>,
    pub covariate_means: Vec<f64>,
    pub covariate_sds: Vec<f64>,
    pub ridge: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PropensityModel {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x.iter().zip(self.covariate_means.iter().zip(&self.covariate_sds)))
                .map(|(b, (v, (m, s)))| b * (v - m) / s)
                .sum::<f64>()
    }
}

fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^eta) without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 35.0 {
        eta
    } else if eta < -35.0 {
        eta.exp()
    } else {
        eta.exp().ln_1p()
    }
}

/// Fit the propensity model by Newton–Raphson with step halving.
///
/// Non-convergence within `max_iter` is not an error: the last iterate is
/// returned with `converged = false` and the caller decides.
pub fn fit_propensity(data: &Dataset, opts: &FitOptions) -> Result<PropensityModel> {
    if data.n_external() == 0 {
        return Err(Error::Input(
            "propensity fit needs at least one external patient".into(),
        ));
    }
    if !(opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(Error::Input(format!("ridge must be finite and >= 0, got {}", opts.ridge)));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Input("tol must be > 0 and max_iter >= 1".into()));
    }

    let n = data.len();
    let k = data.k();
    let (means, sds) = column_moments(data)?;

    let p = k + 1;
    let mut design = DMatrix::<f64>::zeros(n, p);
    let mut z = DVector::<f64>::zeros(n);
    for (i, r) in data.records().iter().enumerate() {
        design[(i, 0)] = 1.0;
        for j in 0..k {
            design[(i, j + 1)] = (r.covariates[j] - means[j]) / sds[j];
        }
        z[i] = if r.source.is_trial() { 1.0 } else { 0.0 };
    }

    let share = data.n_trial() as f64 / n as f64;
    let mut beta = DVector::<f64>::zeros(p);
    beta[0] = (share / (1.0 - share)).ln();

    let objective = |b: &DVector<f64>| -> f64 {
        let eta = &design * b;
        let ll: f64 = eta
            .iter()
            .zip(z.iter())
            .map(|(e, zi)| zi * e - log1p_exp(*e))
            .sum();
        let penalty: f64 = b.iter().skip(1).map(|c| c * c).sum();
        ll - 0.5 * opts.ridge * penalty
    };

    let mut current = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let eta = &design * &beta;
        let probs: Vec<f64> = eta.iter().map(|e| expit(*e)).collect();
        let resid = DVector::from_iterator(n, z.iter().zip(&probs).map(|(zi, pi)| zi - pi));
        let mut grad = design.transpose() * resid;
        for j in 1..p {
            grad[j] -= opts.ridge * beta[j];
        }
        if grad.amax() < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut weighted = design.clone();
        for (i, pi) in probs.iter().enumerate() {
            let w = pi * (1.0 - pi);
            weighted.row_mut(i).scale_mut(w);
        }
        let mut hessian = design.transpose() * weighted;
        for j in 1..p {
            hessian[(j, j)] += opts.ridge;
        }
        let step = solve_spd(hessian, &grad);

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let value = objective(&candidate);
            if value.is_finite() && value >= current - 1e-12 * current.abs().max(1.0) {
                beta = candidate;
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(PropensityModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        covariate_means: means,
        covariate_sds: sds,
        ridge: opts.ridge,
        converged,
        iterations,
    })
}

fn column_moments(data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = data.len() as f64;
    let k = data.k();
    let mut means = vec![0.0; k];
    for r in data.records() {
        for (m, v) in means.iter_mut().zip(&r.covariates) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut sds = vec![0.0; k];
    for r in data.records() {
        for j in 0..k {
            sds[j] += (r.covariates[j] - means[j]).powi(2);
        }
    }
    for (j, s) in sds.iter_mut().enumerate() {
        *s = (*s / (n - 1.0).max(1.0)).sqrt();
        if !(*s > 0.0) {
            return Err(Error::Input(format!(
                "covariate `{}` is constant and cannot enter the propensity model",
                data.covariate_names()[j]
            )));
        }
    }
    Ok((means, sds))
}

fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let p = h.nrows();
    let mut jitter = 0.0;
    for _ in 0..10 {
        if let Some(chol) = h.clone().cholesky() {
            return chol.solve(g);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
        for j in 0..p {
            h[(j, j)] += jitter;
        }
    }
    // gradient ascent fallback; the step-halving loop takes care of scale
    g.clone()
}

/// Scores λᵢ ∈ (0, 1) for every record of `data`.
pub fn predict_scores(model: &PropensityModel, data: &Dataset) -> Result<Vec<f64>> {
    if data.k() != model.k() {
        return Err(Error::Input(format!(
            "dataset has {} covariates, model expects {}",
            data.k(),
            model.k()
        )));
    }
    Ok(data
        .records()
        .iter()
        .map(|r| expit(model.linear_predictor(&r.covariates)).clamp(SCORE_MIN, SCORE_MAX))
        .collect())
}

/// Target population of the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightVariant {
    /// Whole combined population: 1/λ and 1/(1−λ).
    Ate,
    /// Trial population: trial 1, external λ/(1−λ).
    #[serde(rename = "att")]
    AtTrial,
    /// External population: trial (1−λ)/λ, external 1.
    #[serde(rename = "ate-ext")]
    AtExternal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub variant: WeightVariant,
    /// Cap external weights at 1.
    pub capped: bool,
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self {
            variant: WeightVariant::AtTrial,
            capped: true,
        }
    }
}

impl WeightScheme {
    pub fn new(variant: WeightVariant, capped: bool) -> Self {
        Self { variant, capped }
    }

    pub fn weight(&self, score: f64, source: Source) -> f64 {
        let odds = score / (1.0 - score);
        let raw = match (self.variant, source) {
            (WeightVariant::Ate, Source::Trial) => 1.0 / score,
            (WeightVariant::Ate, Source::External) => 1.0 / (1.0 - score),
            (WeightVariant::AtTrial, Source::Trial) => 1.0,
            (WeightVariant::AtTrial, Source::External) => odds,
            (WeightVariant::AtExternal, Source::Trial) => 1.0 / odds,
            (WeightVariant::AtExternal, Source::External) => 1.0,
        };
        if self.capped && source == Source::External {
            raw.min(1.0)
        } else {
            raw
        }
    }
}

impl fmt::Display for WeightVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightVariant::Ate => "ate",
            WeightVariant::AtTrial => "att",
            WeightVariant::AtExternal => "ate-ext",
        })
    }
}

impl FromStr for WeightVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ate" => Ok(WeightVariant::Ate),
            "att" => Ok(WeightVariant::AtTrial),
            "ate-ext" => Ok(WeightVariant::AtExternal),
            other => Err(Error::Input(format!(
                "unknown weight scheme `{other}` (expected ate, att or ate-ext)"
            ))),
        }
    }
}

/// Per-patient weights under `scheme`.
pub fn compute_weights(scores: &[f64], sources: &[Source], scheme: WeightScheme) -> Result<Vec<f64>> {
    if scores.len() != sources.len() {
        return Err(Error::Input(format!(
            "{} scores for {} patients",
            scores.len(),
            sources.len()
        )));
    }
    scores
        .iter()
        .zip(sources)
        .map(|(&s, &src)| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Domain(format!("propensity score {s} outside (0, 1)")));
            }
            Ok(scheme.weight(s, src))
        })
        .collect()
}

/// Zero every external weight strictly below `floor`. Returns how many
/// weights were zeroed.
pub fn apply_weight_floor(weights: &mut [f64], sources: &[Source], floor: f64) -> usize {
    let mut zeroed = 0;
    for (w, src) in weights.iter_mut().zip(sources) {
        if *src == Source::External && *w < floor && *w != 0.0 {
            *w = 0.0;
            zeroed += 1;
        }
    }
    zeroed
}

/// A dataset with its propensity scores and patient weights attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset {
    dataset: Dataset,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedDataset {
    pub fn new(dataset: Dataset, scores: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = dataset.len();
        if scores.len() != n || weights.len() != n {
            return Err(Error::Input(format!(
                "expected {n} scores and weights, got {} and {}",
                scores.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Input("weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            dataset,
            scores,
            weights,
        })
    }

    /// Every patient weighted 1 (scores set to 0.5); the unweighted power prior.
    pub fn unit_weights(dataset: Dataset) -> Self {
        let n = dataset.len();
        Self {
            dataset,
            scores: vec![0.5; n],
            weights: vec![1.0; n],
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn counts(&self, source: Source) -> WeightedCounts {
        WeightedCounts::from_weighted(
            self.dataset
                .records()
                .iter()
                .zip(&self.weights)
                .filter(|(r, _)| r.source == source)
                .map(|(r, w)| (r.outcome, *w)),
        )
    }

    /// True when every trial weight is 1 and every external weight is in [0, 1].
    pub fn satisfies_trial_cap(&self) -> bool {
        self.dataset
            .records()
            .iter()
            .zip(&self.weights)
            .all(|(r, &w)| match r.source {
                Source::Trial => w == 1.0,
                Source::External => (0.0..=1.0).contains(&w),
            })
    }
}

/// Settings for the whole first stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityOptions {
    pub fit: FitOptions,
    pub scheme: WeightScheme,
    /// External weights below this are set to zero; 0 disables trimming.
    pub weight_floor: f64,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            scheme: WeightScheme::default(),
            weight_floor: 0.0,
        }
    }
}

/// Fit, score and weight in one go.
pub fn weight_dataset(
    data: &Dataset,
    opts: &PropensityOptions,
) -> Result<(PropensityModel, WeightedDataset, usize)> {
    let model = fit_propensity(data, &opts.fit)?;
    let scores = predict_scores(&model, data)?;
    let sources = data.sources();
    let mut weights = compute_weights(&scores, &sources, opts.scheme)?;
    let floored = apply_weight_floor(&mut weights, &sources, opts.weight_floor);
    let wd = WeightedDataset::new(data.clone(), scores, weights)?;
    Ok((model, wd, floored))
}

/// Covariate balance: (weighted external mean − weighted trial mean) divided
/// by the pooled unweighted standard deviation, per covariate.
pub fn standardized_mean_diff(data: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != data.len() {
        return Err(Error::Input(format!(
            "{} weights for {} patients",
            weights.len(),
            data.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Input("weights must be finite and nonnegative".into()));
    }
    let group_weight = |src: Source| -> f64 {
        data.records()
            .iter()
            .zip(weights)
            .filter(|(r, _)| r.source == src)
            .map(|(_, w)| w)
            .sum()
    };
    let (wt, we) = (group_weight(Source::Trial), group_weight(Source::External));
    if !(wt > 0.0) || !(we > 0.0) {
        return Err(Error::DiagnosticUnavailable(
            "all weights are zero within one of the groups".into(),
        ));
    }

    let k = data.k();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut sums = [0.0f64; 2];
        let mut raw: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (r, w) in data.records().iter().zip(weights) {
            let g = usize::from(!r.source.is_trial());
            sums[g] += w * r.covariates[j];
            raw[g].push(r.covariates[j]);
        }
        let diff = sums[1] / we - sums[0] / wt;
        let pooled = ((sample_variance(&raw[0]) + sample_variance(&raw[1])) / 2.0).sqrt();
        out.push(if diff == 0.0 { 0.0 } else { diff / pooled });
    }
    Ok(out)
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
