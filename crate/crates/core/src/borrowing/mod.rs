//! Second stage: posterior inference for the response rate θ.
//!
//! The propensity-weighted power prior raises each external patient's
//! likelihood contribution to `δ · wᵢ`. With a U(0,1) prior on θ, the
//! normalizing constant of the power prior is a Beta function and θ
//! integrates out, leaving a one-dimensional marginal for δ:
//!
//! ```text
//! log π(δ | y) = log B(δ·s1ₑ + s1₀ + 1, δ·s0ₑ + s0₀ + 1)
//!              − log B(δ·s1ₑ + 1,       δ·s0ₑ + 1)
//!              + (α_δ − 1) log δ + (β_δ − 1) log(1 − δ)      + const
//! ```
//!
//! where `s1`, `s0` are weighted responder / non-responder totals. δ is drawn
//! by rejection sampling and θ | δ is Beta, so the joint draw is exact.
//! Unit weights reduce everything here to the modified power prior.

mod wang;

pub use wang::{fit_wang_stratified, Stratum, WangFit, WangOptions, DEFAULT_STRATA};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BetaParams, Dataset, PosteriorSummary, Source, WeightedCounts};
use crate::propensity::WeightedDataset;
use crate::seed;
use crate::special::ln_beta_unchecked;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_GRID_SIZE: usize = 1001;
/// Safety factor applied to the grid maximum of the δ density.
pub const ENVELOPE_FACTOR: f64 = 1.05;

const DEGENERACY_WINDOW: u64 = 1_000_000;
const DEGENERACY_MIN_RATE: f64 = 1e-4;

/// Beta prior on the power parameter δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPrior(pub BetaParams);

impl Default for DeltaPrior {
    fn default() -> Self {
        DeltaPrior(BetaParams::UNIFORM)
    }
}

impl DeltaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Ok(DeltaPrior(BetaParams::new(alpha, beta)?))
    }

    pub fn is_uniform(&self) -> bool {
        self.0 == BetaParams::UNIFORM
    }

    fn ln_density_kernel(&self, delta: f64) -> f64 {
        let (a, b) = (self.0.alpha(), self.0.beta());
        let mut out = 0.0;
        if a != 1.0 {
            out += (a - 1.0) * delta.ln();
        }
        if b != 1.0 {
            out += (b - 1.0) * (-delta).ln_1p();
        }
        out
    }
}

/// The four sufficient statistics of the joint posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorrowingInput {
    pub trial: WeightedCounts,
    pub external: WeightedCounts,
}

impl BorrowingInput {
    pub fn new(trial: WeightedCounts, external: WeightedCounts) -> Result<Self> {
        let trial = WeightedCounts::new(trial.s1, trial.s0)?;
        let external = WeightedCounts::new(external.s1, external.s0)?;
        if trial.n_effective() < 1.0 {
            return Err(Error::Input(format!(
                "trial needs an effective size of at least 1, got {}",
                trial.n_effective()
            )));
        }
        Ok(Self { trial, external })
    }

    /// Convenience constructor from (responders, non-responders) pairs.
    pub fn from_pairs(trial: (f64, f64), external: (f64, f64)) -> Result<Self> {
        Self::new(
            WeightedCounts { s1: trial.0, s0: trial.1 },
            WeightedCounts { s1: external.0, s0: external.1 },
        )
    }

    pub fn from_weighted(wd: &WeightedDataset) -> Result<Self> {
        Self::new(wd.counts(Source::Trial), wd.counts(Source::External))
    }

    /// Unweighted counts, i.e. the modified power prior.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Self::new(data.counts(Source::Trial), data.counts(Source::External))
    }

    /// Beta parameters of θ | δ.
    pub fn conditional_theta(&self, delta: f64) -> BetaParams {
        let alpha = (delta * self.external.s1 + self.trial.s1) + 1.0;
        let beta = (delta * self.external.s0 + self.trial.s0) + 1.0;
        // both shapes are >= 1 by construction
        BetaParams::new(alpha, beta).expect("shape parameters are at least one")
    }

    /// δ-dependent part of the marginal that does not involve the δ prior.
    /// Finite on the closed interval [0, 1].
    pub fn ln_power_likelihood(&self, delta: f64) -> f64 {
        let (e1, e0) = (delta * self.external.s1, delta * self.external.s0);
        ln_beta_unchecked((e1 + self.trial.s1) + 1.0, (e0 + self.trial.s0) + 1.0)
            - ln_beta_unchecked(e1 + 1.0, e0 + 1.0)
    }
}

/// Paired posterior draws of θ and δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub seed: u64,
}

/// Log of the marginal posterior density of δ, up to an additive constant
/// shared by all δ.
pub fn log_marginal_delta(delta: f64, input: &BorrowingInput, prior: &DeltaPrior) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(input.ln_power_likelihood(delta) + prior.ln_density_kernel(delta))
}

/// Normalized marginal density of δ on an evenly spaced grid over [0, 1]
/// (trapezoid normalization). Useful for plotting and diagnostics.
pub fn delta_density_grid(
    input: &BorrowingInput,
    prior: &DeltaPrior,
    grid_size: usize,
) -> Result<Vec<(f64, f64)>> {
    if grid_size < 3 {
        return Err(Error::Input("grid needs at least 3 points".into()));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    // endpoints are nudged inward so that non-uniform priors stay finite
    let points: Vec<f64> = (0..grid_size)
        .map(|i| (i as f64 * step).clamp(1e-9, 1.0 - 1e-9))
        .collect();
    let logs: Vec<f64> = points
        .iter()
        .map(|&d| input.ln_power_likelihood(d) + prior.ln_density_kernel(d))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let area: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
    Ok(points
        .into_iter()
        .zip(dens)
        .map(|(d, v)| (d, v / area))
        .collect())
}

/// Draw `n` values of δ from its marginal posterior by rejection sampling.
///
/// Proposals come from the δ prior (uniform by default) and are accepted
/// with probability `exp(ℓ(δ) − ℓ_max) / 1.05`, where ℓ is the prior-free
/// part of the marginal and ℓ_max its maximum over a `grid_size`-point grid.
pub fn sample_delta(
    input: &BorrowingInput,
    prior: &DeltaPrior,
    n: usize,
    seed: u64,
    grid_size: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Input("number of draws must be positive".into()));
    }
    if grid_size < 2 {
        return Err(Error::Input("envelope grid needs at least 2 points".into()));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    let ln_max = (0..grid_size)
        .map(|i| input.ln_power_likelihood(i as f64 * step))
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_envelope = ln_max + ENVELOPE_FACTOR.ln();

    let mut rng = seed::rng(seed);
    let proposal = if prior.is_uniform() {
        None
    } else {
        Some(
            Beta::new(prior.0.alpha(), prior.0.beta())
                .map_err(|e| Error::Domain(format!("invalid delta prior: {e}")))?,
        )
    };

    let mut out = Vec::with_capacity(n);
    let mut proposals: u64 = 0;
    let mut accepted_in_window: u64 = 0;
    while out.len() < n {
        let delta: f64 = match &proposal {
            None => rng.random(),
            Some(beta) => beta.sample(&mut rng),
        };
        let u: f64 = rng.random();
        proposals += 1;
        if u.ln() < input.ln_power_likelihood(delta) - ln_envelope {
            out.push(delta);
            accepted_in_window += 1;
        }
        if proposals % DEGENERACY_WINDOW == 0 {
            let rate = accepted_in_window as f64 / DEGENERACY_WINDOW as f64;
            if rate < DEGENERACY_MIN_RATE {
                return Err(Error::SamplerDegeneracy { rate, proposals });
            }
            accepted_in_window = 0;
        }
    }
    Ok(out)
}

/// One draw of θ | δ for each δ in `delta_draws`.
pub fn sample_theta_given_delta(
    delta_draws: &[f64],
    input: &BorrowingInput,
    seed: u64,
) -> Result<Vec<f64>> {
    if delta_draws.is_empty() {
        return Err(Error::Input("no delta draws supplied".into()));
    }
    let mut rng = seed::rng(seed);
    delta_draws
        .iter()
        .map(|&d| {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::Domain(format!("delta draw {d} outside [0, 1]")));
            }
            let p = input.conditional_theta(d);
            let beta = Beta::new(p.alpha(), p.beta())
                .map_err(|e| Error::Domain(format!("invalid conditional Beta: {e}")))?;
            Ok(beta.sample(&mut rng))
        })
        .collect()
}

/// Sampling-based fit from precomputed sufficient statistics.
pub fn fit_power_posterior(
    input: &BorrowingInput,
    prior: &DeltaPrior,
    n: usize,
    seed: u64,
) -> Result<(PosteriorSamples, PosteriorSummary)> {
    let delta = sample_delta(input, prior, n, seed::derive(seed, 0), DEFAULT_GRID_SIZE)?;
    let theta = sample_theta_given_delta(&delta, input, seed::derive(seed, 1))?;
    let summary = PosteriorSummary::from_samples(&theta, Some(&delta))?;
    Ok((PosteriorSamples { theta, delta, seed }, summary))
}

/// Propensity-weighted modified power prior.
pub fn fit_propp(
    wd: &WeightedDataset,
    prior: &DeltaPrior,
    n: usize,
    seed: u64,
) -> Result<(PosteriorSamples, PosteriorSummary)> {
    fit_power_posterior(&BorrowingInput::from_weighted(wd)?, prior, n, seed)
}

/// Modified power prior: [`fit_propp`] with every weight equal to 1.
pub fn fit_mpp(
    data: &Dataset,
    prior: &DeltaPrior,
    n: usize,
    seed: u64,
) -> Result<(PosteriorSamples, PosteriorSummary)> {
    fit_propp(&WeightedDataset::unit_weights(data.clone()), prior, n, seed)
}

/// Trial data only, U(0,1) prior.
pub fn fit_ignore(data: &Dataset) -> Result<PosteriorSummary> {
    let t = data.counts(Source::Trial);
    if t.n_effective() < 1.0 {
        return Err(Error::Input("no trial patients".into()));
    }
    PosteriorSummary::from_beta(BetaParams::new(t.s1 + 1.0, t.s0 + 1.0)?)
}

/// Trial and external data pooled as one sample, U(0,1) prior.
pub fn fit_pooled(data: &Dataset) -> Result<PosteriorSummary> {
    let (t, e) = (data.counts(Source::Trial), data.counts(Source::External));
    if data.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    PosteriorSummary::from_beta(BetaParams::new((e.s1 + t.s1) + 1.0, (e.s0 + t.s0) + 1.0)?)
}

/// Power prior with a fixed δ ∈ [0, 1].
pub fn fit_fixed_power(data: &Dataset, delta: f64) -> Result<PosteriorSummary> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Input(format!("fixed power must lie in [0, 1], got {delta}")));
    }
    let input = BorrowingInput::from_dataset(data)?;
    PosteriorSummary::from_beta(input.conditional_theta(delta))
}
