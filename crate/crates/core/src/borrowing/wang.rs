//! Propensity-score stratified power prior with a fixed borrowing budget.
//!
//! Comparator method: the trial's propensity scores are cut into quantile
//! strata, a total of `borrow_fraction × N₀` external patients is shared
//! across strata in proportion to how well the two sources overlap there,
//! and each stratum gets a fixed power prior. The overall rate is the
//! trial-size weighted average of the stratum rates.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{quantile_sorted, BetaParams, Dataset, PosteriorSummary, Source};
use crate::seed;

pub const DEFAULT_STRATA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WangOptions {
    pub n_strata: usize,
    /// Share of the trial size that may be borrowed, in (0, 1].
    pub borrow_fraction: f64,
    /// Draws used for the interval and sd of the combined rate.
    pub n_draws: usize,
    pub seed: u64,
}

impl WangOptions {
    pub fn new(borrow_fraction: f64, seed: u64) -> Self {
        Self {
            n_strata: DEFAULT_STRATA,
            borrow_fraction,
            n_draws: 10_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub lower: f64,
    pub upper: f64,
    pub n_trial: usize,
    pub trial_responders: usize,
    pub n_external: usize,
    pub external_responders: usize,
    /// min(n₀ₛ, nₑₛ) / max(n₀ₛ, nₑₛ)
    pub overlap: f64,
    /// Number of external patients allotted to this stratum.
    pub allotment: f64,
    /// Fixed power applied to the stratum's external likelihood.
    pub delta: f64,
    pub posterior: BetaParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WangFit {
    pub summary: PosteriorSummary,
    pub strata: Vec<Stratum>,
    /// External patients dropped for falling outside the trial's score range.
    pub n_trimmed: usize,
    /// Total borrowing budget, `borrow_fraction × N₀`.
    pub budget: f64,
}

impl WangFit {
    /// Effective number of external patients borrowed, Σ δₛ·nₑₛ.
    pub fn borrowed(&self) -> f64 {
        self.strata.iter().map(|s| s.delta * s.n_external as f64).sum()
    }

    pub fn empty_external_strata(&self) -> usize {
        self.strata.iter().filter(|s| s.n_external == 0).count()
    }
}

pub fn fit_wang_stratified(data: &Dataset, scores: &[f64], opts: &WangOptions) -> Result<WangFit> {
    if scores.len() != data.len() {
        return Err(Error::Input(format!(
            "{} scores for {} patients",
            scores.len(),
            data.len()
        )));
    }
    if opts.n_strata < 2 {
        return Err(Error::Input("at least two strata are required".into()));
    }
    if !(opts.borrow_fraction > 0.0 && opts.borrow_fraction <= 1.0) {
        return Err(Error::Input(format!(
            "borrow fraction must lie in (0, 1], got {}",
            opts.borrow_fraction
        )));
    }
    if opts.n_draws == 0 {
        return Err(Error::Input("n_draws must be positive".into()));
    }

    let mut trial_scores: Vec<f64> = data
        .records()
        .iter()
        .zip(scores)
        .filter(|(r, _)| r.source.is_trial())
        .map(|(_, s)| *s)
        .collect();
    trial_scores.sort_by(f64::total_cmp);
    let (lo, hi) = (trial_scores[0], trial_scores[trial_scores.len() - 1]);
    let cuts: Vec<f64> = (1..opts.n_strata)
        .map(|s| quantile_sorted(&trial_scores, s as f64 / opts.n_strata as f64))
        .collect();
    let stratum_of = |s: f64| cuts.iter().position(|c| s <= *c).unwrap_or(cuts.len());

    let mut tallies = vec![[0usize; 4]; opts.n_strata];
    let mut n_trimmed = 0;
    for (r, &s) in data.records().iter().zip(scores) {
        match r.source {
            Source::Trial => {
                let t = &mut tallies[stratum_of(s)];
                t[0] += 1;
                t[1] += usize::from(r.outcome);
            }
            Source::External => {
                if s < lo || s > hi {
                    n_trimmed += 1;
                    continue;
                }
                let t = &mut tallies[stratum_of(s)];
                t[2] += 1;
                t[3] += usize::from(r.outcome);
            }
        }
    }
    if let Some(empty) = tallies.iter().position(|t| t[0] == 0) {
        return Err(Error::Stratification(format!(
            "stratum {} contains no trial patients",
            empty + 1
        )));
    }

    let overlaps: Vec<f64> = tallies
        .iter()
        .map(|t| {
            let (a, b) = (t[0] as f64, t[2] as f64);
            if a.max(b) > 0.0 {
                a.min(b) / a.max(b)
            } else {
                0.0
            }
        })
        .collect();
    let total_overlap: f64 = overlaps.iter().sum();
    let n0 = data.n_trial() as f64;
    let budget = opts.borrow_fraction * n0;

    let mut strata = Vec::with_capacity(opts.n_strata);
    for (s, (t, &overlap)) in tallies.iter().zip(&overlaps).enumerate() {
        let allotment = if total_overlap > 0.0 {
            budget * overlap / total_overlap
        } else {
            0.0
        };
        let n_ext = t[2] as f64;
        let delta = if t[2] > 0 { (allotment / n_ext).min(1.0) } else { 0.0 };
        let posterior = BetaParams::new(
            (delta * t[3] as f64 + t[1] as f64) + 1.0,
            (delta * (t[2] - t[3]) as f64 + (t[0] - t[1]) as f64) + 1.0,
        )?;
        strata.push(Stratum {
            lower: if s == 0 { lo } else { cuts[s - 1] },
            upper: if s == cuts.len() { hi } else { cuts[s] },
            n_trial: t[0],
            trial_responders: t[1],
            n_external: t[2],
            external_responders: t[3],
            overlap,
            allotment,
            delta,
            posterior,
        });
    }

    let shares: Vec<f64> = strata.iter().map(|s| s.n_trial as f64 / n0).collect();
    let mean: f64 = strata
        .iter()
        .zip(&shares)
        .map(|(s, w)| w * s.posterior.mean())
        .sum();

    let samplers = strata
        .iter()
        .map(|s| {
            Beta::new(s.posterior.alpha(), s.posterior.beta())
                .map_err(|e| Error::Domain(format!("invalid stratum posterior: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seed::rng(opts.seed);
    let draws: Vec<f64> = (0..opts.n_draws)
        .map(|_| {
            samplers
                .iter()
                .zip(&shares)
                .map(|(b, w)| w * b.sample(&mut rng))
                .sum()
        })
        .collect();
    let mut summary = PosteriorSummary::from_samples(&draws, None)?;
    summary.mean = mean;

    Ok(WangFit {
        summary,
        strata,
        n_trimmed,
        budget,
    })
}
