//! Synthetic cohort shaped like a single-arm melanoma trial (N = 132) plus
//! an expanded-access program (N = 241).
//!
//! Group sizes, every categorical count and the responder counts are fixed
//! exactly; only ages and the pairing of characteristics to patients vary
//! with the seed. ECOG ≥ 2 and unresectable stage III occur only in the
//! external group, and responses lean towards ECOG 0–1, so propensity
//! weighting visibly changes the external contribution.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::io::{write_atomic, RawRow, RawTable};
use crate::model::{Dataset, Source};
use crate::seed;

struct GroupSpec {
    source: Source,
    n: usize,
    responders: usize,
    age_mean: f64,
    age_sd: f64,
    sex: &'static [(&'static str, usize)],
    stage: &'static [(&'static str, usize)],
    ecog: &'static [(&'static str, usize)],
}

const UNRESECTABLE: &str = "Unresectable Stage III";

const EXTERNAL: GroupSpec = GroupSpec {
    source: Source::External,
    n: 241,
    responders: 129,
    age_mean: 53.0,
    age_sd: 13.0,
    sex: &[("Female", 95), ("Male", 146)],
    stage: &[
        ("M1a", 22),
        ("M1b", 26),
        ("M1c", 182),
        (UNRESECTABLE, 11),
    ],
    ecog: &[("Grade 0", 112), ("Grade 1", 98), ("Grade 2", 30), ("Grade 3", 1)],
};

// The published stage counts cover 131 of the 132 trial patients; the
// remaining patient is recorded with an unknown stage.
const TRIAL: GroupSpec = GroupSpec {
    source: Source::Trial,
    n: 132,
    responders: 75,
    age_mean: 50.0,
    age_sd: 15.0,
    sex: &[("Female", 51), ("Male", 81)],
    stage: &[("M1a", 33), ("M1b", 18), ("M1c", 80), ("Unknown", 1)],
    ecog: &[("Grade 0", 61), ("Grade 1", 71)],
};

pub const AGE_RANGE: (f64, f64) = (18.0, 90.0);

/// Column names of the demo CSV, after `source` and `outcome`.
pub const COLUMNS: [&str; 4] = ["age", "sex", "stage", "ecog"];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoPatient {
    pub source: Source,
    pub outcome: bool,
    pub age: f64,
    pub sex: &'static str,
    pub stage: &'static str,
    pub ecog: &'static str,
}

impl DemoPatient {
    /// ECOG ≥ 2 or unresectable stage III: both absent from the trial.
    pub fn is_frail(&self) -> bool {
        poor_performance(self.ecog) || self.stage == UNRESECTABLE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoCohort {
    pub seed: u64,
    pub patients: Vec<DemoPatient>,
}

fn expand_counts(spec: &[(&'static str, usize)]) -> Vec<&'static str> {
    spec.iter()
        .flat_map(|(label, n)| std::iter::repeat_n(*label, *n))
        .collect()
}

fn response_propensity(ecog: &str) -> f64 {
    match ecog {
        "Grade 0" => 1.2,
        "Grade 1" => 1.0,
        _ => 0.5,
    }
}

fn poor_performance(ecog: &str) -> bool {
    matches!(ecog, "Grade 2" | "Grade 3")
}

// In the source cohort the ECOG ≥ 2 and unresectable stage III patients are
// disjoint groups; swap ECOG labels until that holds, keeping both margins.
fn separate_frail_groups<R: Rng>(stage: &[&str], ecog: &mut [&'static str], rng: &mut R) {
    for i in 0..stage.len() {
        if stage[i] == UNRESECTABLE && poor_performance(ecog[i]) {
            let candidates: Vec<usize> = (0..stage.len())
                .filter(|&j| stage[j] != UNRESECTABLE && !poor_performance(ecog[j]))
                .collect();
            let j = candidates[rng.random_range(0..candidates.len())];
            ecog.swap(i, j);
        }
    }
}

fn generate_group<R: Rng>(spec: &GroupSpec, rng: &mut R) -> Vec<DemoPatient> {
    let mut sex = expand_counts(spec.sex);
    let mut stage = expand_counts(spec.stage);
    let mut ecog = expand_counts(spec.ecog);
    debug_assert!(sex.len() == spec.n && stage.len() == spec.n && ecog.len() == spec.n);
    sex.shuffle(rng);
    stage.shuffle(rng);
    ecog.shuffle(rng);
    separate_frail_groups(&stage, &mut ecog, rng);

    let ages = Normal::new(spec.age_mean, spec.age_sd).expect("valid age distribution");
    let mut patients: Vec<DemoPatient> = (0..spec.n)
        .map(|i| {
            let age = loop {
                let a: f64 = ages.sample(rng);
                if (AGE_RANGE.0..=AGE_RANGE.1).contains(&a) {
                    break (a * 10.0).round() / 10.0;
                }
            };
            DemoPatient {
                source: spec.source,
                outcome: false,
                age,
                sex: sex[i],
                stage: stage[i],
                ecog: ecog[i],
            }
        })
        .collect();

    // weighted sampling without replacement (exponential keys) picks exactly
    // `responders` patients, tilted towards good performance status
    let mut keys: Vec<(f64, usize)> = patients
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / response_propensity(p.ecog), i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in keys.iter().take(spec.responders) {
        patients[i].outcome = true;
    }
    patients
}

pub fn generate_demo_data(seed: u64) -> DemoCohort {
    let mut rng = seed::rng(seed);
    let mut patients = generate_group(&TRIAL, &mut rng);
    patients.extend(generate_group(&EXTERNAL, &mut rng));
    DemoCohort { seed, patients }
}

impl DemoCohort {
    pub fn raw_table(&self) -> RawTable {
        RawTable {
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: self
                .patients
                .iter()
                .enumerate()
                .map(|(i, p)| RawRow {
                    line: i + 2,
                    source: p.source,
                    outcome: p.outcome,
                    cells: vec![
                        p.age.to_string(),
                        p.sex.to_owned(),
                        p.stage.to_owned(),
                        p.ecog.to_owned(),
                    ],
                })
                .collect(),
        }
    }

    /// The cohort as the numeric dataset that reading its CSV produces.
    pub fn to_dataset(&self) -> Result<Dataset> {
        self.raw_table().expand()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::NonNumeric)
            .from_writer(Vec::new());
        w.write_record(["source", "outcome"].iter().chain(COLUMNS.iter()))?;
        for p in &self.patients {
            // numbers are written as fields the reader parses as numeric
            w.write_record([
                p.source.label(),
                if p.outcome { "1" } else { "0" },
                &p.age.to_string(),
                p.sex,
                p.stage,
                p.ecog,
            ])?;
        }
        w.into_inner()
            .map_err(|e| crate::error::Error::io("<csv buffer>", e.into_error()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn count(&self, source: Source, pred: impl Fn(&DemoPatient) -> bool) -> usize {
        self.patients
            .iter()
            .filter(|p| p.source == source && pred(p))
            .count()
    }
}
