//! The full two-stage analysis on the synthetic melanoma cohort: propensity
//! weights, covariate balance, and trial-only / external-only / ProPP
//! posteriors.
//!
//! cargo run --release --example case_study

use propp::analysis::{run_analysis, AnalysisConfig, MethodSpec};
use propp::demo::generate_demo_data;

fn main() -> propp::Result<()> {
    let cohort = generate_demo_data(2024);
    let data = cohort.to_dataset()?;
    let doc = run_analysis(&data, "synthetic cohort", &AnalysisConfig::new(MethodSpec::Propp, 7))?;

    for (name, s) in &doc.results {
        println!("{name:<14} mean {:.4}  95% CrI ({:.4}, {:.4})", s.mean, s.q025, s.q975);
    }
    if let Some(p) = &doc.propensity {
        println!("\nexternal weights: sum {:.1}, {} below 1e-3", p.external_weight_sum, p.near_zero_weights);
        let frail: Vec<f64> = cohort
            .patients
            .iter()
            .zip(&p.patients)
            .filter(|(c, _)| c.is_frail())
            .map(|(_, w)| w.weight)
            .collect();
        println!(
            "{} frail patients (ECOG ≥ 2 or unresectable stage III), largest weight {:.2e}",
            frail.len(),
            frail.iter().cloned().fold(0.0, f64::max)
        );
        println!("\n{:<32} {:>10} {:>10}", "covariate", "SMD raw", "SMD wtd");
        for row in &p.balance {
            println!(
                "{:<32} {:>10.3} {:>10.3}",
                row.covariate,
                row.smd_unweighted.unwrap_or(f64::NAN),
                row.smd_weighted.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
