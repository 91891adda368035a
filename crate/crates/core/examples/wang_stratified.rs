//! Stratified fixed-budget borrowing, with and without a covariate shift.
//!
//! cargo run --release --example wang_stratified

use propp::borrowing::{fit_wang_stratified, WangOptions};
use propp::propensity::{weight_dataset, PropensityOptions};
use propp::seed;
use propp::simulation::{generate_dataset, Scenario, ScenarioConfig, Setting};

fn main() -> propp::Result<()> {
    for (label, scenario, mu_e) in [("no shift", Scenario::Drift, 0.0), ("shifted", Scenario::NoMixture, -0.5)] {
        let mut cfg = ScenarioConfig::new(scenario, Setting::EqualN);
        cfg.mu_e = mu_e;
        let data = generate_dataset(&cfg, mu_e, &mut seed::rng(3))?;
        let (_, wd, _) = weight_dataset(&data, &PropensityOptions::default())?;
        println!("== {label}");
        for fraction in [0.1, 0.2] {
            match fit_wang_stratified(&data, wd.scores(), &WangOptions::new(fraction, 3)) {
                Ok(fit) => {
                    println!(
                        "{:.0}%: mean {:.4} ({:.4}, {:.4}); borrowed {:.1} of {:.0}; {} trimmed",
                        100.0 * fraction,
                        fit.summary.mean,
                        fit.summary.q025,
                        fit.summary.q975,
                        fit.borrowed(),
                        fit.budget,
                        fit.n_trimmed
                    );
                    for s in &fit.strata {
                        println!(
                            "   [{:.3}, {:.3}] trial {:>3} external {:>3} δ {:.3}",
                            s.lower, s.upper, s.n_trial, s.n_external, s.delta
                        );
                    }
                }
                Err(e) => println!("{:.0}%: failed: {e}", 100.0 * fraction),
            }
        }
    }
    Ok(())
}
