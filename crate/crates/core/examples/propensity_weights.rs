//! Fit the propensity model on simulated mixture data and compare covariate
//! balance under each weighting scheme.
//!
//! cargo run --release --example propensity_weights

use propp::propensity::{
    standardized_mean_diff, weight_dataset, PropensityOptions, WeightScheme, WeightVariant,
};
use propp::seed;
use propp::simulation::{generate_dataset, Scenario, ScenarioConfig, Setting};

fn main() -> propp::Result<()> {
    let cfg = ScenarioConfig::new(Scenario::Mixture, Setting::EqualN);
    let data = generate_dataset(&cfg, -0.5, &mut seed::rng(1))?;
    let unweighted = standardized_mean_diff(&data, &vec![1.0; data.len()])?;
    println!("{:<14} {}", "unweighted", fmt(&unweighted));

    for variant in [WeightVariant::Ate, WeightVariant::AtTrial, WeightVariant::AtExternal] {
        for capped in [false, true] {
            let opts = PropensityOptions {
                scheme: WeightScheme::new(variant, capped),
                ..PropensityOptions::default()
            };
            let (model, wd, _) = weight_dataset(&data, &opts)?;
            let smd = standardized_mean_diff(&data, wd.weights())?;
            let name = format!("{variant}{}", if capped { " capped" } else { "" });
            println!("{name:<14} {}   (converged in {} steps)", fmt(&smd), model.iterations);
        }
    }
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>().join(" ")
}
