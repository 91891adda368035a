//! RMSE and type-I error across a drift sweep for every method.
//!
//! cargo run --release --example operating_characteristics -- [replicates]

use propp::simulation::{run_grid, Scenario, ScenarioConfig, Setting};

fn main() -> propp::Result<()> {
    let replicates = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let mut cfg = ScenarioConfig::new(Scenario::Drift, Setting::EqualN);
    cfg.replicates = replicates;
    cfg.seed = 1;

    let rows = run_grid(&cfg, &[-0.25, 0.0, 0.25])?;
    println!("{:>6} {:<8} {:>8} {:>7} {:>8}", "η", "method", "RMSE", "type-I", "failures");
    for r in rows {
        println!(
            "{:>6.3} {:<8} {:>8.4} {:>7.3} {:>8}",
            r.grid_value,
            r.method.to_string(),
            r.rmse,
            r.type1,
            r.failures
        );
    }
    Ok(())
}
