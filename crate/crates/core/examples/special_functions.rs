//! Conjugate Beta summaries from the log-gamma / incomplete-beta toolkit.
//!
//! cargo run --example special_functions

use propp::model::BetaParams;
use propp::special::{beta_cdf, beta_quantile, log_beta, log_gamma};

fn main() -> propp::Result<()> {
    println!("lnΓ(0.5) = {:.12}  (ln √π = {:.12})", log_gamma(0.5)?, std::f64::consts::PI.sqrt().ln());
    println!("lnB(76, 58) = {:.10}", log_beta(76.0, 58.0)?);

    for (label, a, b) in [("trial 75/132", 76.0, 58.0), ("external 129/241", 130.0, 113.0)] {
        let p = BetaParams::new(a, b)?;
        println!(
            "{label:>17}: Beta({a}, {b}) mean {:.4}, 95% CrI ({:.4}, {:.4})",
            p.mean(),
            beta_quantile(p, 0.025)?,
            beta_quantile(p, 0.975)?
        );
    }

    let p = BetaParams::new(76.0, 58.0)?;
    println!("P(θ < 0.5 | trial) = {:.4}", beta_cdf(p, 0.5)?);
    Ok(())
}
