//! Every borrowing method on the same aggregate data, from no borrowing to
//! full pooling.
//!
//! cargo run --release --example borrowing_methods

use propp::borrowing::{
    delta_density_grid, fit_fixed_power, fit_ignore, fit_mpp, fit_pooled, BorrowingInput, DeltaPrior,
};
use propp::model::{Dataset, PosteriorSummary};

fn main() -> propp::Result<()> {
    let data = Dataset::from_counts(75, 132, 129, 241)?;
    let prior = DeltaPrior::default();

    show("ignore", &fit_ignore(&data)?);
    for d in [0.25, 0.5, 0.75] {
        show(&format!("fixed δ={d}"), &fit_fixed_power(&data, d)?);
    }
    show("pool", &fit_pooled(&data)?);
    let (_, mpp) = fit_mpp(&data, &prior, 10_000, 42)?;
    show("mpp", &mpp);
    println!("posterior mean of δ: {:.3}", mpp.delta_mean.unwrap_or(f64::NAN));

    // coarse view of the marginal density of δ
    let input = BorrowingInput::from_dataset(&data)?;
    for (d, density) in delta_density_grid(&input, &prior, 11)? {
        println!("δ={d:.1} {:<40} {density:.3}", "#".repeat((density * 20.0) as usize));
    }
    Ok(())
}

fn show(name: &str, s: &PosteriorSummary) {
    println!("{name:<12} mean {:.4}  95% CrI ({:.4}, {:.4})", s.mean, s.q025, s.q975);
}
