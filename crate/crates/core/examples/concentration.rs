//! Sample-size bounds next to what Gaussian matrices actually need.

use dualrp::concentration::{
    concentration_trials, full_rank_sample_bound, ridge_identity_deviation, sample_size_bound, smallest_passing_m,
    FULL_RANK_CONSTANT,
};
use dualrp::model::{decaying_singular_values, effective_rank, make_decaying_spectrum};

fn main() -> dualrp::Result<()> {
    println!("rank  bound m  empirical m (95% of 40 draws)");
    for r in [1, 5, 20, 50] {
        let bound = sample_size_bound(r, 0.5, 0.1, 0.25)?;
        let empirical = smallest_passing_m(r, 0.5, 0.95, 40, 0, bound)?;
        println!("{r:>4}  {bound:>7}  {}", empirical.map_or("-".into(), |m| m.to_string()));
    }

    let report = concentration_trials(50, sample_size_bound(50, 0.5, 0.1, 0.25)?, 0.5, 0.1, 100, 0)?;
    println!(
        "rank 50 at the bound: {} of {} draws exceed 0.5, worst deviation {:.3}",
        report.failures, report.trials, report.deviation
    );

    let (d, n) = (200, 150);
    let sv = decaying_singular_values(d, n, 1.0);
    let m = full_rank_sample_bound(sv.as_slice(), 1.0, 1.0, 0.5, 0.1, d, FULL_RANK_CONSTANT)?;
    let data = make_decaying_spectrum(d, n, 1.0, 0)?;
    let (lo, hi) = ridge_identity_deviation(data.features(), 1.0, m, 0)?;
    println!(
        "full rank: effective rank {:.1}, bound m = {m}, whitened eigenvalues in [{lo:.3}, {hi:.3}]",
        effective_rank(sv.as_slice(), 1.0, 1.0)?
    );
    Ok(())
}
