//! Solve a logistic regression problem in a 443-dimensional sketch of a
//! 2000-dimensional space and recover the full solution through the duals.

use dualrp::concentration::{drp_error_bound, sample_size_bound};
use dualrp::loss::LossSpec;
use dualrp::model::{make_low_rank, LabelRule};
use dualrp::recover::{recover_drp, relative_error};
use dualrp::sketch::ProjectionSketch;
use dualrp::solve::{solve_primal, SolverConfig};

fn main() -> dualrp::Result<()> {
    let (d, n, rank, lambda) = (2000, 300, 5, 1.0);
    let data = make_low_rank(d, n, rank, LabelRule::SignOfPlant, 42)?;
    let loss = LossSpec::logistic();
    let config = SolverConfig::default();

    let m = sample_size_bound(rank, 0.5, 0.1, 0.25)?;
    let sketch = ProjectionSketch::gaussian(&data, m, 42)?;

    let exact = solve_primal(data.features(), data.labels(), &loss, lambda, &config)?;
    let rec = recover_drp(&data, &loss, lambda, &sketch, &config)?;
    let sketched = rec.sketched.as_ref().expect("drp solves a sketched problem");

    println!("d = {d}, n = {n}, rank = {rank}, sketch dimension m = {m}");
    println!("exact solve:    {} Newton steps in R^{d}", exact.iterations);
    println!("sketched solve: {} Newton steps in R^{m}", sketched.iterations);
    println!(
        "relative error of the recovered solution: {:.4} (bound {:.1})",
        relative_error(&rec.recovered, &exact.weights),
        drp_error_bound(0.5)
    );
    Ok(())
}
