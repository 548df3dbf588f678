//! Reuse one sketch for several rounds of dual recovery; the error shrinks
//! by roughly the single-round error each time.

use dualrp::loss::LossSpec;
use dualrp::model::{make_low_rank, LabelRule};
use dualrp::recover::recover_iterative;
use dualrp::sketch::ProjectionSketch;
use dualrp::solve::{solve_primal, SolverConfig};

fn main() -> dualrp::Result<()> {
    let data = make_low_rank(1000, 300, 5, LabelRule::SignOfPlant, 3)?;
    let loss = LossSpec::logistic();
    let config = SolverConfig::default();
    let exact = solve_primal(data.features(), data.labels(), &loss, 1.0, &SolverConfig::new(1e-12, 1000)?)?;

    let sketch = ProjectionSketch::gaussian(&data, 150, 3)?;
    let (result, trace) = recover_iterative(&data, &loss, 1.0, &sketch, 8, &config, Some(&exact.weights))?;

    println!("round  rel_error   ratio");
    for (t, e) in trace.per_iteration_errors.iter().enumerate() {
        let ratio = if t == 0 { String::new() } else { format!("{:.3}", e / trace.per_iteration_errors[t - 1]) };
        println!("{t:>5}  {e:.3e}  {ratio}");
    }
    println!("final relative error {:.3e}", result.rel_error.unwrap_or(f64::NAN));
    Ok(())
}
