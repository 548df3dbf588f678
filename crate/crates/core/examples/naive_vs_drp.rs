//! Mapping the sketched solution back through the projection loses
//! everything outside the span of the data; the dual recovery does not.

use dualrp::concentration::naive_error_lower_bound;
use dualrp::loss::LossSpec;
use dualrp::model::{make_low_rank, spectrum, LabelRule, DEFAULT_RANK_THRESHOLD};
use dualrp::recover::{recover_drp, recover_naive, relative_error, span_restricted_error};
use dualrp::sketch::ProjectionSketch;
use dualrp::solve::{solve_primal, SolverConfig};

fn main() -> dualrp::Result<()> {
    let (d, m) = (5000, 500);
    let data = make_low_rank(d, 300, 5, LabelRule::SignOfPlant, 1)?;
    let loss = LossSpec::logistic();
    let config = SolverConfig::default();
    let exact = solve_primal(data.features(), data.labels(), &loss, 1.0, &config)?.weights;

    let sketch = ProjectionSketch::gaussian(&data, m, 1)?;
    let drp = recover_drp(&data, &loss, 1.0, &sketch, &config)?;
    let z = &drp.sketched.as_ref().unwrap().weights;
    let naive = recover_naive(sketch.matrix_r(), z, m)?;
    let svd = spectrum(&data, DEFAULT_RANK_THRESHOLD)?;

    println!("naive error           {:.3}", relative_error(&naive, &exact));
    println!("  lower bound (eps=0) {:.3}", naive_error_lower_bound(d, 5, m, 0.0));
    println!("  within span(X)      {:.3}", span_restricted_error(&svd, &naive, &exact)? / exact.norm());
    println!("dual recovery error   {:.4}", relative_error(&drp.recovered, &exact));
    Ok(())
}
