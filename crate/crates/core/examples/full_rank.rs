//! Dual recovery when the data is full rank with decaying singular values.

use dualrp::cli::{run_experiment_with_workers, validate_config};

fn main() -> dualrp::Result<()> {
    let config = validate_config(
        "experiment = full_rank
         d = 300
         n = 300
         loss = logistic
         lambda = 1
         epsilon = 0.5
         sketch_dim = bound
         trials = 3",
    )?;
    let report = run_experiment_with_workers(&config, 1)?;
    for r in &report.records {
        println!(
            "seed {} m {} k {} error {:.4} bound {:.3} leakage {:.3}",
            r.seed,
            r.m,
            r.metrics["k"],
            r.rel_error.unwrap_or(f64::NAN),
            r.bound.as_ref().map_or(f64::NAN, |b| b.value),
            r.metrics.get("leakage").copied().unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
