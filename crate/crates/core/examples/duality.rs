//! Primal and dual solutions of the same problem, and the maps between them.

use dualrp::loss::LossSpec;
use dualrp::model::{gram, make_low_rank, LabelRule};
use dualrp::solve::{dual_from_primal, dual_objective, primal_from_dual, solve_primal, SolverConfig};

fn main() -> dualrp::Result<()> {
    let data = make_low_rank(40, 30, 8, LabelRule::Random, 5)?;
    let g = gram(&data);
    let lambda = 0.5;
    for loss in [LossSpec::square(), LossSpec::logistic(), LossSpec::smoothed_hinge(0.5)?] {
        let primal = solve_primal(data.features(), data.labels(), &loss, lambda, &SolverConfig::default())?;
        let dual = dual_from_primal(data.features(), data.labels(), &loss, &primal.weights)?;
        let back = primal_from_dual(data.features(), data.labels(), lambda, &dual)?;
        println!(
            "{:<18} primal {:.10} dual {:.10} round trip {:.1e}",
            loss.to_string(),
            primal.objective,
            dual_objective(&g, &loss, lambda, &dual)?,
            (&back - &primal.weights).norm()
        );
    }
    Ok(())
}
