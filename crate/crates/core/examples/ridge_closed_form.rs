//! For the square loss the recovered solution has a closed form that needs
//! only an n x n solve. Compare it with the general algorithm and with the
//! exact ridge solution.

use dualrp::loss::LossSpec;
use dualrp::model::{make_low_rank, LabelRule};
use dualrp::recover::{recover_drp, relative_error, ridge_drp_closed_form};
use dualrp::sketch::ProjectionSketch;
use dualrp::solve::{ridge_closed_form, SolverConfig};

fn main() -> dualrp::Result<()> {
    let data = make_low_rank(200, 100, 10, LabelRule::Random, 7)?;
    let exact_identity = ProjectionSketch::identity(&data)?;

    for lambda in [0.1, 1.0, 10.0] {
        let exact = ridge_closed_form(data.features(), data.labels(), lambda)?;
        let sketch = ProjectionSketch::gaussian(&data, 60, 7)?;
        let closed = ridge_drp_closed_form(&data, lambda, &sketch)?;
        let iterative = recover_drp(&data, &LossSpec::square(), lambda, &sketch, &SolverConfig::default())?;
        let exact_again = ridge_drp_closed_form(&data, lambda, &exact_identity)?;
        println!(
            "lambda {lambda:>4}: closed vs algorithm {:.1e}, recovery error {:.4}, identity sketch error {:.1e}",
            relative_error(&iterative.recovered, &closed),
            relative_error(&closed, &exact),
            relative_error(&exact_again, &exact),
        );
    }
    Ok(())
}
