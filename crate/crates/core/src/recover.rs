//! Recovering the high-dimensional solution from a sketched problem.
//!
//! * [`recover_naive`] maps the sketched solution back through `R`.
//! * [`recover_drp`] reads dual variables off the sketched solution and
//!   combines the *original* examples with them, so the result lies in the
//!   span of the data rather than in the span of `R`.
//! * [`recover_iterative`] repeats the dual recovery on the residual problem,
//!   reusing one sketch for every round.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{check_lambda, Dataset, SpectrumInfo};
use crate::sketch::ProjectionSketch;
use crate::solve::{ErmObjective, PrimalSolution, SolverConfig};

/// Early stop when the sketched increment is this small relative to the iterate.
pub const EARLY_STOP_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Drp,
    DrpIterative,
    RidgeClosed,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::Drp => "drp",
            Method::DrpIterative => "drp_iterative",
            Method::RidgeClosed => "ridge_closed",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub recovered: DVector<f64>,
    pub reference: Option<DVector<f64>>,
    pub rel_error: Option<f64>,
    pub method: Method,
    /// The solution of the last sketched problem, when one was solved.
    pub sketched: Option<PrimalSolution>,
}

impl RecoveryResult {
    pub fn new(recovered: DVector<f64>, method: Method) -> Self {
        RecoveryResult {
            recovered,
            reference: None,
            rel_error: None,
            method,
            sketched: None,
        }
    }

    pub fn with_reference(mut self, reference: DVector<f64>) -> Self {
        self.rel_error = Some(relative_error(&self.recovered, &reference));
        self.reference = Some(reference);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    /// `‖w̃ᵗ − w*‖/‖w*‖` for `t = 0..=T`; empty without a reference.
    pub per_iteration_errors: Vec<f64>,
    /// Final cumulative dual vector.
    pub duals: DVector<f64>,
    /// Per-round dual increments `α̂ᵗ − α̂ᵗ⁻¹`.
    pub dual_increments: Vec<DVector<f64>>,
    /// `‖zᵗ‖` per round.
    pub sketched_norms: Vec<f64>,
    pub stopped_early: bool,
}

/// `‖a − b‖/‖b‖`; `0` when both vanish and `∞` when only `b` does.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let num = (a - b).norm();
    let den = b.norm();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// `ŵ = R·z*/√m`.
pub fn recover_naive(r_matrix: &DMatrix<f64>, z_star: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
    if z_star.len() != m || r_matrix.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "sketched solution vs. sketch dimension",
            expected: m,
            actual: z_star.len(),
        });
    }
    Ok(r_matrix * z_star / (m as f64).sqrt())
}

/// `w̃ = −X·D(y)·α/λ`.
fn combine_examples(data: &Dataset, alphas: &DVector<f64>, lambda: f64) -> DVector<f64> {
    data.features() * alphas.component_mul(data.labels()) * (-1.0 / lambda)
}

fn check_sketch(data: &Dataset, sketch: &ProjectionSketch) -> Result<()> {
    let xhat = sketch.sketched_features();
    if sketch.matrix_r().nrows() != data.dim() || xhat.ncols() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "sketch vs. dataset",
            expected: data.dim(),
            actual: sketch.matrix_r().nrows(),
        });
    }
    Ok(())
}

/// Dual random projection: solve the sketched problem, set
/// `α̂ᵢ = ℓ'(yᵢ x̂ᵢᵀ z*)`, return `−X·D(y)·α̂/λ`.
pub fn recover_drp(
    data: &Dataset,
    loss: &LossSpec,
    lambda: f64,
    sketch: &ProjectionSketch,
    config: &SolverConfig,
) -> Result<RecoveryResult> {
    check_lambda(lambda)?;
    check_sketch(data, sketch)?;
    let objective = ErmObjective::new(sketch.sketched_features(), data.labels(), loss, lambda)?;
    let z = objective.solve(config)?;
    let alphas = objective.margins(&z.weights).map(|t| loss.gradient(t));
    let mut out = RecoveryResult::new(combine_examples(data, &alphas, lambda), Method::Drp);
    out.sketched = Some(z);
    Ok(out)
}

/// Square-loss recovery in closed form: `X·(λI + Xᵀ(RRᵀ/m)X)⁻¹·y`.
pub fn ridge_drp_closed_form(data: &Dataset, lambda: f64, sketch: &ProjectionSketch) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    check_sketch(data, sketch)?;
    let xhat = sketch.sketched_features();
    let mut k = xhat.transpose() * xhat;
    for i in 0..k.nrows() {
        k[(i, i)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(k).ok_or(Error::LinearSystem {
        context: "sketched ridge n x n system",
    })?;
    Ok(data.features() * chol.solve(data.labels()))
}

/// The round-`t` subproblem of the iterative recovery, built from the
/// previous iterate `w̃ = −X·D(y)·α̂/λ`:
///
/// `min_z λ/2‖z + Rᵀw̃/√m‖² + Σ ℓ(yᵢ zᵀx̂ᵢ + yᵢ w̃ᵀxᵢ)`.
#[derive(Debug, Clone)]
pub struct ShiftedSubproblem {
    /// `Rᵀw̃/√m`
    pub shift: DVector<f64>,
    /// `yᵢ w̃ᵀxᵢ`, dot products taken in the original space.
    pub offsets: DVector<f64>,
    pub previous_duals: DVector<f64>,
}

impl ShiftedSubproblem {
    pub fn new(data: &Dataset, sketch: &ProjectionSketch, previous: &DVector<f64>, previous_duals: &DVector<f64>) -> Result<Self> {
        if previous.len() != data.dim() || previous_duals.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: "previous iterate",
                expected: data.dim(),
                actual: previous.len(),
            });
        }
        Ok(ShiftedSubproblem {
            shift: sketch.apply(previous),
            offsets: data.features().tr_mul(previous).component_mul(data.labels()),
            previous_duals: previous_duals.clone(),
        })
    }

    pub fn objective<'a>(
        &'a self,
        data: &Dataset,
        sketch: &ProjectionSketch,
        loss: &'a LossSpec,
        lambda: f64,
    ) -> Result<ErmObjective<'a>> {
        ErmObjective::new(sketch.sketched_features(), data.labels(), loss, lambda)?
            .with_shift(&self.shift)?
            .with_offsets(&self.offsets)
    }

    /// `λ/2‖z‖² + Σ ℓᵢᵗ(yᵢ zᵀx̂ᵢ)` with `ℓᵢᵗ(u) = ℓ(u + yᵢ w̃ᵀxᵢ) − α̂ᵢ·u`.
    ///
    /// Differs from [`Self::objective`] by the constant `λ/2‖Rᵀw̃/√m‖²`.
    pub fn shifted_loss_value(&self, data: &Dataset, sketch: &ProjectionSketch, loss: &LossSpec, lambda: f64, z: &DVector<f64>) -> f64 {
        let u = sketch.sketched_features().tr_mul(z).component_mul(data.labels());
        let losses: f64 = (0..u.len())
            .map(|i| loss.value(u[i] + self.offsets[i]) - self.previous_duals[i] * u[i])
            .sum();
        0.5 * lambda * z.norm_squared() + losses
    }

    /// Derivative of `ℓᵢᵗ`, i.e. the dual increment of example `i`.
    pub fn shifted_loss_gradient(&self, loss: &LossSpec, i: usize, u: f64) -> f64 {
        loss.gradient(u + self.offsets[i]) - self.previous_duals[i]
    }
}

/// Iterative dual random projection with the default early-stop rule.
pub fn recover_iterative(
    data: &Dataset,
    loss: &LossSpec,
    lambda: f64,
    sketch: &ProjectionSketch,
    t_iters: usize,
    config: &SolverConfig,
    reference: Option<&DVector<f64>>,
) -> Result<(RecoveryResult, IterationTrace)> {
    recover_iterative_with(data, loss, lambda, sketch, t_iters, config, reference, Some(EARLY_STOP_RATIO))
}

#[allow(clippy::too_many_arguments)]
pub fn recover_iterative_with(
    data: &Dataset,
    loss: &LossSpec,
    lambda: f64,
    sketch: &ProjectionSketch,
    t_iters: usize,
    config: &SolverConfig,
    reference: Option<&DVector<f64>>,
    early_stop: Option<f64>,
) -> Result<(RecoveryResult, IterationTrace)> {
    check_lambda(lambda)?;
    check_sketch(data, sketch)?;
    if t_iters == 0 {
        return Err(Error::invalid("t_iters", "need at least one iteration"));
    }
    if let Some(r) = reference {
        if r.len() != data.dim() {
            return Err(Error::DimensionMismatch {
                context: "reference solution",
                expected: data.dim(),
                actual: r.len(),
            });
        }
    }

    let mut w = DVector::zeros(data.dim());
    let mut alphas = DVector::zeros(data.len());
    let mut trace = IterationTrace::default();
    if let Some(r) = reference {
        trace.per_iteration_errors.push(relative_error(&w, r));
    }
    let mut last = None;

    for t in 1..=t_iters {
        let sub = ShiftedSubproblem::new(data, sketch, &w, &alphas)?;
        let objective = sub.objective(data, sketch, loss, lambda)?;
        let z = objective.solve(config).map_err(|e| Error::IterationFailed {
            iteration: t,
            source: Box::new(e),
        })?;
        let next = objective.margins(&z.weights).map(|m| loss.gradient(m));
        trace.dual_increments.push(&next - &alphas);
        trace.sketched_norms.push(z.weights.norm());
        alphas = next;
        w = combine_examples(data, &alphas, lambda);
        if let Some(r) = reference {
            trace.per_iteration_errors.push(relative_error(&w, r));
        }
        let small = early_stop.is_some_and(|ratio| z.weights.norm() <= ratio * w.norm());
        last = Some(z);
        if small && t < t_iters {
            trace.stopped_early = true;
            break;
        }
    }

    trace.duals = alphas;
    let mut out = RecoveryResult::new(w, Method::DrpIterative);
    out.sketched = last;
    if let Some(r) = reference {
        out = out.with_reference(r.clone());
    }
    Ok((out, trace))
}

/// `max_{x ∈ span(X), ‖x‖ ≤ 1} xᵀ(w_a − w_b) = ‖U_rᵀ(w_a − w_b)‖`.
pub fn span_restricted_error(spectrum: &SpectrumInfo, w_a: &DVector<f64>, w_b: &DVector<f64>) -> Result<f64> {
    let d = spectrum.left_vectors.nrows();
    if w_a.len() != d || w_b.len() != d {
        return Err(Error::DimensionMismatch {
            context: "vectors vs. left singular basis",
            expected: d,
            actual: w_a.len(),
        });
    }
    Ok(spectrum.range_basis().tr_mul(&(w_a - w_b)).norm())
}

/// `‖√m·z* − Rᵀw*‖ / ‖Rᵀw*‖`.
pub fn measurement_error(z_star: &DVector<f64>, r_matrix: &DMatrix<f64>, m: usize, w_star: &DVector<f64>) -> Result<f64> {
    if z_star.len() != m || r_matrix.ncols() != m || r_matrix.nrows() != w_star.len() {
        return Err(Error::DimensionMismatch {
            context: "measurement error operands",
            expected: m,
            actual: z_star.len(),
        });
    }
    let measured = r_matrix.tr_mul(w_star);
    let den = measured.norm();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("measurement error"));
    }
    Ok((z_star * (m as f64).sqrt() - measured).norm() / den)
}

/// Fraction of `w` outside the span of the orthonormal columns of `basis`.
pub fn subspace_leakage(basis: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let norm = w.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let inside = basis * basis.tr_mul(w);
    (w - inside).norm() / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_low_rank, spectrum, LabelRule, DEFAULT_RANK_THRESHOLD};
    use crate::sketch::project;
    use crate::solve::{ridge_closed_form, solve_primal};

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn losses() -> Vec<LossSpec> {
        vec![
            LossSpec::square(),
            LossSpec::logistic(),
            LossSpec::smoothed_hinge(1.0).unwrap(),
        ]
    }

    #[test]
    fn naive_basics() {
        let r = DMatrix::identity(3, 3) * 3f64.sqrt();
        let z = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let w = recover_naive(&r, &z, 3).unwrap();
        assert!((w - &z).amax() < 1e-15);
        assert_eq!(recover_naive(&r, &DVector::zeros(3), 3).unwrap(), DVector::zeros(3));
        assert!(recover_naive(&r, &z, 2).is_err());
    }

    #[test]
    fn identity_sketch_is_exact() {
        let data = make_low_rank(12, 9, 3, LabelRule::SignOfPlant, 5).unwrap();
        let sketch = ProjectionSketch::identity(&data).unwrap();
        for loss in losses() {
            let lambda = 0.8;
            let exact = solve_primal(data.features(), data.labels(), &loss, lambda, &cfg()).unwrap();
            let rec = recover_drp(&data, &loss, lambda, &sketch, &cfg()).unwrap();
            assert!((&rec.recovered - &exact.weights).norm() <= 10.0 * cfg().tolerance / lambda);
        }
    }

    #[test]
    fn square_loss_matches_closed_form() {
        for seed in 0..10 {
            let data = make_low_rank(60, 30, 6, LabelRule::Random, seed).unwrap();
            let sketch = ProjectionSketch::gaussian(&data, 20, 100 + seed).unwrap();
            let closed = ridge_drp_closed_form(&data, 1.0, &sketch).unwrap();
            let drp = recover_drp(&data, &LossSpec::square(), 1.0, &sketch, &cfg()).unwrap();
            assert!(relative_error(&drp.recovered, &closed) <= 1e-8);
        }
    }

    #[test]
    fn closed_form_with_identity_sketch_is_ridge() {
        let data = make_low_rank(8, 5, 3, LabelRule::Random, 2).unwrap();
        let sketch = ProjectionSketch::identity(&data).unwrap();
        let a = ridge_drp_closed_form(&data, 0.5, &sketch).unwrap();
        let b = ridge_closed_form(data.features(), data.labels(), 0.5).unwrap();
        assert!((&a - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn closed_form_by_hand() {
        // X = [[1,0],[0,1],[1,1]] (3 × 2), y = (1, −1), λ = 1:
        // XᵀX = [[2,1],[1,2]], (I + XᵀX)⁻¹ = [[3,−1],[−1,3]]/8,
        // c = (3+1, −1−3)/8 = (½, −½), w = X·c = (½, −½, 0)
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let data = Dataset::new(x, DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let sketch = ProjectionSketch::identity(&data).unwrap();
        let w = ridge_drp_closed_form(&data, 1.0, &sketch).unwrap();
        assert!((w - DVector::from_vec(vec![0.5, -0.5, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn drp_output_lies_in_data_span() {
        let data = make_low_rank(80, 30, 4, LabelRule::SignOfPlant, 7).unwrap();
        let svd = spectrum(&data, DEFAULT_RANK_THRESHOLD).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 25, 3).unwrap();
        for loss in losses() {
            let rec = recover_drp(&data, &loss, 1.0, &sketch, &cfg()).unwrap();
            assert!(subspace_leakage(&svd.range_basis(), &rec.recovered) <= 1e-9);
        }
    }

    #[test]
    fn naive_output_lies_in_sketch_span() {
        let data = make_low_rank(80, 30, 4, LabelRule::SignOfPlant, 7).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 25, 3).unwrap();
        let q = sketch.matrix_r().clone().qr().q();
        for loss in losses() {
            let rec = recover_drp(&data, &loss, 1.0, &sketch, &cfg()).unwrap();
            let naive = recover_naive(sketch.matrix_r(), &rec.sketched.unwrap().weights, 25).unwrap();
            assert!(subspace_leakage(&q, &naive) <= 1e-9);
        }
    }

    #[test]
    fn one_round_equals_single_shot() {
        let data = make_low_rank(50, 40, 5, LabelRule::SignOfPlant, 9).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 30, 4).unwrap();
        for loss in losses() {
            let single = recover_drp(&data, &loss, 2.0, &sketch, &cfg()).unwrap();
            let (iter, trace) = recover_iterative(&data, &loss, 2.0, &sketch, 1, &cfg(), None).unwrap();
            assert!((&single.recovered - &iter.recovered).norm() <= 10.0 * cfg().tolerance / 2.0);
            assert!(trace.per_iteration_errors.is_empty());
            assert_eq!(trace.dual_increments.len(), 1);
        }
    }

    #[test]
    fn error_decays_geometrically() {
        // single-shot error here is about 0.15; later rounds contract more
        // slowly (up to about twice that) but stay well below 1/2
        for loss in [LossSpec::square(), LossSpec::logistic()] {
            for seed in 0..4 {
                let data = make_low_rank(300, 100, 5, LabelRule::SignOfPlant, seed).unwrap();
                let exact =
                    solve_primal(data.features(), data.labels(), &loss, 1.0, &SolverConfig::new(1e-12, 1000).unwrap())
                        .unwrap();
                let sketch = ProjectionSketch::gaussian(&data, 200, seed).unwrap();
                let (_, trace) =
                    recover_iterative_with(&data, &loss, 1.0, &sketch, 8, &cfg(), Some(&exact.weights), None).unwrap();
                let e = &trace.per_iteration_errors;
                assert!(e.windows(2).all(|p| p[1] <= 0.5 * p[0]), "{loss} seed {seed}: {e:?}");
                assert!(e[8] <= 1e-3, "{loss} seed {seed}: {e:?}");
            }
        }
    }

    #[test]
    fn identity_sketch_converges_in_one_round() {
        let data = make_low_rank(10, 12, 3, LabelRule::Random, 1).unwrap();
        let sketch = ProjectionSketch::identity(&data).unwrap();
        let loss = LossSpec::logistic();
        let exact = solve_primal(data.features(), data.labels(), &loss, 1.0, &SolverConfig::new(1e-12, 1000).unwrap()).unwrap();
        let (res, trace) =
            recover_iterative_with(&data, &loss, 1.0, &sketch, 3, &cfg(), Some(&exact.weights), None).unwrap();
        let e = &trace.per_iteration_errors;
        assert_eq!(e.len(), 4);
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|&v| v < 1e-8), "{e:?}");
        assert!(res.rel_error.unwrap() < 1e-8);
    }

    #[test]
    fn dual_increments_telescope() {
        let data = make_low_rank(60, 35, 5, LabelRule::SignOfPlant, 13).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 30, 8).unwrap();
        for loss in losses() {
            let lambda = 1.5;
            let mut w = DVector::zeros(data.dim());
            let mut alphas = DVector::zeros(data.len());
            for _ in 0..3 {
                let sub = ShiftedSubproblem::new(&data, &sketch, &w, &alphas).unwrap();
                let obj = sub.objective(&data, &sketch, &loss, lambda).unwrap();
                let z = obj.solve(&cfg()).unwrap().weights;
                let u = sketch.sketched_features().tr_mul(&z).component_mul(data.labels());
                let increments = DVector::from_iterator(data.len(), (0..data.len()).map(|i| sub.shifted_loss_gradient(&loss, i, u[i])));
                let next = &alphas + &increments;
                for i in 0..data.len() {
                    let direct = loss.gradient(u[i] + data.labels()[i] * data.features().column(i).dot(&w));
                    assert!((next[i] - direct).abs() < 1e-14);
                }
                alphas = next;
                w = data.features() * alphas.component_mul(data.labels()) * (-1.0 / lambda);
            }
            let (_, trace) = recover_iterative_with(&data, &loss, lambda, &sketch, 3, &cfg(), None, None).unwrap();
            assert!((&trace.duals - &alphas).amax() < 1e-12);
            let summed = trace.dual_increments.iter().fold(DVector::zeros(data.len()), |acc, v| acc + v);
            assert!((summed - &trace.duals).amax() < 1e-12);
        }
    }

    #[test]
    fn subproblem_objectives_differ_by_a_constant() {
        let data = make_low_rank(40, 25, 4, LabelRule::Random, 21).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 15, 2).unwrap();
        let lambda = 0.7;
        for loss in losses() {
            let first = recover_drp(&data, &loss, lambda, &sketch, &cfg()).unwrap();
            let alphas = first
                .sketched
                .as_ref()
                .map(|z| {
                    sketch.sketched_features().tr_mul(&z.weights).component_mul(data.labels()).map(|t| loss.gradient(t))
                })
                .unwrap();
            let sub = ShiftedSubproblem::new(&data, &sketch, &first.recovered, &alphas).unwrap();
            let obj = sub.objective(&data, &sketch, &loss, lambda).unwrap();
            let constant = 0.5 * lambda * sub.shift.norm_squared();
            let mut stream = crate::rng::seeded(5);
            for _ in 0..10 {
                let z = crate::rng::normal_vector(15, &mut stream) * 0.1;
                let a = obj.value(&z);
                let b = sub.shifted_loss_value(&data, &sketch, &loss, lambda, &z) + constant;
                assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{loss}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn iterative_rejects_zero_rounds() {
        let data = make_low_rank(10, 8, 2, LabelRule::Random, 1).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 5, 1).unwrap();
        assert!(recover_iterative(&data, &LossSpec::square(), 1.0, &sketch, 0, &cfg(), None).is_err());
    }

    #[test]
    fn iterative_reports_failing_round() {
        let data = make_low_rank(10, 8, 2, LabelRule::Random, 1).unwrap();
        let sketch = ProjectionSketch::gaussian(&data, 5, 1).unwrap();
        let tight = SolverConfig::new(1e-300, 1).unwrap();
        let err = recover_iterative(&data, &LossSpec::logistic(), 1.0, &sketch, 3, &tight, None).unwrap_err();
        assert!(matches!(err, Error::IterationFailed { iteration: 1, .. }));
    }

    #[test]
    fn span_error_cases() {
        let data = make_low_rank(6, 4, 2, LabelRule::Random, 3).unwrap();
        let svd = spectrum(&data, DEFAULT_RANK_THRESHOLD).unwrap();
        let w = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(span_restricted_error(&svd, &w, &w).unwrap(), 0.0);

        let u1 = svd.left_vectors.column(0).into_owned();
        let e = span_restricted_error(&svd, &(&w + &u1), &w).unwrap();
        assert!((e - 1.0).abs() < 1e-12);

        let basis = svd.range_basis();
        let orth = &w - &basis * basis.tr_mul(&w);
        assert!(span_restricted_error(&svd, &(&w + &orth), &w).unwrap() < 1e-12);
        assert!(span_restricted_error(&svd, &DVector::zeros(3), &w).is_err());
    }

    #[test]
    fn measurement_error_cases() {
        let data = make_low_rank(6, 4, 2, LabelRule::Random, 3).unwrap();
        let r = crate::sketch::gaussian_matrix(6, 3, 1).unwrap();
        let w = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0, 2.0, 1.0]);
        let z = r.tr_mul(&w) / 3f64.sqrt();
        assert!(measurement_error(&z, &r, 3, &w).unwrap() < 1e-15);

        let s = DMatrix::identity(6, 6) * 6f64.sqrt();
        assert!(measurement_error(&w, &s, 6, &w).unwrap() < 1e-15);
        assert!(matches!(
            measurement_error(&z, &r, 3, &DVector::zeros(6)),
            Err(Error::ZeroDenominator(_))
        ));
        let _ = project(&data, r, 3, 1).unwrap();
    }

    #[test]
    fn relative_error_edge_cases() {
        let z = DVector::zeros(2);
        assert_eq!(relative_error(&z, &z), 0.0);
        assert!(relative_error(&DVector::from_element(2, 1.0), &z).is_infinite());
        let rec = RecoveryResult::new(DVector::from_vec(vec![1.0, 0.0]), Method::Drp)
            .with_reference(DVector::from_vec(vec![2.0, 0.0]));
        assert!((rec.rel_error.unwrap() - 0.5).abs() < 1e-15);
    }
}
