//! Regularized ERM solvers and primal/dual conversions.
//!
//! The iterative solver is a damped Newton method. Each step solves with
//! the Hessian `λI + B·S·Bᵀ` (`B = X·D(y)`, `S` the loss curvatures) in
//! whichever of the `p × p` or `n × n` (Woodbury) forms is smaller, so the
//! cost per step never involves a `max(p, n)`-sized system. Termination is
//! certified by the Euclidean norm of the gradient.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::check_lambda;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn new(tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::invalid("tolerance", format!("must be positive, got {tolerance}")));
        }
        if max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        Ok(SolverConfig {
            tolerance,
            max_iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub weights: DVector<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Serialize)]
struct SolutionJson<'a> {
    weights: &'a [f64],
    objective: f64,
    grad_norm: f64,
    iterations: usize,
}

impl PrimalSolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SolutionJson {
            weights: self.weights.as_slice(),
            objective: self.objective,
            grad_norm: self.grad_norm,
            iterations: self.iterations,
        })
        .expect("solution serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    alphas: DVector<f64>,
}

impl DualSolution {
    pub fn new(alphas: DVector<f64>, loss: &LossSpec) -> Result<Self> {
        let dom = loss.dual_domain();
        if let Some(&bad) = alphas.iter().find(|&&a| !dom.contains(a)) {
            return Err(Error::DomainViolation {
                value: bad,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        Ok(DualSolution { alphas })
    }

    pub fn alphas(&self) -> &DVector<f64> {
        &self.alphas
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.alphas
    }
}

/// `min_z λ/2‖z + shift‖² + Σᵢ ℓ(yᵢ·zᵀxᵢ + offsetᵢ)`.
///
/// With no shift and no offsets this is the plain regularized ERM problem.
/// The iterative recovery uses both to express its per-round subproblem
/// without building per-example losses.
pub struct ErmObjective<'a> {
    signed: DMatrix<f64>,
    loss: &'a LossSpec,
    lambda: f64,
    shift: Option<&'a DVector<f64>>,
    offsets: Option<&'a DVector<f64>>,
}

impl<'a> ErmObjective<'a> {
    pub fn new(features: &DMatrix<f64>, labels: &DVector<f64>, loss: &'a LossSpec, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if labels.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                context: "labels vs. feature columns",
                expected: features.ncols(),
                actual: labels.len(),
            });
        }
        let mut signed = features.clone();
        for (j, mut col) in signed.column_iter_mut().enumerate() {
            col *= labels[j];
        }
        Ok(ErmObjective {
            signed,
            loss,
            lambda,
            shift: None,
            offsets: None,
        })
    }

    pub fn with_shift(mut self, shift: &'a DVector<f64>) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "regularizer shift",
                expected: self.dim(),
                actual: shift.len(),
            });
        }
        self.shift = Some(shift);
        Ok(self)
    }

    pub fn with_offsets(mut self, offsets: &'a DVector<f64>) -> Result<Self> {
        if offsets.len() != self.signed.ncols() {
            return Err(Error::DimensionMismatch {
                context: "margin offsets",
                expected: self.signed.ncols(),
                actual: offsets.len(),
            });
        }
        self.offsets = Some(offsets);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.signed.nrows()
    }

    pub fn margins(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = self.signed.tr_mul(z);
        match self.offsets {
            Some(o) => m + o,
            None => m,
        }
    }

    fn shifted(&self, z: &DVector<f64>) -> DVector<f64> {
        match self.shift {
            Some(s) => z + s,
            None => z.clone(),
        }
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        let reg = 0.5 * self.lambda * self.shifted(z).norm_squared();
        reg + self.margins(z).iter().map(|&t| self.loss.value(t)).sum::<f64>()
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let duals = self.margins(z).map(|t| self.loss.gradient(t));
        self.shifted(z) * self.lambda + &self.signed * duals
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<PrimalSolution> {
        self.solve_from(DVector::zeros(self.dim()), config)
    }

    pub fn solve_from(&self, start: DVector<f64>, config: &SolverConfig) -> Result<PrimalSolution> {
        if start.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "starting point",
                expected: self.dim(),
                actual: start.len(),
            });
        }
        let (p, n) = self.signed.shape();
        let gram = (n < p).then(|| self.signed.transpose() * &self.signed);

        let mut z = start;
        let mut f = self.value(&z);
        let mut g = self.gradient(&z);
        let mut gnorm = g.norm();
        let mut trace = vec![f];
        let mut iterations = 0;

        while gnorm > config.tolerance && iterations < config.max_iterations {
            let curv = self.margins(&z).map(|t| self.loss.curvature(t));
            let dir = -self.newton_solve(&curv, &g, gram.as_ref())?;
            let slope = g.dot(&dir);
            if !(slope < 0.0) {
                break;
            }
            // once the predicted decrease is below what f can resolve, fall
            // back to accepting steps that shrink the gradient
            let unresolvable = -slope < 1e-10 * (1.0 + f.abs());
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = &z + &dir * step;
                let fc = self.value(&cand);
                if fc <= f + ARMIJO * step * slope {
                    accepted = Some((cand, fc, None));
                    break;
                }
                if unresolvable && fc <= f + 8.0 * f64::EPSILON * f.abs() {
                    let gc = self.gradient(&cand);
                    if gc.norm() < gnorm {
                        accepted = Some((cand, fc, Some(gc)));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((cand, fc, gc)) = accepted else {
                break;
            };
            z = cand;
            f = fc;
            g = gc.unwrap_or_else(|| self.gradient(&z));
            gnorm = g.norm();
            trace.push(f);
            iterations += 1;
        }

        let solution = PrimalSolution {
            weights: z,
            objective: f,
            grad_norm: gnorm,
            iterations,
            objective_trace: trace,
        };
        if gnorm <= config.tolerance {
            Ok(solution)
        } else {
            Err(Error::NotConverged {
                best: Box::new(solution),
            })
        }
    }

    /// Solves `(λI + B·diag(curv)·Bᵀ)·x = rhs`.
    fn newton_solve(&self, curv: &DVector<f64>, rhs: &DVector<f64>, gram: Option<&DMatrix<f64>>) -> Result<DVector<f64>> {
        let lambda = self.lambda;
        match gram {
            None => {
                let mut weighted = self.signed.clone();
                for (j, mut col) in weighted.column_iter_mut().enumerate() {
                    col *= curv[j];
                }
                let mut h = weighted * self.signed.transpose();
                for i in 0..h.nrows() {
                    h[(i, i)] += lambda;
                }
                let chol = cholesky(h, "Newton system")?;
                Ok(chol.solve(rhs))
            }
            Some(gram) => {
                // (λI + B S Bᵀ)⁻¹ r = (r − B S½ (λI + S½ G S½)⁻¹ S½ Bᵀ r) / λ
                let root = curv.map(f64::sqrt);
                let mut inner = gram.clone();
                for i in 0..inner.nrows() {
                    for j in 0..inner.ncols() {
                        inner[(i, j)] *= root[i] * root[j];
                    }
                    inner[(i, i)] += lambda;
                }
                let chol = cholesky(inner, "Woodbury system")?;
                let projected = self.signed.tr_mul(rhs).component_mul(&root);
                let coef = chol.solve(&projected).component_mul(&root);
                Ok((rhs - &self.signed * coef) / lambda)
            }
        }
    }
}

fn cholesky(m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::LinearSystem { context })
}

/// Solves `min_w λ/2‖w‖² + Σ ℓ(yᵢ xᵢᵀ w)` for `features` of shape `p × n`.
pub fn solve_primal(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    loss: &LossSpec,
    lambda: f64,
    config: &SolverConfig,
) -> Result<PrimalSolution> {
    ErmObjective::new(features, labels, loss, lambda)?.solve(config)
}

pub fn primal_objective(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    loss: &LossSpec,
    lambda: f64,
    weights: &DVector<f64>,
) -> Result<f64> {
    check_weights(features, weights)?;
    Ok(ErmObjective::new(features, labels, loss, lambda)?.value(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeBranch {
    /// `(λI + XXᵀ)⁻¹·X·y`, a `d × d` system.
    Primal,
    /// `X·(λI + XᵀX)⁻¹·y`, an `n × n` system.
    Dual,
}

/// Exact ridge solution, using the smaller of the two equivalent systems.
pub fn ridge_closed_form(features: &DMatrix<f64>, labels: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let branch = if features.nrows() <= features.ncols() {
        RidgeBranch::Primal
    } else {
        RidgeBranch::Dual
    };
    ridge_closed_form_via(features, labels, lambda, branch)
}

pub fn ridge_closed_form_via(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    lambda: f64,
    branch: RidgeBranch,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if labels.len() != features.ncols() {
        return Err(Error::DimensionMismatch {
            context: "labels vs. feature columns",
            expected: features.ncols(),
            actual: labels.len(),
        });
    }
    match branch {
        RidgeBranch::Primal => {
            let mut h = features * features.transpose();
            for i in 0..h.nrows() {
                h[(i, i)] += lambda;
            }
            Ok(cholesky(h, "ridge d x d system")?.solve(&(features * labels)))
        }
        RidgeBranch::Dual => {
            let mut k = features.transpose() * features;
            for i in 0..k.nrows() {
                k[(i, i)] += lambda;
            }
            Ok(features * cholesky(k, "ridge n x n system")?.solve(labels))
        }
    }
}

/// `αᵢ = ℓ'(yᵢ xᵢᵀ w)`.
pub fn dual_from_primal(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    loss: &LossSpec,
    weights: &DVector<f64>,
) -> Result<DualSolution> {
    check_weights(features, weights)?;
    let alphas = features
        .tr_mul(weights)
        .component_mul(labels)
        .map(|t| loss.gradient(t));
    DualSolution::new(alphas, loss)
}

/// `w = −(1/λ)·X·D(y)·α`.
pub fn primal_from_dual(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    lambda: f64,
    dual: &DualSolution,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let alphas = dual.alphas();
    if alphas.len() != features.ncols() || labels.len() != features.ncols() {
        return Err(Error::DimensionMismatch {
            context: "dual variables vs. examples",
            expected: features.ncols(),
            actual: alphas.len(),
        });
    }
    Ok(features * alphas.component_mul(labels) * (-1.0 / lambda))
}

/// `−Σ ℓ*(αᵢ) − αᵀGα/(2λ)`.
pub fn dual_objective(gram: &DMatrix<f64>, loss: &LossSpec, lambda: f64, dual: &DualSolution) -> Result<f64> {
    check_lambda(lambda)?;
    let alphas = dual.alphas();
    if gram.nrows() != alphas.len() || gram.ncols() != alphas.len() {
        return Err(Error::DimensionMismatch {
            context: "Gram matrix vs. dual variables",
            expected: alphas.len(),
            actual: gram.nrows(),
        });
    }
    let mut conj = 0.0;
    for &a in alphas.iter() {
        conj += loss.conjugate(a)?;
    }
    Ok(-conj - alphas.dot(&(gram * alphas)) / (2.0 * lambda))
}

fn check_weights(features: &DMatrix<f64>, weights: &DVector<f64>) -> Result<()> {
    if weights.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            context: "weights vs. feature dimension",
            expected: features.nrows(),
            actual: weights.len(),
        });
    }
    Ok(())
}
