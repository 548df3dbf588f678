//! Sample-size calculators, recovery error bounds, and empirical checks of
//! how closely a Gaussian sketch preserves the geometry of a subspace.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::effective_rank;
use crate::rng::{normal_matrix, seeded};

/// Default constant for the low-rank sample bound.
pub const LOW_RANK_CONSTANT: f64 = 0.25;
/// Default constant for the full-rank sample bound.
pub const FULL_RANK_CONSTANT: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundQuery {
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
    pub rank_or_effective_rank: f64,
}

impl BoundQuery {
    /// Low-rank query; `epsilon` must lie in `(0, 1/2]`.
    pub fn low_rank(rank: usize, epsilon: f64, delta: f64) -> Result<Self> {
        let q = BoundQuery {
            epsilon,
            delta,
            c: LOW_RANK_CONSTANT,
            rank_or_effective_rank: rank as f64,
        };
        check_common(epsilon, delta, q.c, 0.5)?;
        if rank == 0 {
            return Err(Error::invalid("rank", "must be at least 1"));
        }
        Ok(q)
    }

    pub fn with_constant(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", format!("must be positive, got {c}")));
        }
        self.c = c;
        Ok(self)
    }

    pub fn sample_size(&self) -> Result<usize> {
        sample_size_bound(self.rank_or_effective_rank as usize, self.epsilon, self.delta, self.c)
    }
}

fn check_common(epsilon: f64, delta: f64, c: f64, eps_max: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= eps_max) {
        return Err(Error::invalid("epsilon", format!("must lie in (0, {eps_max}], got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", format!("must be positive, got {c}")));
    }
    Ok(())
}

fn ceil_to_usize(x: f64) -> Result<usize> {
    if !x.is_finite() || x >= usize::MAX as f64 {
        return Err(Error::invalid("sample size", format!("not representable: {x}")));
    }
    Ok(x.max(0.0).ceil() as usize)
}

/// `⌈(r+1)·ln(2r/δ)/(c·ε²)⌉`.
pub fn sample_size_bound(r: usize, epsilon: f64, delta: f64, c: f64) -> Result<usize> {
    if r == 0 {
        return Err(Error::invalid("r", "must be at least 1"));
    }
    check_common(epsilon, delta, c, 0.5)?;
    let r = r as f64;
    ceil_to_usize((r + 1.0) * (2.0 * r / delta).ln() / (c * epsilon * epsilon))
}

/// `⌈r̄·σ₁²/(c·ε²·(λ/γ + σ₁²))·ln(2d/δ)⌉` with `r̄` the effective rank.
pub fn full_rank_sample_bound(
    singular_values: &[f64],
    lambda: f64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    d: usize,
    c: f64,
) -> Result<usize> {
    check_common(epsilon, delta, c, 1.0)?;
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let r_bar = effective_rank(singular_values, lambda, gamma)?;
    let s1 = singular_values.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    if r_bar == 0.0 || s1 == 0.0 {
        return Ok(0);
    }
    let s1sq = s1 * s1;
    let value = r_bar * s1sq / (c * epsilon * epsilon * (lambda / gamma + s1sq)) * (2.0 * d as f64 / delta).ln();
    ceil_to_usize(value)
}

/// Dual-recovery bound `ε/(1−ε)`.
pub fn drp_error_bound(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

/// Sketched-measurement bound `√2·ε/√(1−ε)`.
pub fn measurement_error_bound(epsilon: f64) -> f64 {
    std::f64::consts::SQRT_2 * epsilon / (1.0 - epsilon).sqrt()
}

/// Lower bound on the naive recovery error, `½√((d−r)/m)·(1 − ε√(2(1+ε))/(1−ε))`.
pub fn naive_error_lower_bound(d: usize, r: usize, m: usize, epsilon: f64) -> f64 {
    let spread = ((d.saturating_sub(r)) as f64 / m as f64).sqrt();
    0.5 * spread * (1.0 - epsilon * (2.0 * (1.0 + epsilon)).sqrt() / (1.0 - epsilon))
}

/// Bound on the in-span error of the naive recovery, `ε(1 + 1/(1−ε))`.
pub fn span_error_bound(epsilon: f64) -> f64 {
    epsilon * (1.0 + 1.0 / (1.0 - epsilon))
}

/// Bound after `t` rounds of iterative recovery, `(ε/(1−ε))ᵗ`.
pub fn iterative_error_bound(epsilon: f64, t: usize) -> f64 {
    drp_error_bound(epsilon).powi(t as i32)
}

/// Full-rank recovery bound `(ε/(1−ε))·(1 + √λ/(√γ·σ_k))`.
pub fn full_rank_error_bound(epsilon: f64, lambda: f64, gamma: f64, sigma_k: f64) -> f64 {
    drp_error_bound(epsilon) * (1.0 + lambda.sqrt() / (gamma.sqrt() * sigma_k))
}

fn spectral_norm_symmetric(mut s: DMatrix<f64>) -> f64 {
    // symmetrize against rounding in the product
    let t = s.transpose();
    s += t;
    s *= 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// `‖AAᵀ/m − I‖₂` for a standard Gaussian `A ∈ ℝ^{r×m}` drawn from `seed`.
pub fn spectral_deviation(r: usize, m: usize, seed: u64) -> Result<f64> {
    if r == 0 || m == 0 {
        return Err(Error::invalid("r, m", "both must be at least 1"));
    }
    let a = normal_matrix(r, m, &mut seeded(seed));
    Ok(deviation_of(&a))
}

/// `‖AAᵀ/m − I‖₂` for a given `A`.
pub fn deviation_of(a: &DMatrix<f64>) -> f64 {
    let m = a.ncols() as f64;
    let mut s = a * a.transpose() / m;
    for i in 0..s.nrows() {
        s[(i, i)] -= 1.0;
    }
    spectral_norm_symmetric(s)
}

/// Extreme eigenvalues of `K^{-1/2}·K̃·K^{-1/2}` with `K = λI + XᵀX` and
/// `K̃ = λI + Xᵀ(RRᵀ/m)X`, where `R` is a `d×m` Gaussian drawn from `seed`.
pub fn ridge_identity_deviation(features: &DMatrix<f64>, lambda_over_gamma: f64, m: usize, seed: u64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let r = crate::sketch::gaussian_matrix(features.nrows(), m, seed)?;
    ridge_identity_deviation_with(features, lambda_over_gamma, &r)
}

/// As [`ridge_identity_deviation`] with an explicit sketch matrix.
pub fn ridge_identity_deviation_with(features: &DMatrix<f64>, lambda_over_gamma: f64, r_matrix: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !(lambda_over_gamma > 0.0 && lambda_over_gamma.is_finite()) {
        return Err(Error::invalid(
            "lambda_over_gamma",
            format!("must be positive and finite, got {lambda_over_gamma}"),
        ));
    }
    if r_matrix.nrows() != features.nrows() || r_matrix.ncols() == 0 {
        return Err(Error::DimensionMismatch {
            context: "sketch rows vs. feature dimension",
            expected: features.nrows(),
            actual: r_matrix.nrows(),
        });
    }
    let n = features.ncols();
    let m = r_matrix.ncols() as f64;
    let mut k = features.transpose() * features;
    let projected = r_matrix.transpose() * features;
    let mut k_tilde = (projected.transpose() * &projected) / m;
    for i in 0..n {
        k[(i, i)] += lambda_over_gamma;
        k_tilde[(i, i)] += lambda_over_gamma;
    }
    let chol = nalgebra::Cholesky::new(k).ok_or_else(|| Error::Decomposition("regularized Gram is not positive definite".into()))?;
    // L⁻¹·K̃·L⁻ᵀ is similar to K^{-1/2}·K̃·K^{-1/2}
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&k_tilde)
        .ok_or_else(|| Error::Decomposition("triangular solve failed".into()))?;
    let whitened = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Decomposition("triangular solve failed".into()))?;
    let t = whitened.transpose();
    let sym = (whitened + t) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationTrial {
    pub seed: u64,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    /// Largest deviation over all trials.
    pub deviation: f64,
    pub threshold: f64,
    pub passed: bool,
    pub trials: usize,
    pub failures: usize,
    pub delta: f64,
    pub m: usize,
    pub per_trial: Vec<ConcentrationTrial>,
}

/// Failure rate tolerated for `trials` draws at confidence `1 − δ`:
/// `δ + 3·√(δ(1−δ)/trials)`.
pub fn allowed_failure_rate(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

/// Draws `trials` Gaussian `r×m` matrices with seeds `seed, seed+1, …` and
/// counts how often `‖AAᵀ/m − I‖₂` exceeds `epsilon`.
pub fn concentration_trials(r: usize, m: usize, epsilon: f64, delta: f64, trials: usize, seed: u64) -> Result<ConcentrationReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let s = seed.wrapping_add(t);
        let deviation = spectral_deviation(r, m, s)?;
        per_trial.push(ConcentrationTrial {
            seed: s,
            deviation,
            pass: deviation <= epsilon,
        });
    }
    Ok(summarize(per_trial, r, m, epsilon, delta))
}

fn summarize(per_trial: Vec<ConcentrationTrial>, _r: usize, m: usize, epsilon: f64, delta: f64) -> ConcentrationReport {
    let trials = per_trial.len();
    let failures = per_trial.iter().filter(|t| !t.pass).count();
    let deviation = per_trial.iter().fold(0.0f64, |a, t| a.max(t.deviation));
    ConcentrationReport {
        deviation,
        threshold: epsilon,
        passed: failures as f64 / trials as f64 <= allowed_failure_rate(delta, trials),
        trials,
        failures,
        delta,
        m,
        per_trial,
    }
}

/// Smallest `m ≤ upper` at which the deviation stays within `epsilon` in at
/// least `coverage` of `trials` draws, found by bisection over `m`.
///
/// The empirical event is only approximately monotone in `m`; the result is
/// the bisection's answer, not an exhaustive minimum.
pub fn smallest_passing_m(r: usize, epsilon: f64, coverage: f64, trials: usize, seed: u64, upper: usize) -> Result<Option<usize>> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid("coverage", format!("must lie in (0, 1], got {coverage}")));
    }
    if trials == 0 || upper == 0 {
        return Err(Error::invalid("trials, upper", "both must be at least 1"));
    }
    let ok = |m: usize| -> Result<bool> {
        let mut good = 0usize;
        for t in 0..trials as u64 {
            if spectral_deviation(r, m, seed.wrapping_add(t))? <= epsilon {
                good += 1;
            }
        }
        Ok(good as f64 >= coverage * trials as f64)
    };
    if !ok(upper)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1usize, upper);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decaying_singular_values, make_decaying_spectrum};
    use proptest::prelude::*;

    #[test]
    fn low_rank_examples() {
        assert_eq!(sample_size_bound(5, 0.5, 0.1, 0.25).unwrap(), 443);
        let delta = 2.0 / std::f64::consts::E;
        assert_eq!(sample_size_bound(1, 0.5, delta, 0.25).unwrap(), 32);
        assert_eq!(BoundQuery::low_rank(5, 0.5, 0.1).unwrap().sample_size().unwrap(), 443);
    }

    #[test]
    fn low_rank_rejects_bad_ranges() {
        assert!(sample_size_bound(0, 0.5, 0.1, 0.25).is_err());
        assert!(sample_size_bound(5, 0.6, 0.1, 0.25).is_err());
        assert!(sample_size_bound(5, 0.0, 0.1, 0.25).is_err());
        assert!(sample_size_bound(5, 0.5, 1.0, 0.25).is_err());
        assert!(sample_size_bound(5, 0.5, 0.1, 0.0).is_err());
        assert!(BoundQuery::low_rank(5, 0.5, 0.1).unwrap().with_constant(-1.0).is_err());
    }

    #[test]
    fn full_rank_examples() {
        assert_eq!(full_rank_sample_bound(&[0.0, 0.0], 1.0, 1.0, 0.5, 0.1, 10, FULL_RANK_CONSTANT).unwrap(), 0);
        // c·ε² = 1, ln(2d/δ) = 1, r̄ = ½, σ₁²/(λ/γ+σ₁²) = ½
        let e = std::f64::consts::E;
        let got = full_rank_sample_bound(&[1.0], 1.0, 1.0, 1.0, 2.0 / e, 1, 1.0).unwrap();
        assert_eq!(got, 1);
    }

    #[test]
    fn full_rank_is_far_below_naive_bound() {
        let sv = decaying_singular_values(100, 100, 1.0);
        let full = full_rank_sample_bound(sv.as_slice(), 1.0, 1.0, 0.5, 0.1, 100, FULL_RANK_CONSTANT).unwrap();
        let naive = sample_size_bound(100, 0.5, 0.1, FULL_RANK_CONSTANT).unwrap();
        assert!((full as f64) < 0.5 * naive as f64, "{full} vs {naive}");
        assert!(effective_rank(sv.as_slice(), 1.0, 1.0).unwrap() < 30.0);
    }

    #[test]
    fn bound_formulas() {
        assert!((drp_error_bound(0.5) - 1.0).abs() < 1e-15);
        assert!((measurement_error_bound(0.5) - 1.0).abs() < 1e-15);
        assert!((span_error_bound(0.5) - 1.5).abs() < 1e-15);
        assert!((iterative_error_bound(0.25, 3) - 1.0 / 27.0).abs() < 1e-15);
        assert!((full_rank_error_bound(0.5, 1.0, 0.25, 2.0) - 2.0).abs() < 1e-15);
        // ε = 0 reduces to ½√((d−r)/m)
        assert!((naive_error_lower_bound(105, 5, 25, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn deviation_scalar_case() {
        let a = normal_matrix(1, 40, &mut seeded(3));
        let direct = (a.norm_squared() / 40.0 - 1.0).abs();
        assert!((spectral_deviation(1, 40, 3).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn deviation_shrinks_with_many_columns() {
        assert!(spectral_deviation(2, 200_000, 1).unwrap() <= 0.02);
        assert!(spectral_deviation(0, 5, 1).is_err());
    }

    #[test]
    fn deviation_is_deterministic() {
        assert_eq!(spectral_deviation(4, 30, 9).unwrap(), spectral_deviation(4, 30, 9).unwrap());
    }

    #[test]
    fn deviation_ignores_row_order() {
        let a = normal_matrix(6, 50, &mut seeded(17));
        let mut rows: Vec<usize> = (0..6).collect();
        rows.reverse();
        rows.swap(0, 3);
        let permuted = a.select_rows(rows.iter());
        assert!((deviation_of(&a) - deviation_of(&permuted)).abs() < 1e-13);
    }

    #[test]
    fn deviation_monte_carlo_rank_fifty() {
        let m = sample_size_bound(50, 0.5, 0.1, 0.25).unwrap();
        let ok = (0..20).filter(|&s| spectral_deviation(50, m, s).unwrap() <= 0.5).count();
        assert!(ok >= 18, "{ok}/20");
    }

    #[test]
    fn ridge_identity_exact_cases() {
        let x = normal_matrix(5, 4, &mut seeded(2));
        let r = DMatrix::identity(5, 5) * 5f64.sqrt();
        let (lo, hi) = ridge_identity_deviation_with(&x, 0.7, &r).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);

        let (lo, hi) = ridge_identity_deviation(&DMatrix::zeros(5, 4), 0.7, 3, 1).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);

        assert!(ridge_identity_deviation(&x, 0.0, 3, 1).is_err());
    }

    #[test]
    fn ridge_identity_decaying_spectrum() {
        let data = make_decaying_spectrum(100, 60, 1.0, 4).unwrap();
        let sv = decaying_singular_values(100, 60, 1.0);
        let m = full_rank_sample_bound(sv.as_slice(), 1.0, 1.0, 0.5, 0.1, 100, FULL_RANK_CONSTANT).unwrap();
        let ok = (0..20)
            .filter(|&s| {
                let (lo, hi) = ridge_identity_deviation(data.features(), 1.0, m, s).unwrap();
                lo >= 0.5 && hi <= 1.5
            })
            .count();
        assert!(ok >= 18, "{ok}/20 at m={m}");
    }

    #[test]
    fn trials_report() {
        let m = sample_size_bound(10, 0.5, 0.1, 0.25).unwrap();
        let rep = concentration_trials(10, m, 0.5, 0.1, 100, 0).unwrap();
        assert_eq!(rep.trials, 100);
        assert_eq!(rep.per_trial.len(), 100);
        assert_eq!(rep.failures, rep.per_trial.iter().filter(|t| !t.pass).count());
        assert!(rep.failures as f64 / 100.0 <= allowed_failure_rate(0.1, 100));
        assert!(rep.passed);

        let tiny = concentration_trials(10, 5, 0.5, 0.1, 20, 0).unwrap();
        assert!(!tiny.passed);
        assert!(concentration_trials(10, 5, 0.5, 0.1, 0, 0).is_err());
    }

    #[test]
    fn empirical_m_is_below_bound() {
        let bound = sample_size_bound(5, 0.5, 0.1, 0.25).unwrap();
        let m = smallest_passing_m(5, 0.5, 0.95, 40, 0, bound).unwrap().unwrap();
        assert!(m < bound);
        assert!(m > 5);
    }

    proptest! {
        #[test]
        fn sample_bound_is_exact_ceiling(r in 1usize..500, eps in 0.01f64..0.5, delta in 0.001f64..0.999) {
            let got = sample_size_bound(r, eps, delta, 0.25).unwrap() as f64;
            let rf = r as f64;
            let logs = std::f64::consts::LN_2 + rf.ln() - delta.ln();
            let raw = (rf + 1.0) * logs * 4.0 / (eps * eps);
            prop_assert!((got - raw.ceil()).abs() <= 1.0);
            prop_assert!(got >= raw - 1e-6 * raw);
        }

        #[test]
        fn sample_bound_monotone(r in 1usize..200, eps in 0.05f64..0.45, delta in 0.01f64..0.9) {
            let base = sample_size_bound(r, eps, delta, 0.25).unwrap();
            prop_assert!(sample_size_bound(r + 1, eps, delta, 0.25).unwrap() >= base);
            prop_assert!(sample_size_bound(r, eps + 0.05, delta, 0.25).unwrap() <= base);
        }

        #[test]
        fn full_rank_bound_is_exact_ceiling(
            sv in proptest::collection::vec(0.01f64..20.0, 1..30),
            lambda in 0.1f64..5.0,
            eps in 0.05f64..1.0,
        ) {
            let got = full_rank_sample_bound(&sv, lambda, 1.0, eps, 0.1, 50, FULL_RANK_CONSTANT).unwrap() as f64;
            let r_bar: f64 = sv.iter().map(|s| s * s / (lambda + s * s)).sum();
            let s1 = sv.iter().cloned().fold(0.0, f64::max);
            let raw = r_bar * s1 * s1 * 32.0 / (eps * eps * (lambda + s1 * s1)) * (1000.0f64).ln();
            prop_assert!((got - raw.ceil()).abs() <= 1.0);
        }
    }
}
