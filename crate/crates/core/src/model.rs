//! Labeled datasets, their singular structure, and synthetic generators.
//!
//! Features are stored with one example per column, so `features` is
//! `d × n` for `d` features and `n` examples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::rng;

/// Default relative threshold for counting nonzero singular values.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid("features", "need d >= 1 and n >= 1"));
        }
        if labels.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                context: "labels vs. feature columns",
                expected: features.ncols(),
                actual: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("labels", format!("label {bad} is not -1 or +1")));
        }
        Ok(Dataset { features, labels })
    }

    /// Same features, different labels.
    pub fn with_labels(&self, labels: DVector<f64>) -> Result<Self> {
        Dataset::new(self.features.clone(), labels)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Columns scaled by their labels, i.e. `X·D(y)`.
    pub fn signed_features(&self) -> DMatrix<f64> {
        let mut out = self.features.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.labels[j];
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumInfo {
    pub singular_values: DVector<f64>,
    /// `d × k`, `k = min(d, n)`
    pub left_vectors: DMatrix<f64>,
    /// `n × k`
    pub right_vectors: DMatrix<f64>,
    pub rank: usize,
}

impl SpectrumInfo {
    /// Orthonormal basis of the column space, the first `rank` left vectors.
    pub fn range_basis(&self) -> DMatrix<f64> {
        self.left_vectors.columns(0, self.rank).into_owned()
    }

    pub fn top(&self) -> f64 {
        self.singular_values.get(0).copied().unwrap_or(0.0)
    }
}

/// A regularized ERM instance `min_w λ/2‖w‖² + Σ ℓ(yᵢ xᵢᵀ w)`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dataset: Dataset,
    pub loss: LossSpec,
    lambda: f64,
}

impl Problem {
    pub fn new(dataset: Dataset, loss: LossSpec, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Problem {
            dataset,
            loss,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("must be positive, got {lambda}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    /// `yᵢ = sign(w₀ᵀxᵢ)` for a random unit `w₀` in the column space.
    SignOfPlant,
    /// Independent fair coin flips.
    Random,
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign_of_plant" => Ok(LabelRule::SignOfPlant),
            "random" => Ok(LabelRule::Random),
            other => Err(Error::invalid(
                "label_rule",
                format!("unknown rule `{other}` (expected sign_of_plant | random)"),
            )),
        }
    }
}

/// Labels `sign(w₀ᵀxᵢ)`, ties going to `+1`.
pub fn sign_labels(features: &DMatrix<f64>, plant: &DVector<f64>) -> DVector<f64> {
    features
        .tr_mul(plant)
        .map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
}

/// Rank-`r` dataset `X = F·G` with standard normal `F ∈ ℝ^{d×r}`, `G ∈ ℝ^{r×n}`.
pub fn make_low_rank(d: usize, n: usize, r: usize, label_rule: LabelRule, seed: u64) -> Result<Dataset> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("d/n", "dimensions must be positive"));
    }
    if r == 0 || r > d.min(n) {
        return Err(Error::invalid("r", format!("need 1 <= r <= min(d, n) = {}, got {r}", d.min(n))));
    }
    let mut stream = rng::seeded(seed);
    let left = rng::normal_matrix(d, r, &mut stream);
    let right = rng::normal_matrix(r, n, &mut stream);
    let features = &left * &right;
    let labels = match label_rule {
        LabelRule::Random => rng::random_signs(n, &mut stream),
        LabelRule::SignOfPlant => {
            let coef = rng::normal_vector(r, &mut stream);
            let plant = (&left * coef).normalize();
            sign_labels(&features, &plant)
        }
    };
    Dataset::new(features, labels)
}

/// Top singular value used by [`make_decaying_spectrum`]; the spectral
/// norm scale of a `d × n` standard Gaussian matrix.
pub fn decaying_top_singular_value(d: usize, n: usize) -> f64 {
    (d as f64).sqrt() + (n as f64).sqrt()
}

/// The planted singular values `σᵢ = σ₁·i^(−decay)`, `i = 1..min(d, n)`.
pub fn decaying_singular_values(d: usize, n: usize, decay: f64) -> DVector<f64> {
    let top = decaying_top_singular_value(d, n);
    DVector::from_iterator(d.min(n), (1..=d.min(n)).map(|i| top * (i as f64).powf(-decay)))
}

/// Full-rank dataset with a power-law spectrum and random orthonormal
/// singular vectors; labels are random signs.
pub fn make_decaying_spectrum(d: usize, n: usize, decay: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("d/n", "dimensions must be positive"));
    }
    if !(decay.is_finite() && decay > 0.0) {
        return Err(Error::invalid("decay", format!("must be positive, got {decay}")));
    }
    let k = d.min(n);
    let mut stream = rng::seeded(seed);
    let u = random_orthonormal(d, k, &mut stream);
    let v = random_orthonormal(n, k, &mut stream);
    let sigma = decaying_singular_values(d, n, decay);
    let mut scaled = u;
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= sigma[j];
    }
    let features = scaled * v.transpose();
    let labels = rng::random_signs(n, &mut stream);
    Dataset::new(features, labels)
}

/// Relabels `data` with `sign(w₀ᵀxᵢ)` for a random unit `w₀` in the span of
/// the orthonormal columns of `basis`, drawn from the label stream of `seed`.
pub fn plant_labels_in_span(data: &Dataset, basis: &DMatrix<f64>, seed: u64) -> Result<Dataset> {
    if basis.nrows() != data.dim() || basis.ncols() == 0 {
        return Err(Error::DimensionMismatch {
            context: "planting basis vs. feature dimension",
            expected: data.dim(),
            actual: basis.nrows(),
        });
    }
    let coef = rng::normal_vector(basis.ncols(), &mut rng::seeded_stream(seed, rng::LABEL_STREAM));
    let plant = (basis * coef).normalize();
    data.with_labels(sign_labels(data.features(), &plant))
}

fn random_orthonormal(rows: usize, cols: usize, stream: &mut rng::SeededRng) -> DMatrix<f64> {
    let g = rng::normal_matrix(rows, cols, stream);
    let qr = g.qr();
    let mut q = qr.q();
    // fix signs so Q does not depend on Householder conventions
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// Thin SVD sorted by non-increasing singular value.
pub fn spectrum(data: &Dataset, rank_threshold: f64) -> Result<SpectrumInfo> {
    spectrum_of(data.features(), rank_threshold)
}

pub fn spectrum_of(features: &DMatrix<f64>, rank_threshold: f64) -> Result<SpectrumInfo> {
    if !(rank_threshold >= 0.0) {
        return Err(Error::invalid("rank_threshold", "must be non-negative"));
    }
    let svd = features
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Decomposition("missing U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Decomposition("missing Vᵀ".into()))?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let singular_values = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let left_vectors = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let right_vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| v_t.row(i).transpose())
            .collect::<Vec<_>>(),
    );
    let cutoff = rank_threshold * singular_values.get(0).copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > cutoff).count();
    Ok(SpectrumInfo {
        singular_values,
        left_vectors,
        right_vectors,
        rank,
    })
}

/// `G = D(y)·XᵀX·D(y)`.
pub fn gram(data: &Dataset) -> DMatrix<f64> {
    let signed = data.signed_features();
    signed.transpose() * &signed
}

/// `r̄ = Σ σᵢ²/(λ/γ + σᵢ²)`.
pub fn effective_rank(singular_values: &[f64], lambda: f64, gamma: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let ratio = lambda / gamma;
    Ok(singular_values
        .iter()
        .map(|s| s * s / (ratio + s * s))
        .sum())
}

/// Numerical `ν`-rank: the number of leading singular values strictly above
/// `nu`. `singular_values` must be sorted non-increasingly.
pub fn numerical_rank(singular_values: &[f64], nu: f64) -> usize {
    singular_values.iter().take_while(|&&s| s > nu).count()
}
