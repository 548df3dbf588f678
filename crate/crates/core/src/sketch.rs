//! Gaussian random projection `x̂ = Rᵀx/√m`.
//!
//! A sketch can be persisted to a small binary file so that an experiment
//! can resume with exactly the same projection. Layout, little endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"DRPS"
//! 4       4     d      u32
//! 8       4     m      u32
//! 12      4     seed   u32
//! 16      8·d·m entries of R, f64, column-major
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;

pub const SKETCH_MAGIC: [u8; 4] = *b"DRPS";
pub const SKETCH_HEADER_LEN: usize = 16;

#[derive(Debug, Clone)]
pub struct ProjectionSketch {
    matrix_r: DMatrix<f64>,
    seed: u64,
    sketched_features: DMatrix<f64>,
}

impl ProjectionSketch {
    /// Draws `R` from `seed` and projects `data`.
    pub fn gaussian(data: &Dataset, m: usize, seed: u64) -> Result<Self> {
        let r = gaussian_matrix(data.dim(), m, seed)?;
        project(data, r, m, seed)
    }

    /// `R = √m·I`, for which `RRᵀ/m = I` and every recovery is exact.
    pub fn identity(data: &Dataset) -> Result<Self> {
        let d = data.dim();
        let r = DMatrix::identity(d, d) * (d as f64).sqrt();
        project(data, r, d, 0)
    }

    pub fn matrix_r(&self) -> &DMatrix<f64> {
        &self.matrix_r
    }

    pub fn m(&self) -> usize {
        self.matrix_r.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `X̂ = RᵀX/√m`, `m × n`.
    pub fn sketched_features(&self) -> &DMatrix<f64> {
        &self.sketched_features
    }

    /// `Rᵀv/√m`.
    pub fn apply(&self, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        self.matrix_r.tr_mul(v) / (self.m() as f64).sqrt()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_sketch_matrix(path, &self.matrix_r, self.seed)
    }

    /// Rebuilds a sketch of `data` from a persisted `R`.
    pub fn load(data: &Dataset, path: &Path) -> Result<Self> {
        let (r, seed) = read_sketch_matrix(path)?;
        let m = r.ncols();
        project(data, r, m, seed)
    }
}

/// `d × m` matrix of independent `N(0, 1)` entries, reproducible from `seed`
/// (drawn from the sketch stream of the seed).
pub fn gaussian_matrix(d: usize, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || m == 0 {
        return Err(Error::invalid("d/m", "dimensions must be positive"));
    }
    Ok(rng::normal_matrix(d, m, &mut rng::seeded_sketch(seed)))
}

/// Projects `data` with an arbitrary (possibly injected) `R`.
pub fn project(data: &Dataset, r_matrix: DMatrix<f64>, m: usize, seed: u64) -> Result<ProjectionSketch> {
    if r_matrix.nrows() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "rows of R vs. feature dimension",
            expected: data.dim(),
            actual: r_matrix.nrows(),
        });
    }
    if r_matrix.ncols() != m || m == 0 {
        return Err(Error::DimensionMismatch {
            context: "columns of R vs. sketch dimension",
            expected: m,
            actual: r_matrix.ncols(),
        });
    }
    let sketched_features = (r_matrix.transpose() * data.features()) / (m as f64).sqrt();
    Ok(ProjectionSketch {
        matrix_r: r_matrix,
        seed,
        sketched_features,
    })
}

pub fn write_sketch_matrix(path: &Path, r: &DMatrix<f64>, seed: u64) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let narrow = |name: &'static str, v: u64| {
        u32::try_from(v).map_err(|_| Error::invalid(name, format!("{v} does not fit the 32-bit header field")))
    };
    let d = narrow("d", r.nrows() as u64)?;
    let m = narrow("m", r.ncols() as u64)?;
    let seed = narrow("seed", seed)?;
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    out.write_all(&SKETCH_MAGIC).map_err(io)?;
    for field in [d, m, seed] {
        out.write_all(&field.to_le_bytes()).map_err(io)?;
    }
    for v in r.iter() {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_sketch_matrix(path: &Path) -> Result<(DMatrix<f64>, u64)> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < SKETCH_HEADER_LEN || bytes[..4] != SKETCH_MAGIC {
        return Err(bad("missing DRPS header".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (d, m, seed) = (field(1) as usize, field(2) as usize, field(3) as u64);
    let expected = SKETCH_HEADER_LEN + 8 * d * m;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for a {d}x{m} matrix, found {}", bytes.len())));
    }
    let data = bytes[SKETCH_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((DMatrix::from_vec(d, m, data), seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_low_rank, LabelRule};
    use nalgebra::DVector;

    #[test]
    fn gaussian_matrix_statistics() {
        let r = gaussian_matrix(1000, 100, 5).unwrap();
        let mean = r.mean();
        assert!(mean.abs() <= 4.0 / (1000.0f64 * 100.0).sqrt(), "mean {mean}");

        let r = gaussian_matrix(500, 500, 1).unwrap();
        let mean = r.mean();
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r.len() as f64 - 1.0);
        assert!((0.98..=1.02).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_matrix_determinism_and_errors() {
        assert_eq!(gaussian_matrix(2, 2, 7).unwrap(), gaussian_matrix(2, 2, 7).unwrap());
        assert_ne!(gaussian_matrix(2, 2, 7).unwrap(), gaussian_matrix(2, 2, 8).unwrap());
        assert!(gaussian_matrix(0, 2, 7).is_err());
        assert!(gaussian_matrix(2, 0, 7).is_err());
    }

    #[test]
    fn identity_and_zero_projection() {
        let data = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let r = DMatrix::identity(2, 2) * 2f64.sqrt();
        let s = project(&data, r, 2, 0).unwrap();
        assert!((s.sketched_features() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);

        let data = make_low_rank(6, 4, 2, LabelRule::Random, 1).unwrap();
        let before = data.clone();
        let s = project(&data, DMatrix::zeros(6, 3), 3, 0).unwrap();
        assert_eq!(s.sketched_features().amax(), 0.0);
        assert_eq!(data, before);
    }

    #[test]
    fn project_checks_dimensions() {
        let data = make_low_rank(6, 4, 2, LabelRule::Random, 1).unwrap();
        assert!(project(&data, DMatrix::zeros(5, 3), 3, 0).is_err());
        assert!(project(&data, DMatrix::zeros(6, 3), 4, 0).is_err());
    }

    #[test]
    fn sketched_features_recompute() {
        let data = make_low_rank(40, 10, 3, LabelRule::Random, 2).unwrap();
        let s = ProjectionSketch::gaussian(&data, 15, 9).unwrap();
        let again = gaussian_matrix(40, 15, 9).unwrap();
        assert_eq!(s.matrix_r(), &again);
        for i in 0..data.len() {
            let col = again.tr_mul(&data.features().column(i)) / 15f64.sqrt();
            let got = s.sketched_features().column(i);
            assert!((got - &col).norm() <= 1e-12 * col.norm());
        }
    }

    #[test]
    fn johnson_lindenstrauss_norm_preservation() {
        // failure probability per vector ≤ 2·exp(−m(ε² − ε³)/4) ≈ 0.004 at m = 200, ε = ½
        let d = 300;
        let vectors = rng::normal_matrix(d, 100, &mut rng::seeded(77));
        let data = Dataset::new(vectors, DVector::from_element(100, 1.0)).unwrap();
        let s = ProjectionSketch::gaussian(&data, 200, 78).unwrap();
        let failures = (0..100)
            .filter(|&i| {
                let orig = data.features().column(i).norm_squared();
                let proj = s.sketched_features().column(i).norm_squared();
                !(0.5 * orig <= proj && proj <= 1.5 * orig)
            })
            .count();
        assert!(failures <= 5, "{failures} JL failures");
    }

    #[test]
    fn sketched_gram_is_unbiased() {
        let data = make_low_rank(10, 10, 10, LabelRule::Random, 3).unwrap();
        let x = data.features();
        let exact = x.tr_mul(x);
        let trials = 200;
        let mut avg = DMatrix::<f64>::zeros(10, 10);
        for seed in 0..trials {
            let s = ProjectionSketch::gaussian(&data, 10, seed).unwrap();
            avg += s.sketched_features().tr_mul(s.sketched_features());
        }
        avg /= trials as f64;
        for i in 0..10 {
            for j in 0..10 {
                let scale = x.column(i).norm() * x.column(j).norm();
                assert!(
                    (avg[(i, j)] - exact[(i, j)]).abs() <= 5.0 / (trials as f64).sqrt() * scale,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let data = make_low_rank(7, 5, 2, LabelRule::Random, 4).unwrap();
        let s = ProjectionSketch::gaussian(&data, 3, 99).unwrap();
        s.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 8 * 7 * 3);
        assert_eq!(&bytes[..4], b"DRPS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 99);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), s.matrix_r()[(0, 0)]);
        let back = ProjectionSketch::load(&data, &path).unwrap();
        assert_eq!(back.matrix_r(), s.matrix_r());
        assert_eq!(back.seed(), 99);
        assert_eq!(back.sketched_features(), s.sketched_features());
    }

    #[test]
    fn persistence_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(matches!(read_sketch_matrix(&path), Err(Error::Format { .. })));
        let mut truncated = SKETCH_MAGIC.to_vec();
        truncated.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 1, 2, 3]);
        fs::write(&path, truncated).unwrap();
        assert!(read_sketch_matrix(&path).is_err());
        assert!(write_sketch_matrix(&path, &DMatrix::zeros(1, 1), u64::MAX).is_err());
    }
}
