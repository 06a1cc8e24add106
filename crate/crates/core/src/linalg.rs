//! Small dense linear algebra for action-distribution work: packed
//! lower-triangular factors, Cholesky factorization, forward/backward
//! substitution, and squared Mahalanobis distances.
//!
//! Quadratic forms never go through a general matrix inverse; everything
//! is routed through triangular solves against the Cholesky factor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pivot below this value fails the factorization.
pub const PD_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("packed storage length {got} does not match dimension {dim} (need {need})")]
    BadPackedLength { dim: usize, need: usize, got: usize },
}

fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index of entry (row, col) with col <= row in row-major packed storage.
#[inline]
fn packed_idx(row: usize, col: usize) -> usize {
    row * (row + 1) / 2 + col
}

/// Lower-triangular matrix in row-major packed storage: row i contributes
/// its i+1 leading entries, d(d+1)/2 values total. Entries above the
/// diagonal are implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular {
    dim: usize,
    entries: Vec<f64>,
}

impl LowerTriangular {
    pub fn from_packed(dim: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if entries.len() != packed_len(dim) {
            return Err(LinalgError::BadPackedLength {
                dim,
                need: packed_len(dim),
                got: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; packed_len(dim)];
        for i in 0..dim {
            entries[packed_idx(i, i)] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.entries
    }

    /// Entry (row, col); zero above the diagonal.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if col > row {
            0.0
        } else {
            self.entries[packed_idx(row, col)]
        }
    }

    pub fn diag(&self, k: usize) -> f64 {
        self.entries[packed_idx(k, k)]
    }

    /// True when every diagonal entry is strictly positive, i.e. the matrix
    /// is a valid Cholesky factor.
    pub fn diag_positive(&self) -> bool {
        (0..self.dim).all(|k| self.diag(k) > 0.0)
    }

    /// L·v.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.entries[packed_idx(i, 0)..=packed_idx(i, i)];
            out[i] = row.iter().zip(&v[..=i]).map(|(l, x)| l * x).sum();
        }
        Ok(out)
    }

    /// L·Lᵀ, returned as a symmetric matrix.
    pub fn gram(&self) -> SymmetricPd {
        let d = self.dim;
        let mut entries = vec![0.0; packed_len(d)];
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += self.get(i, k) * self.get(j, k);
                }
                entries[packed_idx(i, j)] = acc;
            }
        }
        SymmetricPd { dim: d, entries }
    }

    /// Sum of log diagonal entries; half the log-determinant of L·Lᵀ.
    pub fn log_diag_sum(&self) -> f64 {
        (0..self.dim).map(|k| self.diag(k).ln()).sum()
    }
}

/// Symmetric matrix with only the lower half stored (packed row-major),
/// so symmetry is exact by construction. Positive-definiteness is
/// established by a successful [`cholesky`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricPd {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricPd {
    pub fn from_packed(dim: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if entries.len() != packed_len(dim) {
            return Err(LinalgError::BadPackedLength {
                dim,
                need: packed_len(dim),
                got: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    /// Build from full row-major entries; the strict upper half is ignored.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Result<Self, LinalgError> {
        if rows.len() != dim * dim {
            return Err(LinalgError::BadPackedLength {
                dim,
                need: dim * dim,
                got: rows.len(),
            });
        }
        let mut entries = Vec::with_capacity(packed_len(dim));
        for i in 0..dim {
            for j in 0..=i {
                entries.push(rows[i * dim + j]);
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; packed_len(dim)];
        for i in 0..dim {
            entries[packed_idx(i, i)] = 1.0;
        }
        Self { dim, entries }
    }

    /// Scaled identity sigma2·I.
    pub fn scaled_identity(dim: usize, sigma2: f64) -> Self {
        let mut entries = vec![0.0; packed_len(dim)];
        for i in 0..dim {
            entries[packed_idx(i, i)] = sigma2;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if col > row { (col, row) } else { (row, col) };
        self.entries[packed_idx(r, c)]
    }

    pub fn packed(&self) -> &[f64] {
        &self.entries
    }
}

/// Cholesky factorization S = L·Lᵀ with strictly positive diagonal.
///
/// Fails with `NotPositiveDefinite` when a pivot drops to [`PD_PIVOT_TOL`]
/// or below, which signals an invalid covariance rather than a value to
/// repair.
pub fn cholesky(s: &SymmetricPd) -> Result<LowerTriangular, LinalgError> {
    let d = s.dim;
    let mut l = vec![0.0; packed_len(d)];
    for i in 0..d {
        for j in 0..=i {
            let mut acc = s.get(i, j);
            for k in 0..j {
                acc -= l[packed_idx(i, k)] * l[packed_idx(j, k)];
            }
            if i == j {
                if acc <= PD_PIVOT_TOL {
                    return Err(LinalgError::NotPositiveDefinite { index: i, pivot: acc });
                }
                l[packed_idx(i, j)] = acc.sqrt();
            } else {
                l[packed_idx(i, j)] = acc / l[packed_idx(j, j)];
            }
        }
    }
    Ok(LowerTriangular { dim: d, entries: l })
}

/// Solve L·y = v by forward substitution.
pub fn forward_substitute(l: &LowerTriangular, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if v.len() != l.dim {
        return Err(LinalgError::DimensionMismatch {
            expected: l.dim,
            got: v.len(),
        });
    }
    let mut y = vec![0.0; l.dim];
    for i in 0..l.dim {
        let mut acc = v[i];
        for k in 0..i {
            acc -= l.entries[packed_idx(i, k)] * y[k];
        }
        y[i] = acc / l.entries[packed_idx(i, i)];
    }
    Ok(y)
}

/// Solve Lᵀ·y = v by backward substitution.
pub fn back_substitute_transpose(
    l: &LowerTriangular,
    v: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    if v.len() != l.dim {
        return Err(LinalgError::DimensionMismatch {
            expected: l.dim,
            got: v.len(),
        });
    }
    let d = l.dim;
    let mut y = vec![0.0; d];
    for i in (0..d).rev() {
        let mut acc = v[i];
        for k in (i + 1)..d {
            // (Lᵀ)[i][k] = L[k][i]
            acc -= l.entries[packed_idx(k, i)] * y[k];
        }
        y[i] = acc / l.entries[packed_idx(i, i)];
    }
    Ok(y)
}

/// Squared Mahalanobis distance (a−mu)ᵀ(L·Lᵀ)⁻¹(a−mu), computed as yᵀy
/// with y the forward-substitution solve of L·y = a−mu.
pub fn mahalanobis_sq(a: &[f64], mu: &[f64], l: &LowerTriangular) -> Result<f64, LinalgError> {
    if a.len() != mu.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: mu.len(),
            got: a.len(),
        });
    }
    let diff: Vec<f64> = a.iter().zip(mu).map(|(x, m)| x - m).collect();
    let y = forward_substitute(l, &diff)?;
    Ok(y.iter().map(|v| v * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn random_spd(rng: &mut StdRng, dim: usize) -> SymmetricPd {
        // A·Aᵀ + εI keeps the spectrum away from zero.
        let a: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rows = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = if i == j { 0.5 } else { 0.0 };
                for k in 0..dim {
                    acc += a[i * dim + k] * a[j * dim + k];
                }
                rows[i * dim + j] = acc;
            }
        }
        SymmetricPd::from_rows(dim, &rows).unwrap()
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymmetricPd::identity(2)).unwrap();
        assert_eq!(l, LowerTriangular::identity(2));
    }

    #[test]
    fn cholesky_2x2_reconstructs() {
        let s = SymmetricPd::from_rows(2, &[4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&s).unwrap();
        assert!((l.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((l.get(1, 0) - 1.0).abs() < 1e-15);
        assert!((l.get(1, 1) - SQRT2).abs() < 1e-15);
        // Verify by recomputing L·Lᵀ elementwise.
        let g = l.gram();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.get(i, j) - s.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = SymmetricPd::from_rows(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        match cholesky(&s) {
            Err(LinalgError::NotPositiveDefinite { .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn forward_substitute_identity() {
        let l = LowerTriangular::identity(3);
        let y = forward_substitute(&l, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn forward_substitute_2x2() {
        let l = LowerTriangular::from_packed(2, vec![2.0, 1.0, SQRT2]).unwrap();
        let y = forward_substitute(&l, &[2.0, 3.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[1] - SQRT2).abs() < 1e-15);
        // Substitute back into L·y and compare to v.
        let v = l.matvec(&y).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15);
        assert!((v[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_substitute_dimension_mismatch() {
        let l = LowerTriangular::identity(2);
        assert!(matches!(
            forward_substitute(&l, &[]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn back_substitute_transpose_solves() {
        let l = LowerTriangular::from_packed(2, vec![2.0, 1.0, SQRT2]).unwrap();
        let y = back_substitute_transpose(&l, &[2.0, 3.0]).unwrap();
        // Check Lᵀ·y = v directly.
        assert!((l.get(0, 0) * y[0] + l.get(1, 0) * y[1] - 2.0).abs() < 1e-14);
        assert!((l.get(1, 1) * y[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mahalanobis_zero_at_mean() {
        let l = LowerTriangular::from_packed(2, vec![1.3, -0.2, 0.7]).unwrap();
        let d2 = mahalanobis_sq(&[0.4, -0.9], &[0.4, -0.9], &l).unwrap();
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn mahalanobis_euclidean_under_identity() {
        let l = LowerTriangular::identity(2);
        let d2 = mahalanobis_sq(&[1.0, 1.0], &[0.0, 0.0], &l).unwrap();
        assert!((d2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mahalanobis_matches_explicit_2x2_inverse() {
        // Brute force through Σ⁻¹ computed by the 2x2 inverse formula.
        let l = LowerTriangular::from_packed(2, vec![2.0, 1.0, SQRT2]).unwrap();
        let s = l.gram();
        let (a, b, c) = (s.get(0, 0), s.get(0, 1), s.get(1, 1));
        let det = a * c - b * b;
        let inv = [c / det, -b / det, -b / det, a / det];
        let diff = [2.0, 3.0];
        let brute = diff[0] * (inv[0] * diff[0] + inv[1] * diff[1])
            + diff[1] * (inv[2] * diff[0] + inv[3] * diff[1]);
        let d2 = mahalanobis_sq(&diff, &[0.0, 0.0], &l).unwrap();
        assert!((d2 - brute).abs() < 1e-12);
        assert!((d2 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_spd_reconstruction_and_roundtrip() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let dim = rng.gen_range(1..=10);
            let s = random_spd(&mut rng, dim);
            let l = cholesky(&s).unwrap();
            let g = l.gram();
            for i in 0..dim {
                for j in 0..=i {
                    assert!((g.get(i, j) - s.get(i, j)).abs() < 1e-10);
                }
            }
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = l.matvec(&y).unwrap();
            let back = forward_substitute(&l, &v).unwrap();
            for (yi, bi) in y.iter().zip(&back) {
                assert!((yi - bi).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn mahalanobis_nonnegative(
            seed in any::<u64>(),
            dim in 1usize..6,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let s = random_spd(&mut rng, dim);
            let l = cholesky(&s).unwrap();
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let d2 = mahalanobis_sq(&a, &mu, &l).unwrap();
            prop_assert!(d2 >= 0.0);
            if a.iter().zip(&mu).any(|(x, m)| (x - m).abs() > 1e-9) {
                prop_assert!(d2 > 0.0);
            }
        }

        #[test]
        fn mahalanobis_permutation_invariant(
            seed in any::<u64>(),
            dim in 2usize..6,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let s = random_spd(&mut rng, dim);
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let d2 = mahalanobis_sq(&a, &mu, &cholesky(&s).unwrap()).unwrap();

            // Rotate coordinates by one and permute Σ accordingly.
            let perm: Vec<usize> = (0..dim).map(|i| (i + 1) % dim).collect();
            let mut rows = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    rows[i * dim + j] = s.get(perm[i], perm[j]);
                }
            }
            let sp = SymmetricPd::from_rows(dim, &rows).unwrap();
            let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let mup: Vec<f64> = perm.iter().map(|&i| mu[i]).collect();
            let d2p = mahalanobis_sq(&ap, &mup, &cholesky(&sp).unwrap()).unwrap();
            prop_assert!((d2 - d2p).abs() < 1e-9 * (1.0 + d2.abs()));
        }
    }
}
