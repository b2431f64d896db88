//! U-statistic estimators for covariance trace functionals.
//!
//! For two samples with covariance matrices Σ₁ and Σ₂, this module computes
//! the unbiased estimators U₁ of tr(Σ₁²), U₂ of tr(Σ₂²) and V of tr(Σ₁Σ₂),
//! plus the difference statistic T = U₁ + U₂ − 2V targeting ‖Σ₁ − Σ₂‖²_F.
//! Each estimator is defined by sums over pairwise-distinct observation
//! tuples; the fast path rewrites every tuple sum as a functional of the
//! Gram matrices and runs in O(n²p) time instead of O(n⁴p).
//!
//! `brute_force_estimates` keeps the literal tuple enumeration as the
//! ground-truth oracle: every identity used by the fast path is checked
//! against it in the test suite.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::linalg::CompensatedSum;

/// Maximum per-sample size accepted by [`brute_force_estimates`]; the
/// enumeration costs O(n⁴) tuples.
pub const BRUTE_FORCE_LIMIT: usize = 30;

#[derive(Debug, Error)]
pub enum UstatError {
    #[error("dimension mismatch: sample1 is {n1}x{p1}, sample2 is {n2}x{p2}")]
    DimensionMismatch {
        n1: usize,
        p1: usize,
        n2: usize,
        p2: usize,
    },
    #[error("insufficient observations for (n)_{order} normalization: need {needed}, have {actual}")]
    InsufficientObservations {
        order: usize,
        needed: usize,
        actual: usize,
    },
    #[error("brute-force size guard exceeded: n = {actual} > {limit}")]
    SizeGuardExceeded { limit: usize, actual: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
}

/// An n×p sample of row observations. Construction validates that the
/// matrix is nonempty and every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, UstatError> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols == 0 {
            return Err(UstatError::EmptyMatrix { rows, cols });
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(UstatError::NonFiniteEntry { row, col });
            }
        }
        Ok(Self { values })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// The three Gram blocks of a two-sample problem with cached diagonals and
/// row/column sums: G¹ = X₁X₁ᵀ, G² = X₂X₂ᵀ and the cross block H = X₁X₂ᵀ.
#[derive(Debug, Clone)]
pub struct GramBlock {
    self1: Array2<f64>,
    self2: Array2<f64>,
    cross: Array2<f64>,
    diag1: Array1<f64>,
    diag2: Array1<f64>,
    row_sums1: Array1<f64>,
    row_sums2: Array1<f64>,
    cross_row_sums: Array1<f64>,
    cross_col_sums: Array1<f64>,
}

impl GramBlock {
    pub fn self1(&self) -> &Array2<f64> {
        &self.self1
    }

    pub fn self2(&self) -> &Array2<f64> {
        &self.self2
    }

    pub fn cross(&self) -> &Array2<f64> {
        &self.cross
    }

    pub fn diag1(&self) -> &Array1<f64> {
        &self.diag1
    }

    pub fn diag2(&self) -> &Array1<f64> {
        &self.diag2
    }

    pub fn row_sums1(&self) -> &Array1<f64> {
        &self.row_sums1
    }

    pub fn row_sums2(&self) -> &Array1<f64> {
        &self.row_sums2
    }

    pub fn cross_row_sums(&self) -> &Array1<f64> {
        &self.cross_row_sums
    }

    pub fn cross_col_sums(&self) -> &Array1<f64> {
        &self.cross_col_sums
    }
}

/// The trace estimates of one two-sample evaluation. `t` is always
/// assembled as `u1 + u2 − 2 v`, in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEstimates {
    pub u1: f64,
    pub u2: f64,
    pub v: f64,
    pub t: f64,
}

impl TraceEstimates {
    fn assemble(u1: f64, u2: f64, v: f64) -> Self {
        Self {
            u1,
            u2,
            v,
            t: u1 + u2 - 2.0 * v,
        }
    }
}

fn check_same_cols(s1: &DataMatrix, s2: &DataMatrix) -> Result<(), UstatError> {
    if s1.cols() != s2.cols() {
        return Err(UstatError::DimensionMismatch {
            n1: s1.rows(),
            p1: s1.cols(),
            n2: s2.rows(),
            p2: s2.cols(),
        });
    }
    Ok(())
}

fn require_rows(sample: &DataMatrix, needed: usize, order: usize) -> Result<(), UstatError> {
    if sample.rows() < needed {
        return Err(UstatError::InsufficientObservations {
            order,
            needed,
            actual: sample.rows(),
        });
    }
    Ok(())
}

/// Falling factorial (n)_m = n(n−1)…(n−m+1), as f64.
fn falling(n: usize, m: usize) -> f64 {
    debug_assert!(n >= m && m >= 1);
    (0..m).map(|i| (n - i) as f64).product()
}

fn compensated_rows(g: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(g.rows().into_iter().map(|row| {
        let mut acc = CompensatedSum::new();
        for &v in row {
            acc.add(v);
        }
        acc.total()
    }))
}

fn compensated_cols(g: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(g.columns().into_iter().map(|col| {
        let mut acc = CompensatedSum::new();
        for &v in col {
            acc.add(v);
        }
        acc.total()
    }))
}

/// Computes all three Gram blocks in one stacked pass: the (n₁+n₂)×(n₁+n₂)
/// Gram matrix of the vertically concatenated samples is formed once and
/// sliced. Cost O((n₁+n₂)²·p).
pub fn gram(sample1: &DataMatrix, sample2: &DataMatrix) -> Result<GramBlock, UstatError> {
    check_same_cols(sample1, sample2)?;
    let n1 = sample1.rows();
    let stacked = ndarray::concatenate(Axis(0), &[sample1.view(), sample2.view()])
        .expect("column counts checked");
    let full = stacked.dot(&stacked.t());

    let self1 = full.slice(ndarray::s![..n1, ..n1]).to_owned();
    let self2 = full.slice(ndarray::s![n1.., n1..]).to_owned();
    let cross = full.slice(ndarray::s![..n1, n1..]).to_owned();

    let diag1 = self1.diag().to_owned();
    let diag2 = self2.diag().to_owned();
    let row_sums1 = compensated_rows(&self1);
    let row_sums2 = compensated_rows(&self2);
    let cross_row_sums = compensated_rows(&cross);
    let cross_col_sums = compensated_cols(&cross);

    Ok(GramBlock {
        self1,
        self2,
        cross,
        diag1,
        diag2,
        row_sums1,
        row_sums2,
        cross_row_sums,
        cross_col_sums,
    })
}

/// Reduces a self-Gram matrix to the single-sample estimator of tr(Σ²).
///
/// With r_k the off-diagonal row sums of G, the three distinct-index tuple
/// sums reduce to
///   A₁ = Σ_{j≠k} G_jk²,
///   A₂ = Σ_k r_k² − A₁,
///   A₃ = S₁² + 2A₁ − 4 Σ_k r_k²   where S₁ = Σ_k r_k,
/// each verified against the literal enumeration in the tests.
fn u_from_self_gram(g: &Array2<f64>, diag: &Array1<f64>, row_sums: &Array1<f64>) -> f64 {
    let n = g.nrows();
    let mut a1 = CompensatedSum::new();
    for ((j, k), &v) in g.indexed_iter() {
        if j != k {
            a1.add(v * v);
        }
    }
    let a1 = a1.total();

    let mut r2 = CompensatedSum::new();
    let mut s1 = CompensatedSum::new();
    for k in 0..n {
        let r = row_sums[k] - diag[k];
        r2.add(r * r);
        s1.add(r);
    }
    let r2 = r2.total();
    let s1 = s1.total();

    let a2 = r2 - a1;
    let a3 = s1 * s1 + 2.0 * a1 - 4.0 * r2;

    a1 / falling(n, 2) - 2.0 * a2 / falling(n, 3) + a3 / falling(n, 4)
}

/// Reduces the cross-Gram block to the estimator of tr(Σ₁Σ₂).
///
/// With row sums r_i, column sums c_j, F = ‖H‖²_F and S = Σ_ij H_ij, the
/// four sums of the estimator become F, Σ_j c_j² − F, Σ_i r_i² − F and
/// S² − Σ_j c_j² − Σ_i r_i² + F.
fn v_from_cross_gram(
    h: &Array2<f64>,
    row_sums: &Array1<f64>,
    col_sums: &Array1<f64>,
) -> f64 {
    let (n1, n2) = h.dim();
    let mut f = CompensatedSum::new();
    for &v in h.iter() {
        f.add(v * v);
    }
    let f = f.total();

    let rr = {
        let mut acc = CompensatedSum::new();
        for &r in row_sums {
            acc.add(r * r);
        }
        acc.total()
    };
    let cc = {
        let mut acc = CompensatedSum::new();
        for &c in col_sums {
            acc.add(c * c);
        }
        acc.total()
    };
    let s = {
        let mut acc = CompensatedSum::new();
        for &r in row_sums {
            acc.add(r);
        }
        acc.total()
    };

    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let term1 = f / (n1f * n2f);
    let term2 = (cc - f) / (n1f * n2f * (n1f - 1.0));
    let term3 = (rr - f) / (n1f * n2f * (n2f - 1.0));
    let term4 = (s * s - cc - rr + f) / (falling(n1, 2) * falling(n2, 2));

    term1 - term2 - term3 + term4
}

/// Unbiased estimator of tr(Σ²) for one sample. Requires n ≥ 4.
pub fn u_statistic(sample: &DataMatrix) -> Result<f64, UstatError> {
    require_rows(sample, 4, 4)?;
    let g = sample.values().dot(&sample.values().t());
    let diag = g.diag().to_owned();
    let row_sums = compensated_rows(&g);
    Ok(u_from_self_gram(&g, &diag, &row_sums))
}

/// Unbiased estimator of tr(Σ₁Σ₂). Requires n₁, n₂ ≥ 2 and equal column
/// counts.
pub fn v_statistic(sample1: &DataMatrix, sample2: &DataMatrix) -> Result<f64, UstatError> {
    check_same_cols(sample1, sample2)?;
    require_rows(sample1, 2, 2)?;
    require_rows(sample2, 2, 2)?;
    let h = sample1.values().dot(&sample2.values().t());
    let row_sums = compensated_rows(&h);
    let col_sums = compensated_cols(&h);
    Ok(v_from_cross_gram(&h, &row_sums, &col_sums))
}

/// All four trace estimates from one shared Gram pass.
pub fn t_statistic(
    sample1: &DataMatrix,
    sample2: &DataMatrix,
) -> Result<TraceEstimates, UstatError> {
    require_rows(sample1, 4, 4)?;
    require_rows(sample2, 4, 4)?;
    let g = gram(sample1, sample2)?;
    let u1 = u_from_self_gram(&g.self1, &g.diag1, &g.row_sums1);
    let u2 = u_from_self_gram(&g.self2, &g.diag2, &g.row_sums2);
    let v = v_from_cross_gram(&g.cross, &g.cross_row_sums, &g.cross_col_sums);
    Ok(TraceEstimates::assemble(u1, u2, v))
}

fn naive_inner_products(a: &DataMatrix, b: &DataMatrix) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.rows(), b.rows()));
    let (av, bv) = (a.values(), b.values());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += av[[i, k]] * bv[[j, k]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

fn brute_u(g: &Array2<f64>) -> f64 {
    let n = g.nrows();
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut s4 = 0.0;
    for j in 0..n {
        for k in 0..n {
            if k == j {
                continue;
            }
            s2 += g[[j, k]] * g[[j, k]];
            for l in 0..n {
                if l == j || l == k {
                    continue;
                }
                s3 += g[[j, k]] * g[[k, l]];
                for m in 0..n {
                    if m == j || m == k || m == l {
                        continue;
                    }
                    s4 += g[[j, k]] * g[[l, m]];
                }
            }
        }
    }
    s2 / falling(n, 2) - 2.0 * s3 / falling(n, 3) + s4 / falling(n, 4)
}

fn brute_v(h: &Array2<f64>) -> f64 {
    let (n1, n2) = h.dim();
    let (n1f, n2f) = (n1 as f64, n2 as f64);

    let mut t1 = 0.0;
    for j in 0..n1 {
        for k in 0..n2 {
            t1 += h[[j, k]] * h[[j, k]];
        }
    }
    t1 /= n1f * n2f;

    let mut t2 = 0.0;
    for k in 0..n1 {
        for l in 0..n1 {
            if l == k {
                continue;
            }
            for j in 0..n2 {
                t2 += h[[l, j]] * h[[k, j]];
            }
        }
    }
    t2 /= n1f * n2f * (n1f - 1.0);

    let mut t3 = 0.0;
    for k in 0..n2 {
        for l in 0..n2 {
            if l == k {
                continue;
            }
            for j in 0..n1 {
                t3 += h[[j, l]] * h[[j, k]];
            }
        }
    }
    t3 /= n2f * n1f * (n2f - 1.0);

    let mut t4 = 0.0;
    for i in 0..n1 {
        for k in 0..n1 {
            if k == i {
                continue;
            }
            for j in 0..n2 {
                for l in 0..n2 {
                    if l == j {
                        continue;
                    }
                    t4 += h[[i, j]] * h[[k, l]];
                }
            }
        }
    }
    t4 /= falling(n1, 2) * falling(n2, 2);

    t1 - t2 - t3 + t4
}

/// Literal enumeration of every distinct-index tuple sum. Ground-truth
/// oracle for the fast path; guarded to n ≤ [`BRUTE_FORCE_LIMIT`] because
/// of the O(n⁴p) cost.
pub fn brute_force_estimates(
    sample1: &DataMatrix,
    sample2: &DataMatrix,
) -> Result<TraceEstimates, UstatError> {
    check_same_cols(sample1, sample2)?;
    for s in [sample1, sample2] {
        if s.rows() > BRUTE_FORCE_LIMIT {
            return Err(UstatError::SizeGuardExceeded {
                limit: BRUTE_FORCE_LIMIT,
                actual: s.rows(),
            });
        }
    }
    require_rows(sample1, 4, 4)?;
    require_rows(sample2, 4, 4)?;

    let g1 = naive_inner_products(sample1, sample1);
    let g2 = naive_inner_products(sample2, sample2);
    let h = naive_inner_products(sample1, sample2);

    let u1 = brute_u(&g1);
    let u2 = brute_u(&g2);
    let v = brute_v(&h);
    Ok(TraceEstimates::assemble(u1, u2, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: &[&[f64]]) -> DataMatrix {
        let r = rows.len();
        let c = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DataMatrix::new(Array2::from_shape_vec((r, c), flat).unwrap()).unwrap()
    }

    fn random_int_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DataMatrix {
        let values = Array2::from_shape_simple_fn((n, p), || rng.random_range(-3..=3) as f64);
        DataMatrix::new(values).unwrap()
    }

    #[test]
    fn gram_of_orthonormal_rows_is_identity() {
        let x = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = gram(&x, &x).unwrap();
        let eye = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(g.self1(), &eye);
        assert_eq!(g.self2(), &eye);
        assert_eq!(g.cross(), &eye);
    }

    #[test]
    fn gram_single_row_is_squared_norm() {
        let x = matrix(&[&[3.0, 4.0]]);
        let g = gram(&x, &x).unwrap();
        assert_eq!(g.self1()[[0, 0]], 25.0);
    }

    #[test]
    fn gram_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_int_matrix(&mut rng, 5, 3);
        let b = random_int_matrix(&mut rng, 5, 3);
        let g = gram(&a, &b).unwrap();
        assert_eq!(g.self1(), &naive_inner_products(&a, &a));
        assert_eq!(g.self2(), &naive_inner_products(&b, &b));
        assert_eq!(g.cross(), &naive_inner_products(&a, &b));
        assert!(crate::linalg::symmetry_defect(g.self1()) <= 1e-10);
        assert!(crate::linalg::symmetry_defect(g.self2()) <= 1e-10);
    }

    #[test]
    fn gram_rejects_column_mismatch() {
        let a = matrix(&[&[1.0, 2.0]]);
        let b = matrix(&[&[1.0, 2.0, 3.0]]);
        match gram(&a, &b) {
            Err(UstatError::DimensionMismatch { n1, p1, n2, p2 }) => {
                assert_eq!((n1, p1, n2, p2), (1, 2, 1, 3));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn u_vanishes_for_mutually_orthogonal_rows() {
        let x = matrix(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 2.0, 0.0, 0.0],
            &[0.0, 0.0, 3.0, 0.0],
            &[0.0, 0.0, 0.0, 4.0],
        ]);
        assert_eq!(u_statistic(&x).unwrap(), 0.0);
    }

    #[test]
    fn u_frozen_small_example() {
        // Brute-force value for rows (1,0),(0,1),(1,1),(1,−1) is exactly 2/3.
        let x = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0, -1.0]]);
        assert_relative_eq!(u_statistic(&x).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn u_requires_four_observations() {
        let x = matrix(&[&[1.0], &[2.0], &[3.0]]);
        match u_statistic(&x) {
            Err(UstatError::InsufficientObservations { needed: 4, actual: 3, .. }) => {}
            other => panic!("expected insufficient observations, got {other:?}"),
        }
    }

    #[test]
    fn v_vanishes_for_cross_orthogonal_samples() {
        let a = matrix(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let b = matrix(&[&[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
        assert_eq!(v_statistic(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn v_frozen_small_example() {
        // Brute-force value for these integer samples is exactly 49/3.
        let a = matrix(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 2.0]]);
        let b = matrix(&[&[2.0, 0.0], &[1.0, 1.0], &[-1.0, 3.0], &[2.0, 2.0]]);
        assert_relative_eq!(v_statistic(&a, &b).unwrap(), 49.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn t_frozen_tiny_instance() {
        let a = matrix(&[
            &[1.0, 0.0, 2.0],
            &[0.0, 1.0, -1.0],
            &[2.0, 1.0, 1.0],
            &[1.0, -1.0, 0.0],
        ]);
        let b = matrix(&[
            &[0.0, 1.0, 1.0],
            &[2.0, 0.0, 1.0],
            &[1.0, 1.0, -2.0],
            &[0.0, 2.0, 0.0],
            &[1.0, 1.0, 1.0],
        ]);
        let est = t_statistic(&a, &b).unwrap();
        let brute = brute_force_estimates(&a, &b).unwrap();
        // Exact rationals: u1 = 2, u2 = 47/30, v = 469/120, t = −17/4.
        assert_relative_eq!(est.u1, 2.0, max_relative = 1e-12);
        assert_relative_eq!(est.u2, 47.0 / 30.0, max_relative = 1e-12);
        assert_relative_eq!(est.v, 469.0 / 120.0, max_relative = 1e-12);
        assert_relative_eq!(est.t, -4.25, max_relative = 1e-12);
        assert_relative_eq!(est.u1, brute.u1, max_relative = 1e-12);
        assert_relative_eq!(est.u2, brute.u2, max_relative = 1e-12);
        assert_relative_eq!(est.v, brute.v, max_relative = 1e-12);
    }

    #[test]
    fn t_on_identical_samples_is_assembly_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_int_matrix(&mut rng, 6, 4);
        let est = t_statistic(&a, &a).unwrap();
        assert_eq!(est.t, est.u1 + est.u2 - 2.0 * est.v);
        assert_ne!(est.t, 0.0);
    }

    #[test]
    fn t_is_location_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n1 = 8;
        let n2 = 10;
        let p = 5;
        let a = DataMatrix::new(Array2::from_shape_simple_fn((n1, p), || {
            rng.sample::<f64, _>(StandardNormal)
        }))
        .unwrap();
        let b = DataMatrix::new(Array2::from_shape_simple_fn((n2, p), || {
            rng.sample::<f64, _>(StandardNormal)
        }))
        .unwrap();
        let shift_a: Vec<f64> = (0..p).map(|k| 3.0 + k as f64).collect();
        let shift_b: Vec<f64> = (0..p).map(|k| -2.0 + 0.5 * k as f64).collect();
        let mut av = a.values().clone();
        let mut bv = b.values().clone();
        for mut row in av.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += shift_a[k];
            }
        }
        for mut row in bv.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += shift_b[k];
            }
        }
        let a_shifted = DataMatrix::new(av).unwrap();
        let b_shifted = DataMatrix::new(bv).unwrap();

        let t0 = t_statistic(&a, &b).unwrap().t;
        let t1 = t_statistic(&a_shifted, &b_shifted).unwrap().t;
        assert_relative_eq!(t0, t1, max_relative = 1e-8);
    }

    #[test]
    fn fast_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..30 {
            let n1 = rng.random_range(4..=10);
            let n2 = rng.random_range(4..=10);
            let p = rng.random_range(1..=6);
            let a = random_int_matrix(&mut rng, n1, p);
            let b = random_int_matrix(&mut rng, n2, p);
            let fast = t_statistic(&a, &b).unwrap();
            let brute = brute_force_estimates(&a, &b).unwrap();
            assert_relative_eq!(fast.u1, brute.u1, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(fast.u2, brute.u2, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(fast.v, brute.v, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(fast.t, brute.t, max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn brute_force_normalizes_n4_by_24() {
        assert_eq!(falling(4, 4), 24.0);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = random_int_matrix(&mut rng, 4, 3);
        let b = random_int_matrix(&mut rng, 4, 3);
        let fast = t_statistic(&a, &b).unwrap();
        let brute = brute_force_estimates(&a, &b).unwrap();
        assert_relative_eq!(fast.t, brute.t, max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn single_nonzero_column_reduces_to_scalar_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let col_a: Vec<f64> = (0..6).map(|_| rng.random_range(-4..=4) as f64).collect();
        let col_b: Vec<f64> = (0..5).map(|_| rng.random_range(-4..=4) as f64).collect();

        let mut wide_a = Array2::<f64>::zeros((6, 3));
        let mut wide_b = Array2::<f64>::zeros((5, 3));
        for (i, v) in col_a.iter().enumerate() {
            wide_a[[i, 1]] = *v;
        }
        for (i, v) in col_b.iter().enumerate() {
            wide_b[[i, 1]] = *v;
        }
        let narrow_a = Array2::from_shape_vec((6, 1), col_a).unwrap();
        let narrow_b = Array2::from_shape_vec((5, 1), col_b).unwrap();

        let wide = brute_force_estimates(
            &DataMatrix::new(wide_a).unwrap(),
            &DataMatrix::new(wide_b).unwrap(),
        )
        .unwrap();
        let narrow = brute_force_estimates(
            &DataMatrix::new(narrow_a).unwrap(),
            &DataMatrix::new(narrow_b).unwrap(),
        )
        .unwrap();
        assert_eq!(wide.u1, narrow.u1);
        assert_eq!(wide.u2, narrow.u2);
        assert_eq!(wide.v, narrow.v);
    }

    #[test]
    fn brute_force_guards_size() {
        let big = DataMatrix::new(Array2::<f64>::ones((31, 2))).unwrap();
        let small = DataMatrix::new(Array2::<f64>::ones((4, 2))).unwrap();
        match brute_force_estimates(&big, &small) {
            Err(UstatError::SizeGuardExceeded { limit: 30, actual: 31 }) => {}
            other => panic!("expected size guard, got {other:?}"),
        }
    }

    #[test]
    fn data_matrix_rejects_bad_input() {
        assert!(matches!(
            DataMatrix::new(Array2::<f64>::zeros((0, 3))),
            Err(UstatError::EmptyMatrix { .. })
        ));
        let mut m = Array2::<f64>::zeros((2, 2));
        m[[1, 0]] = f64::NAN;
        assert!(matches!(
            DataMatrix::new(m),
            Err(UstatError::NonFiniteEntry { row: 1, col: 0 })
        ));
    }

    #[test]
    fn monte_carlo_unbiasedness_small() {
        // Standard normal rows, Σ = I_p: E[U] = tr Σ² = p and E[V] = p.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, p, reps) = (8, 5, 10_000);
        let mut us = Vec::with_capacity(reps);
        let mut vs = Vec::with_capacity(reps);
        for _ in 0..reps {
            let a = DataMatrix::new(Array2::from_shape_simple_fn((n, p), || {
                rng.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let b = DataMatrix::new(Array2::from_shape_simple_fn((n, p), || {
                rng.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            us.push(u_statistic(&a).unwrap());
            vs.push(v_statistic(&a, &b).unwrap());
        }
        for (values, target) in [(us, p as f64), (vs, p as f64)] {
            let mean = values.iter().sum::<f64>() / reps as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            assert!(
                (mean - target).abs() <= 3.0 * se,
                "mean {mean} vs target {target} (se {se})"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scaling_is_quartic(seed in 0u64..1_000, scale in 0.25f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_int_matrix(&mut rng, 5, 3);
            let b = random_int_matrix(&mut rng, 6, 3);
            let base = t_statistic(&a, &b).unwrap();
            let sa = DataMatrix::new(a.values() * scale).unwrap();
            let sb = DataMatrix::new(b.values() * scale).unwrap();
            let scaled = t_statistic(&sa, &sb).unwrap();
            let c4 = scale.powi(4);
            prop_assert!((scaled.u1 - c4 * base.u1).abs() <= 1e-9 * (1.0 + base.u1.abs() * c4));
            prop_assert!((scaled.u2 - c4 * base.u2).abs() <= 1e-9 * (1.0 + base.u2.abs() * c4));
            prop_assert!((scaled.v - c4 * base.v).abs() <= 1e-9 * (1.0 + base.v.abs() * c4));
            prop_assert!((scaled.t - c4 * base.t).abs() <= 1e-9 * (1.0 + base.t.abs() * c4));
        }

        #[test]
        fn row_permutation_leaves_estimates_unchanged(seed in 0u64..1_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_int_matrix(&mut rng, 7, 4);
            let b = random_int_matrix(&mut rng, 5, 4);
            let mut order: Vec<usize> = (0..7).collect();
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let permuted = {
                let mut m = Array2::<f64>::zeros((7, 4));
                for (dst, &src) in order.iter().enumerate() {
                    m.row_mut(dst).assign(&a.values().row(src));
                }
                DataMatrix::new(m).unwrap()
            };
            let base = t_statistic(&a, &b).unwrap();
            let perm = t_statistic(&permuted, &b).unwrap();
            let tol = |x: f64| 1e-12 * (1.0 + x.abs());
            prop_assert!((base.u1 - perm.u1).abs() <= tol(base.u1));
            prop_assert!((base.u2 - perm.u2).abs() <= tol(base.u2));
            prop_assert!((base.v - perm.v).abs() <= tol(base.v));
            prop_assert!((base.t - perm.t).abs() <= tol(base.t));
        }
    }
}
