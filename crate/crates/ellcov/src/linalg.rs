//! Small dense linear-algebra kernel shared by the statistic and simulation
//! modules: compensated summation, Cholesky and symmetric eigendecomposition,
//! Haar-distributed orthogonal matrices, and trace helpers.
//!
//! Everything here is single-threaded and evaluates in a fixed order, so
//! results are bit-stable across runs and thread counts.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Neumaier-compensated accumulator. Used for every statistic reduction so
/// that reordering rows of the input only perturbs results at the level of
/// the compensation error, not of naive float reassociation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of values, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Frobenius norm.
pub fn frob_norm(a: &Array2<f64>) -> f64 {
    compensated_sum(a.iter().map(|v| v * v)).sqrt()
}

/// Frobenius inner product `Σ_ij a_ij b_ij`. Equals `tr(AᵀB)`, and `tr(AB)`
/// when either factor is symmetric.
pub fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    compensated_sum(a.iter().zip(b.iter()).map(|(x, y)| x * y))
}

/// `tr(AB) = Σ_ij a_ij b_ji` for square matrices of equal size.
pub fn trace_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    debug_assert_eq!(a.dim(), (n, n));
    debug_assert_eq!(b.dim(), (n, n));
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            acc.add(a[[i, j]] * b[[j, i]]);
        }
    }
    acc.total()
}

/// Matrix trace.
pub fn trace(a: &Array2<f64>) -> f64 {
    compensated_sum(a.diag().iter().copied())
}

/// Relative symmetry defect `max_ij |a_ij − a_ji| / max(1, max_ij |a_ij|)`.
pub fn symmetry_defect(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst / scale
}

/// Lower-triangular Cholesky factor `L` with `LLᵀ = A`, or `None` when a
/// pivot is nonpositive (matrix not positive definite).
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let p = a.nrows();
    debug_assert_eq!(a.dim(), (p, p));
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues ascending and
/// `A = V diag(λ) Vᵀ` where the columns of `V` are the eigenvectors.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let p = a.nrows();
    debug_assert_eq!(a.dim(), (p, p));
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(p);
    let scale = frob_norm(a).max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for i in 0..p.saturating_sub(1) {
            for j in (i + 1)..p {
                let apq = m[[i, j]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[i, i]];
                let aqq = m[[j, j]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| m[[a, a]].total_cmp(&m[[b, b]]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| m[[k, k]]));
    let mut vectors = Array2::<f64>::zeros((p, p));
    for (col, &k) in order.iter().enumerate() {
        for row in 0..p {
            vectors[[row, col]] = v[[row, k]];
        }
    }
    (eigenvalues, vectors)
}

/// Symmetric square root of a positive-semidefinite matrix, with eigenvalues
/// clamped at zero.
///
/// Fails with the offending eigenvalue when `λ_min < −tol_rel · max|λ|`,
/// i.e. when the input is materially indefinite rather than PSD up to
/// rounding.
pub fn sym_sqrt_psd(a: &Array2<f64>, tol_rel: f64) -> Result<Array2<f64>, f64> {
    let (lambda, v) = sym_eigen(a);
    let lam_max = lambda.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let lam_min = lambda.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if lam_min < -tol_rel * lam_max {
        return Err(lam_min);
    }
    let p = a.nrows();
    let mut scaled = v.clone();
    for (col, &l) in lambda.iter().enumerate() {
        let root = l.max(0.0).sqrt();
        for row in 0..p {
            scaled[[row, col]] *= root;
        }
    }
    Ok(scaled.dot(&v.t()))
}

/// Haar-distributed random orthogonal matrix: QR of an i.i.d. Gaussian
/// matrix with the sign of the R diagonal fixed to be positive.
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Array2<f64> {
    let mut a: Array2<f64> =
        Array2::from_shape_simple_fn((p, p), || rng.sample::<f64, _>(StandardNormal));
    let mut reflectors: Vec<(Array1<f64>, f64)> = Vec::with_capacity(p);
    let mut signs: Vec<f64> = Vec::with_capacity(p);

    for k in 0..p {
        let norm_x = {
            let mut s = 0.0;
            for i in k..p {
                s += a[[i, k]] * a[[i, k]];
            }
            s.sqrt()
        };
        let akk = a[[k, k]];
        let alpha = if akk >= 0.0 { -norm_x } else { norm_x };
        signs.push(if alpha >= 0.0 { 1.0 } else { -1.0 });

        let mut v = Array1::<f64>::zeros(p);
        v[k] = akk - alpha;
        for i in (k + 1)..p {
            v[i] = a[[i, k]];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..p {
                let mut dot = 0.0;
                for i in k..p {
                    dot += v[i] * a[[i, j]];
                }
                let f = 2.0 * dot / vnorm2;
                for i in k..p {
                    a[[i, j]] -= f * v[i];
                }
            }
        }
        reflectors.push((v, vnorm2));
    }

    let mut q: Array2<f64> = Array2::eye(p);
    for k in (0..p).rev() {
        let (v, vnorm2) = &reflectors[k];
        if *vnorm2 > 0.0 {
            for j in 0..p {
                let mut dot = 0.0;
                for i in k..p {
                    dot += v[i] * q[[i, j]];
                }
                let f = 2.0 * dot / vnorm2;
                for i in k..p {
                    q[[i, j]] -= f * v[i];
                }
            }
        }
    }
    for (k, sign) in signs.iter().enumerate() {
        if *sign < 0.0 {
            for i in 0..p {
                q[[i, k]] = -q[[i, k]];
            }
        }
    }
    q
}
