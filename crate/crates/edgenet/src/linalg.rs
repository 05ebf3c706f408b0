//! Dense linear-algebra kernels: symmetric eigendecomposition, SVD nullspace,
//! and power-iteration spectral norms.
//!
//! Eigenvector output is made deterministic by a sign convention: in every
//! eigenvector (and nullspace basis vector) the entry of largest magnitude is
//! positive, the earliest such entry winning ties. Downstream stability
//! measurements compare eigenbases across runs, so reproducibility matters
//! more here than in a general-purpose solver.

use faer::Mat;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Flip the sign of each column so its largest-magnitude entry is positive.
fn fix_column_signs(v: &mut Array2<f64>) {
    let (n, m) = v.dim();
    for j in 0..m {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..n {
            let a = v[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if v[[best, j]] < 0.0 {
            for i in 0..n {
                v[[i, j]] = -v[[i, j]];
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Returns `(V, lambda)` with eigenvalues ascending, columns of `V`
/// orthonormal and sign-fixed. The input is trusted to be symmetric; callers
/// validate tolerance at their boundary.
pub fn eigh_sym(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh_sym requires a square matrix");
    if n == 0 {
        return (Array2::zeros((0, 0)), Array1::zeros(0));
    }
    let evd = to_faer(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigendecomposition failed to converge");
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut vals = Array1::from_shape_fn(n, |i| s[i]);
    let mut vecs = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);

    // faer returns ascending order already; sort defensively in case of ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    if order.iter().enumerate().any(|(pos, &i)| pos != i) {
        let vals_s = Array1::from_shape_fn(n, |i| vals[order[i]]);
        let vecs_s = Array2::from_shape_fn((n, n), |(i, j)| vecs[[i, order[j]]]);
        vals = vals_s;
        vecs = vecs_s;
    }
    fix_column_signs(&mut vecs);
    (vecs, vals)
}

/// Orthonormal basis of the nullspace of `m`, via full SVD.
///
/// A right singular vector belongs to the nullspace when its singular value
/// is at most `rel_cutoff * sigma_max` (vectors beyond `min(rows, cols)`
/// carry singular value zero). Returns an `n x p` matrix of basis columns;
/// `p = 0` is possible for full-rank square/tall inputs.
pub fn svd_nullspace(m: &Array2<f64>, rel_cutoff: f64) -> Array2<f64> {
    let (rows, cols) = m.dim();
    assert!(rows > 0 && cols > 0, "svd_nullspace requires a nonempty matrix");
    let svd = to_faer(m).svd().expect("svd failed to converge");
    let s = svd.S().column_vector();
    let v = svd.V();
    let k = rows.min(cols);
    let sigma_max = if k > 0 { s[0] } else { 0.0 };
    let cutoff = rel_cutoff * sigma_max;
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..cols {
        let sv = if j < k { s[j] } else { 0.0 };
        if sv <= cutoff {
            keep.push(j);
        }
    }
    let mut basis = Array2::from_shape_fn((cols, keep.len()), |(i, j)| v[(i, keep[j])]);
    fix_column_signs(&mut basis);
    basis
}

/// Spectral norm by power iteration on `A^T A`.
///
/// Deterministic: the start vector comes from a fixed-seed generator. The
/// iteration stops when the Rayleigh-quotient estimate changes by less than
/// `rel_tol` relatively over consecutive steps, or at `max_iter`.
pub fn spectral_norm(a: &Array2<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v = Array1::from_shape_fn(cols, |_| rng.random::<f64>() - 0.5);
    let nv = norm2(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v /= nv;
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    let mut estimate = 0.0f64;
    for _ in 0..max_iter {
        let w = a.dot(&v);
        let bv = a.t().dot(&w);
        let rayleigh = v.dot(&bv); // = v^T A^T A v
        estimate = rayleigh.max(0.0).sqrt();
        let nbv = norm2(&bv);
        if nbv == 0.0 {
            return 0.0;
        }
        v = bv / nbv;
        if prev.is_finite() {
            let denom = estimate.abs().max(f64::MIN_POSITIVE);
            if ((estimate - prev) / denom).abs() < rel_tol {
                stable += 1;
                if stable >= 3 {
                    break;
                }
            } else {
                stable = 0;
            }
        }
        prev = estimate;
    }
    estimate
}

const POWER_ITERATION_SEED: u64 = 0xED6E_5EED;

pub fn norm2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest absolute entry of `V^T V - I`; zero for a perfectly orthonormal basis.
pub fn orthonormality_defect(v: &Array2<f64>) -> f64 {
    let g = v.t().dot(v);
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[[i, j]] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigh_known_2x2() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let (v, vals) = eigh_sym(&a);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let r = 0.5f64.sqrt();
        // sign convention: largest-magnitude entry positive (first index on tie)
        assert!((v[[0, 0]] - r).abs() < 1e-12);
        assert!((v[[1, 0]] + r).abs() < 1e-12);
        assert!((v[[0, 1]] - r).abs() < 1e-12);
        assert!((v[[1, 1]] - r).abs() < 1e-12);
    }

    #[test]
    fn eigh_identity_is_orthonormal() {
        let a = Array2::<f64>::eye(3);
        let (v, vals) = eigh_sym(&a);
        for i in 0..3 {
            assert!((vals[i] - 1.0).abs() < 1e-12);
        }
        assert!(orthonormality_defect(&v) < 1e-12);
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        // rank-1, 1x3: nullspace has dimension 2
        let m = array![[1.0, 2.0, 2.0]];
        let b = svd_nullspace(&m, 1e-10);
        assert_eq!(b.dim(), (3, 2));
        let residual = m.dot(&b);
        assert!(residual.iter().all(|x| x.abs() < 1e-12));
        assert!(orthonormality_defect(&b) < 1e-12);
    }

    #[test]
    fn nullspace_full_rank_is_empty() {
        let m = Array2::<f64>::eye(4);
        let b = svd_nullspace(&m, 1e-10);
        assert_eq!(b.ncols(), 0);
    }

    #[test]
    fn spectral_norm_matches_eigh() {
        let a = array![[3.0, 1.0, 0.0], [1.0, -2.0, 0.5], [0.0, 0.5, 1.0]];
        let (_, vals) = eigh_sym(&a);
        let want = vals.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let got = spectral_norm(&a, 1e-12, 10_000);
        assert!((got - want).abs() < 1e-9 * want);
    }
}
