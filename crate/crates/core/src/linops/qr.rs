//! Householder QR with column pivoting, used for rank detection and for
//! pruning redundant constraint rows.

use ndarray::{Array1, Array2, ArrayView2};

/// Column-pivoted QR of an m×n matrix: `A P = Q R` with pivots ordered by
/// decreasing remaining column norm.
pub struct ColPivQr {
    /// Householder vectors in the lower trapezoid, R in the upper triangle.
    factors: Array2<f64>,
    pub pivots: Vec<usize>,
    pub rank: usize,
}

impl ColPivQr {
    /// Factor with an absolute rank threshold: the factorization stops once
    /// every remaining column has norm at most `tol`.
    pub fn new(a: ArrayView2<f64>, tol: f64) -> Self {
        let (m, n) = a.dim();
        let mut f = a.to_owned();
        let mut pivots: Vec<usize> = (0..n).collect();
        let mut norms: Array1<f64> = Array1::from_shape_fn(n, |j| {
            f.column(j).dot(&f.column(j))
        });
        let orig_norms = norms.clone();
        let steps = m.min(n);
        let mut rank = 0;

        for k in 0..steps {
            // Pivot on the largest remaining column (exact recompute when the
            // running update has cancelled away most of the mass).
            let mut best = k;
            for j in k + 1..n {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if norms[best] < 0.1 * orig_norms[pivots[best]].max(f64::MIN_POSITIVE) {
                for j in k..n {
                    let c = f.column(j);
                    let mut s = 0.0;
                    for i in k..m {
                        s += c[i] * c[i];
                    }
                    norms[j] = s;
                }
                best = k;
                for j in k + 1..n {
                    if norms[j] > norms[best] {
                        best = j;
                    }
                }
            }
            if norms[best].max(0.0).sqrt() <= tol {
                break;
            }
            if best != k {
                for i in 0..m {
                    f.swap([i, k], [i, best]);
                }
                pivots.swap(k, best);
                norms.swap(k, best);
            }

            // Householder reflector for column k.
            let mut sigma = 0.0;
            for i in k..m {
                sigma += f[[i, k]] * f[[i, k]];
            }
            let sigma = sigma.sqrt();
            if sigma == 0.0 {
                break;
            }
            let alpha = if f[[k, k]] >= 0.0 { -sigma } else { sigma };
            let v0 = f[[k, k]] - alpha;
            f[[k, k]] = alpha;
            // Normalize so v = [1, f[k+1..m, k]/v0].
            for i in k + 1..m {
                f[[i, k]] /= v0;
            }
            let beta = -v0 / alpha; // 2 / (vᵀv) for the normalized reflector

            for j in k + 1..n {
                let mut dot = f[[k, j]];
                for i in k + 1..m {
                    dot += f[[i, k]] * f[[i, j]];
                }
                let w = beta * dot;
                f[[k, j]] -= w;
                for i in k + 1..m {
                    let vik = f[[i, k]];
                    f[[i, j]] -= w * vik;
                }
                norms[j] -= f[[k, j]] * f[[k, j]];
                if norms[j] < 0.0 {
                    norms[j] = 0.0;
                }
            }
            rank = k + 1;
        }

        Self { factors: f, pivots, rank }
    }

    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.rank).map(|k| self.factors[[k, k]]).collect()
    }
}

/// Return a maximal linearly independent subset of the rows of `constraints`
/// with the same row space, in original row order. Rank is decided by a
/// column-pivoted QR of the transpose with absolute threshold `tol`.
pub fn prune_redundant_rows(constraints: &Array2<f64>, tol: f64) -> Array2<f64> {
    let q = constraints.nrows();
    let p = constraints.ncols();
    if q == 0 {
        return constraints.clone();
    }
    let qr = ColPivQr::new(constraints.t(), tol);
    let mut keep: Vec<usize> = qr.pivots[..qr.rank].to_vec();
    keep.sort_unstable();
    let mut out = Array2::<f64>::zeros((keep.len(), p));
    for (r, &i) in keep.iter().enumerate() {
        out.row_mut(r).assign(&constraints.row(i));
    }
    out
}

/// Default pruning threshold: scales with the largest row norm, matching the
/// factorization pivot threshold.
pub fn prune_tol(constraints: &Array2<f64>) -> f64 {
    let mut max_norm = 0.0f64;
    for row in constraints.rows() {
        max_norm = max_norm.max(row.dot(&row).sqrt());
    }
    1e-10 * max_norm.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Orthogonal projector onto the row space, built from Gram–Schmidt.
    fn row_space_projector(a: &Array2<f64>) -> Array2<f64> {
        let p = a.ncols();
        let mut basis: Vec<Array1<f64>> = Vec::new();
        for row in a.rows() {
            let mut v = row.to_owned();
            for b in &basis {
                let c = v.dot(b);
                v.scaled_add(-c, b);
            }
            let n = v.dot(&v).sqrt();
            if n > 1e-10 {
                basis.push(v / n);
            }
        }
        let mut proj = Array2::<f64>::zeros((p, p));
        for b in &basis {
            for i in 0..p {
                for j in 0..p {
                    proj[[i, j]] += b[i] * b[j];
                }
            }
        }
        proj
    }

    #[test]
    fn drops_duplicate_row() {
        let a = array![[1.0, 0.0], [1.0, 0.0]];
        let pruned = prune_redundant_rows(&a, prune_tol(&a));
        assert_eq!(pruned.nrows(), 1);
        assert_eq!(pruned.row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn full_rank_keeps_row_space() {
        let a = array![[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]];
        let pruned = prune_redundant_rows(&a, prune_tol(&a));
        assert_eq!(pruned.nrows(), 2);
        let p1 = row_space_projector(&a);
        let p2 = row_space_projector(&pruned);
        let diff = (&p1 - &p2).mapv(f64::abs).sum();
        assert!(diff < 1e-10);
    }

    #[test]
    fn rank3_matrix_pruned_to_three_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = Array2::from_shape_fn((3, 8), |_| rng.random::<f64>() - 0.5);
        let c = Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() - 0.5);
        let a = c.dot(&b); // 5x8 of rank 3
        let pruned = prune_redundant_rows(&a, prune_tol(&a));
        assert_eq!(pruned.nrows(), 3);
        let p1 = row_space_projector(&a);
        let p2 = row_space_projector(&pruned);
        let diff = (&p1 - &p2).mapv(f64::abs).iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(diff < 1e-8, "projector mismatch {diff:.2e}");
    }

    #[test]
    fn zero_rows_matrix() {
        let a = Array2::<f64>::zeros((4, 3));
        let pruned = prune_redundant_rows(&a, 1e-10);
        assert_eq!(pruned.nrows(), 0);
        let empty = Array2::<f64>::zeros((0, 3));
        let pruned = prune_redundant_rows(&empty, 1e-10);
        assert_eq!(pruned.nrows(), 0);
    }
}
