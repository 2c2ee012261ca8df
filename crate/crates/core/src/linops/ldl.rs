//! Dense symmetric-indefinite LDLᵀ factorization with Bunch–Kaufman partial
//! pivoting (1×1 and 2×2 pivot blocks), suitable for both SPD matrices and
//! saddle-point KKT systems.

use super::LinopError;
use ndarray::{Array1, Array2, ArrayView1};

/// Pivot coding: `OneByOne(kp)` means rows/cols `k` and `kp` were swapped
/// before a 1×1 elimination at `k`; `TwoByTwo(kp)` (stored at both positions
/// of the pair) means rows/cols `k+1` and `kp` were swapped before a 2×2
/// elimination at `(k, k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    OneByOne(usize),
    TwoByTwo(usize),
}

/// Cached LDLᵀ factorization `P A Pᵀ = L D Lᵀ` of a dense symmetric matrix.
pub struct LdlFactor {
    /// Lower triangle holds L (unit diagonal implicit) and D blocks.
    factors: Array2<f64>,
    pivots: Vec<Pivot>,
    n: usize,
}

const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

impl LdlFactor {
    /// Factor a symmetric matrix. Only the lower triangle is read.
    pub fn new(matrix: &Array2<f64>) -> Result<Self, LinopError> {
        let n = matrix.nrows();
        assert_eq!(n, matrix.ncols(), "matrix must be square");
        let mut a = matrix.clone();
        let mut pivots = vec![Pivot::OneByOne(0); n];

        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                scale = scale.max(a[[i, j]].abs());
            }
        }
        let pivot_tol = 1e-13 * scale.max(1.0);

        let mut k = 0;
        while k < n {
            let absakk = a[[k, k]].abs();
            let (imax, colmax) = if k + 1 < n {
                let mut best = k + 1;
                let mut val = a[[k + 1, k]].abs();
                for i in k + 2..n {
                    let v = a[[i, k]].abs();
                    if v > val {
                        val = v;
                        best = i;
                    }
                }
                (best, val)
            } else {
                (k, 0.0)
            };

            if absakk.max(colmax) <= pivot_tol {
                return Err(LinopError::SingularMatrix {
                    index: k,
                    pivot: absakk.max(colmax),
                });
            }

            let mut kstep = 1;
            let kp;
            if absakk >= ALPHA * colmax {
                kp = k;
            } else {
                // Largest off-diagonal magnitude in row/column imax of the
                // trailing block.
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[[imax, j]].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[[i, imax]].abs());
                }
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    kp = k;
                } else if a[[imax, imax]].abs() >= ALPHA * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    kstep = 2;
                }
            }

            let kk = if kstep == 2 { k + 1 } else { k };
            if kp != kk {
                // Symmetric interchange of rows/cols kk and kp within the
                // trailing submatrix.
                for i in kp + 1..n {
                    a.swap([i, kk], [i, kp]);
                }
                for j in kk + 1..kp {
                    a.swap([j, kk], [kp, j]);
                }
                a.swap([kk, kk], [kp, kp]);
                if kstep == 2 {
                    a.swap([k + 1, k], [kp, k]);
                }
            }

            if kstep == 1 {
                let d = a[[k, k]];
                if d.abs() <= pivot_tol {
                    return Err(LinopError::SingularMatrix { index: k, pivot: d.abs() });
                }
                for j in k + 1..n {
                    let f = a[[j, k]] / d;
                    if f != 0.0 {
                        for i in j..n {
                            a[[i, j]] -= a[[i, k]] * f;
                        }
                    }
                }
                for i in k + 1..n {
                    a[[i, k]] /= d;
                }
                pivots[k] = Pivot::OneByOne(kp);
                k += 1;
            } else {
                let d21 = a[[k + 1, k]];
                let d11 = a[[k + 1, k + 1]] / d21;
                let d22 = a[[k, k]] / d21;
                let t = d11 * d22 - 1.0;
                if t.abs() * d21.abs() <= pivot_tol {
                    return Err(LinopError::SingularMatrix {
                        index: k,
                        pivot: (t * d21).abs(),
                    });
                }
                let d21inv = (1.0 / t) / d21;
                for j in k + 2..n {
                    let wk = d21inv * (d11 * a[[j, k]] - a[[j, k + 1]]);
                    let wkp1 = d21inv * (d22 * a[[j, k + 1]] - a[[j, k]]);
                    for i in j..n {
                        a[[i, j]] -= a[[i, k]] * wk + a[[i, k + 1]] * wkp1;
                    }
                    a[[j, k]] = wk;
                    a[[j, k + 1]] = wkp1;
                }
                pivots[k] = Pivot::TwoByTwo(kp);
                pivots[k + 1] = Pivot::TwoByTwo(kp);
                k += 2;
            }
        }

        Ok(Self { factors: a, pivots, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` using the cached factorization.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let mut x = b.to_owned();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut Array1<f64>) {
        let n = self.n;
        let a = &self.factors;

        // Forward: apply interleaved permutations, L⁻¹, and D⁻¹.
        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::OneByOne(kp) => {
                    if kp != k {
                        b.swap(k, kp);
                    }
                    let bk = b[k];
                    if bk != 0.0 {
                        for i in k + 1..n {
                            b[i] -= a[[i, k]] * bk;
                        }
                    }
                    b[k] /= a[[k, k]];
                    k += 1;
                }
                Pivot::TwoByTwo(kp) => {
                    if kp != k + 1 {
                        b.swap(k + 1, kp);
                    }
                    let (bk, bk1) = (b[k], b[k + 1]);
                    for i in k + 2..n {
                        b[i] -= a[[i, k]] * bk + a[[i, k + 1]] * bk1;
                    }
                    let akk = a[[k, k]];
                    let a21 = a[[k + 1, k]];
                    let a22 = a[[k + 1, k + 1]];
                    let det = akk * a22 - a21 * a21;
                    b[k] = (a22 * bk - a21 * bk1) / det;
                    b[k + 1] = (akk * bk1 - a21 * bk) / det;
                    k += 2;
                }
            }
        }

        // Backward: apply L⁻ᵀ and reverse the permutations.
        let mut k = n;
        while k > 0 {
            let kk = k - 1;
            match self.pivots[kk] {
                Pivot::OneByOne(kp) => {
                    let mut acc = b[kk];
                    for i in k..n {
                        acc -= a[[i, kk]] * b[i];
                    }
                    b[kk] = acc;
                    if kp != kk {
                        b.swap(kk, kp);
                    }
                    k -= 1;
                }
                Pivot::TwoByTwo(kp) => {
                    // Pair is (kk-1, kk); interchange was at the higher index.
                    let mut acc1 = b[kk - 1];
                    let mut acc2 = b[kk];
                    for i in k..n {
                        acc1 -= a[[i, kk - 1]] * b[i];
                        acc2 -= a[[i, kk]] * b[i];
                    }
                    b[kk - 1] = acc1;
                    b[kk] = acc2;
                    if kp != kk {
                        b.swap(kk, kp);
                    }
                    k -= 2;
                }
            }
        }
    }
}
