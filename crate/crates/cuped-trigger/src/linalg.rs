//! Minimal dense-matrix helpers for the small symmetric systems solved by
//! the IRLS, OLS, and entropy-balance routines (dimension = #covariates + 1,
//! typically 2..5). Row-major storage throughout.

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data length mismatch");
        DenseMatrix { data, rows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix {
            data,
            rows: rows.len(),
            cols,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Copy the given rows (by index) into `out`, reusing its allocation.
    pub fn gather_rows_into(&self, indices: &[u32], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(indices.len() * self.cols);
        for &i in indices {
            out.extend_from_slice(self.row(i as usize));
        }
    }
}

/// Solve the symmetric positive-definite system `A x = b` in place via
/// Cholesky. `a` is `k x k` row-major (only the lower triangle is read) and
/// is overwritten by the factor; `b` is overwritten by the solution.
///
/// Returns `false` when a pivot falls below `1e-12` times the largest
/// diagonal entry, i.e. the matrix is numerically singular or indefinite.
pub fn cholesky_solve_in_place(a: &mut [f64], b: &mut [f64], k: usize) -> bool {
    debug_assert_eq!(a.len(), k * k);
    debug_assert_eq!(b.len(), k);

    let mut diag_max = 0.0f64;
    for i in 0..k {
        diag_max = diag_max.max(a[i * k + i].abs());
    }
    let pivot_floor = 1e-12 * diag_max.max(f64::MIN_POSITIVE);

    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= a[i * k + p] * a[j * k + p];
            }
            if i == j {
                if !(sum > pivot_floor) {
                    return false;
                }
                a[i * k + i] = sum.sqrt();
            } else {
                a[i * k + j] = sum / a[j * k + j];
            }
        }
    }

    // forward: L y = b
    for i in 0..k {
        let mut sum = b[i];
        for p in 0..i {
            sum -= a[i * k + p] * b[p];
        }
        b[i] = sum / a[i * k + i];
    }
    // backward: L^T x = y
    for i in (0..k).rev() {
        let mut sum = b[i];
        for p in (i + 1)..k {
            sum -= a[p * k + i] * b[p];
        }
        b[i] = sum / a[i * k + i];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2,0],[2,5,1],[0,1,3]], x = [1,-2,3] -> b = A x
        let a = vec![4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let x_true = [1.0, -2.0, 3.0];
        let mut b = vec![
            4.0 * 1.0 + 2.0 * -2.0,
            2.0 * 1.0 + 5.0 * -2.0 + 1.0 * 3.0,
            1.0 * -2.0 + 3.0 * 3.0,
        ];
        let mut a_work = a.clone();
        assert!(cholesky_solve_in_place(&mut a_work, &mut b, 3));
        for (got, want) in b.iter().zip(x_true.iter()) {
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular_matrix() {
        // second row is a copy of the first
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(!cholesky_solve_in_place(&mut a, &mut b, 2));
    }

    #[test]
    fn gather_rows_copies_in_index_order() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let mut out = Vec::new();
        m.gather_rows_into(&[2, 0], &mut out);
        assert_eq!(out, vec![5.0, 6.0, 1.0, 2.0]);
    }
}
