//! Generators for the Poisson test matrix and right-hand side.

use super::CsrMatrix;

/// The k^2 x k^2 block-tridiagonal 5-point Poisson matrix (diagonal 4,
/// off-diagonals -1 along both grid directions), multiplied by
/// `sign * scale`. Node ordering is column-major over the k x k grid.
///
/// With `sign = +1` this matches MATLAB's `gallery('poisson', k)` scaled by
/// `scale`; that operator is positive definite, so `exp(t*A)` overflows for
/// the experiment scales. `sign = -1` gives the decaying operator the
/// exponential experiments use.
pub fn poisson2d(k: usize, scale: f64, sign: i32) -> CsrMatrix {
    assert!(k >= 1, "poisson2d requires k >= 1");
    assert!(sign == 1 || sign == -1, "sign must be +1 or -1");
    let f = scale * f64::from(sign);
    let n = k * k;
    let nnz_est = 5 * n;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz_est);
    let mut values = Vec::with_capacity(nnz_est);
    row_ptr.push(0);
    for c in 0..k {
        for r in 0..k {
            let idx = c * k + r;
            if c > 0 {
                col_idx.push(idx - k);
                values.push(-f);
            }
            if r > 0 {
                col_idx.push(idx - 1);
                values.push(-f);
            }
            col_idx.push(idx);
            values.push(4.0 * f);
            if r + 1 < k {
                col_idx.push(idx + 1);
                values.push(-f);
            }
            if c + 1 < k {
                col_idx.push(idx + k);
                values.push(-f);
            }
            row_ptr.push(col_idx.len());
        }
    }
    CsrMatrix::new(n, n, row_ptr, col_idx, values).expect("stencil construction is valid")
}

/// Right-hand side for the Poisson experiment:
/// `b = (1 - r1^2) (1 - r2^2) exp(r1)` on the interior grid
/// `g_i = -1 + 2(i+1)/(k+1)`, stacked column-major with `r1` the slow and
/// `r2` the fast coordinate (matching MATLAB `meshgrid` + `(:)`).
pub fn poisson_rhs(k: usize) -> Vec<f64> {
    assert!(k >= 1);
    let g: Vec<f64> = (0..k)
        .map(|i| -1.0 + 2.0 * (i as f64 + 1.0) / (k as f64 + 1.0))
        .collect();
    let mut b = Vec::with_capacity(k * k);
    for &r1 in &g {
        for &r2 in &g {
            b.push((1.0 - r1 * r1) * (1.0 - r2 * r2) * r1.exp());
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_single_point() {
        let a = poisson2d(1, 1.0, 1);
        assert_eq!(a.n_rows(), 1);
        assert_eq!(a.row(0), (&[0usize][..], &[4.0][..]));
    }

    #[test]
    fn poisson_2x2_grid() {
        let a = poisson2d(2, 1.0, 1);
        let expected = [
            [4.0, -1.0, -1.0, 0.0],
            [-1.0, 4.0, 0.0, -1.0],
            [-1.0, 0.0, 4.0, -1.0],
            [0.0, -1.0, -1.0, 4.0],
        ];
        let dense = a.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dense[(i, j)], expected[i][j], "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn poisson_99_scaled_negative() {
        let a = poisson2d(99, 2500.0, -1);
        assert_eq!(a.n_rows(), 9801);
        assert_eq!(a.n_cols(), 9801);
        for i in [0, 50, 4900, 9800] {
            let (cols, vals) = a.row(i);
            let diag = cols
                .iter()
                .zip(vals)
                .find(|(&j, _)| j == i)
                .map(|(_, &v)| v)
                .unwrap();
            assert_eq!(diag, -10000.0);
        }
    }

    #[test]
    fn poisson_symmetric_and_negative_definite() {
        for k in 1..=6 {
            let a = poisson2d(k, 1.5, -1);
            let dense = a.to_dense();
            assert_eq!(dense, dense.transpose());
            let eig = nalgebra::SymmetricEigen::new(dense);
            assert!(
                eig.eigenvalues.iter().all(|&l| l < 0.0),
                "k={k}: expected all eigenvalues negative"
            );
        }
    }

    #[test]
    fn rhs_first_entry_and_length() {
        let b = poisson_rhs(99);
        assert_eq!(b.len(), 9801);
        // g_0 = -0.98: (1 - 0.9604)^2 * exp(-0.98)
        let expected = (1.0 - 0.98f64 * 0.98) * (1.0 - 0.98f64 * 0.98) * (-0.98f64).exp();
        assert!((b[0] - expected).abs() < 1e-15);
        assert!((expected - 5.8855e-4).abs() < 1e-7);
    }

    #[test]
    fn rhs_ordering_is_column_major() {
        let b = poisson_rhs(99);
        let g0: f64 = -0.98;
        let g1: f64 = -1.0 + 2.0 * 2.0 / 100.0; // -0.96
        // entry 1: r1 = g[0] (slow), r2 = g[1] (fast)
        let expected1 = (1.0 - g0 * g0) * (1.0 - g1 * g1) * g0.exp();
        assert!((b[1] - expected1).abs() < 1e-15);
        // entry 99: r1 = g[1], r2 = g[0]
        let expected99 = (1.0 - g1 * g1) * (1.0 - g0 * g0) * g1.exp();
        assert!((b[99] - expected99).abs() < 1e-15);
    }

    #[test]
    fn rhs_all_positive() {
        for k in [1, 5, 40] {
            assert!(poisson_rhs(k).iter().all(|&v| v > 0.0));
        }
    }
}
