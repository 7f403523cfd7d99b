//! Compressed sparse row matrices in working precision, with full- and
//! chopped-precision matrix-vector products and per-format product counters.

mod fetch;
mod gallery;
mod market;

pub use fetch::{fetch_suitesparse, fetch_suitesparse_path, FetchError};
pub use gallery::{poisson2d, poisson_rhs};
pub use market::{read_matrix_market, write_matrix_market, MarketError};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::precision::{round_to, round_vec, FloatFormat};

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
}

/// Fidelity of a chopped matrix-vector product.
///
/// `OpLevel` rounds every elementary multiply and running-sum addition into
/// the target format; `IoLevel` rounds only the operands and the final
/// entry, accumulating in working precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChopMode {
    OpLevel,
    IoLevel,
}

impl fmt::Display for ChopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChopMode::OpLevel => write!(f, "op"),
            ChopMode::IoLevel => write!(f, "io"),
        }
    }
}

/// Count of full matrix-vector products performed at each precision,
/// keyed by format name. One solve context owns one counter set.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct MatvecCounters {
    counts: BTreeMap<&'static str, u64>,
}

impl MatvecCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one full matrix-vector product at `fmt`.
    pub fn record(&mut self, fmt: &FloatFormat) {
        *self.counts.entry(fmt.name).or_insert(0) += 1;
    }

    pub fn count(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Per-format counts in deterministic (alphabetical) order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn merge(&mut self, other: &MatvecCounters) {
        for (name, n) in other.iter() {
            *self.counts.entry(name).or_insert(0) += n;
        }
    }
}

/// Result of a chopped matrix-vector product. `overflowed` is set when the
/// output contains a non-finite entry; the entries are returned as-is.
#[derive(Debug, Clone)]
pub struct ChoppedProduct {
    pub y: Vec<f64>,
    pub overflowed: bool,
}

/// Compressed sparse row matrix with working-precision (binary64) values.
///
/// Invariants enforced at construction: `row_ptr` is nondecreasing with
/// `row_ptr[0] == 0` and `row_ptr[n_rows] == nnz`; column indices are in
/// range and strictly increasing within each row (hence no duplicates).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if row_ptr.len() != n_rows + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "row_ptr length {} != n_rows + 1 = {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != values.len() || col_idx.len() != values.len() {
            return Err(SparseError::InvalidStructure(
                "row_ptr endpoints must be 0 and nnz".into(),
            ));
        }
        for i in 0..n_rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(SparseError::InvalidStructure(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (k, &j) in row.iter().enumerate() {
                if j >= n_cols {
                    return Err(SparseError::InvalidStructure(format!(
                        "column index {j} out of range in row {i}"
                    )));
                }
                if k > 0 && row[k - 1] >= j {
                    return Err(SparseError::InvalidStructure(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Build from (row, col, value) triplets; duplicates are summed and
    /// rows come out sorted.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(SparseError::InvalidStructure(format!(
                    "triplet ({r}, {c}) out of range for {n_rows}x{n_cols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (r, c, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == r && sorted[k].1 == c {
                v += sorted[k].2;
                k += 1;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Matrix with no stored entries.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Same sparsity pattern with transformed values.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Copy with every stored value rounded to `fmt`.
    pub fn rounded(&self, fmt: FloatFormat) -> Self {
        if fmt.is_identity() {
            return self.clone();
        }
        Self {
            values: round_vec(&self.values, fmt),
            ..self.clone()
        }
    }

    /// Copy scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.map_values(|v| factor * v)
    }

    pub fn transpose(&self) -> Self {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            row_ptr[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            row_ptr[j + 1] += row_ptr[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        let mut next = row_ptr.clone();
        for (i, j, v) in self.triplets() {
            let slot = next[j];
            col_idx[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn infinity_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }

    /// Dense copy, for small-matrix oracles and diagnostics.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// y = A x in working precision. Accumulation is left-to-right within
    /// each row so results are reproducible across runs.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch(format!(
                "matvec: x has length {}, matrix has {} columns",
                x.len(),
                self.n_cols
            )));
        }
        let mut y = vec![0f64; self.n_rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `matvec` into a caller-provided buffer (no dimension check).
    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &a) in cols.iter().zip(vals) {
                acc += a * x[j];
            }
            y[i] = acc;
        }
    }

    /// Chopped product: entries of `A` and `x` are rounded to `fmt`, then the
    /// product is evaluated at the fidelity selected by `mode`. Increments
    /// `counters[fmt]`. Non-finite results are returned as-is with the
    /// overflow flag set.
    pub fn matvec_chopped(
        &self,
        x: &[f64],
        fmt: FloatFormat,
        mode: ChopMode,
        counters: &mut MatvecCounters,
    ) -> Result<ChoppedProduct, SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch(format!(
                "matvec_chopped: x has length {}, matrix has {} columns",
                x.len(),
                self.n_cols
            )));
        }
        counters.record(&fmt);
        let xr = round_vec(x, fmt);
        let ar = self.rounded(fmt);
        let mut y = vec![0f64; self.n_rows];
        let mut overflowed = false;
        for i in 0..self.n_rows {
            let (cols, vals) = ar.row(i);
            let acc = match mode {
                ChopMode::OpLevel => {
                    let mut acc = 0.0;
                    for (&j, &a) in cols.iter().zip(vals) {
                        let p = round_to(a * xr[j], fmt);
                        acc = round_to(acc + p, fmt);
                    }
                    acc
                }
                ChopMode::IoLevel => {
                    let mut acc = 0.0;
                    for (&j, &a) in cols.iter().zip(vals) {
                        acc += a * xr[j];
                    }
                    round_to(acc, fmt)
                }
            };
            overflowed |= !acc.is_finite();
            y[i] = acc;
        }
        Ok(ChoppedProduct { y, overflowed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_csr(n: usize, density: f64, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.gen::<f64>() < density {
                    triplets.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    #[test]
    fn matvec_identity() {
        let a = CsrMatrix::identity(3);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_poisson_row_sums() {
        let a = poisson2d(2, 1.0, 1);
        assert_eq!(a.matvec(&[1.0; 4]).unwrap(), vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        assert!(a.matvec(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn matvec_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_csr(10, 0.4, &mut rng);
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = a.matvec(&x).unwrap();
            let dense = a.to_dense();
            for i in 0..10 {
                let mut acc = 0.0;
                for j in 0..10 {
                    acc += dense[(i, j)] * x[j];
                }
                assert!((y[i] - acc).abs() <= 1e-14 * (1.0 + acc.abs()));
            }
        }
    }

    #[test]
    fn chopped_fp64_is_exact_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_csr(12, 0.5, &mut rng);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y = a.matvec(&x).unwrap();
        let fp64 = FloatFormat::fp64();
        for mode in [ChopMode::OpLevel, ChopMode::IoLevel] {
            let mut counters = MatvecCounters::new();
            let r = a.matvec_chopped(&x, fp64, mode, &mut counters).unwrap();
            assert!(!r.overflowed);
            assert_eq!(counters.count("double"), 1);
            for (a, b) in r.y.iter().zip(&y) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn chopped_io_level_identity_matrix() {
        let a = CsrMatrix::identity(3);
        let mut counters = MatvecCounters::new();
        let r = a
            .matvec_chopped(
                &[0.1, 0.1, 0.1],
                FloatFormat::fp32(),
                ChopMode::IoLevel,
                &mut counters,
            )
            .unwrap();
        let expected = 0.1f32 as f64;
        assert_eq!(r.y, vec![expected; 3]);
    }

    #[test]
    fn chopped_overflow_flagged() {
        let a = CsrMatrix::from_triplets(1, 2, &[(0, 0, 65504.0), (0, 1, 65504.0)]).unwrap();
        let mut counters = MatvecCounters::new();
        let r = a
            .matvec_chopped(
                &[1.0, 1.0],
                FloatFormat::fp16(),
                ChopMode::OpLevel,
                &mut counters,
            )
            .unwrap();
        assert!(r.overflowed);
        assert_eq!(r.y[0], f64::INFINITY);
        assert_eq!(counters.count("half"), 1);
    }

    #[test]
    fn chopped_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for fmt in [FloatFormat::fp32(), FloatFormat::fp16(), FloatFormat::bf16()] {
            for mode in [ChopMode::OpLevel, ChopMode::IoLevel] {
                let a = random_csr(20, 0.3, &mut rng);
                let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let exact = a.matvec(&x).unwrap();
                let mut counters = MatvecCounters::new();
                let chopped = a.matvec_chopped(&x, fmt, mode, &mut counters).unwrap();
                let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let bound =
                    4.0 * fmt.epsilon() * a.infinity_norm() * xn * a.max_row_nnz() as f64;
                for (c, e) in chopped.y.iter().zip(&exact) {
                    assert!(
                        (c - e).abs() <= bound,
                        "{} {mode}: |{c} - {e}| > {bound}",
                        fmt.name
                    );
                }
            }
        }
    }

    #[test]
    fn counters_accumulate_and_merge() {
        let mut a = MatvecCounters::new();
        a.record(&FloatFormat::fp32());
        a.record(&FloatFormat::fp32());
        a.record(&FloatFormat::fp16());
        let mut b = MatvecCounters::new();
        b.record(&FloatFormat::fp64());
        b.merge(&a);
        assert_eq!(b.count("single"), 2);
        assert_eq!(b.count("half"), 1);
        assert_eq!(b.count("double"), 1);
        assert_eq!(b.total(), 4);
        assert_eq!(b.count("tf32"), 0);
    }

    #[test]
    fn from_triplets_sums_duplicates() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0), (0, 1, 3.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.row(0), (&[1usize][..], &[5.0][..]));
        assert_eq!(a.row(1), (&[0usize][..], &[-1.0][..]));
    }

    #[test]
    fn invalid_structure_rejected() {
        assert!(CsrMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 2.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![0, 0], vec![1.0, 2.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![5], vec![1.0]).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_csr(9, 0.3, &mut rng);
        let att = a.transpose().transpose();
        assert_eq!(a, att);
        assert_eq!(a.to_dense().transpose(), a.transpose().to_dense());
    }
}
