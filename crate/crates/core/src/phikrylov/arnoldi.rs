//! Incomplete-orthogonalization Arnoldi on the augmented phi-function
//! operator, with a precision schedule for the matrix-vector products.

use nalgebra::DMatrix;

use crate::precision::{round_to, round_vec, FloatFormat};
use crate::sparsemat::{ChopMode, CsrMatrix, MatvecCounters};

use super::KrylovError;

/// Relative happy-breakdown threshold: the Arnoldi residual norm is
/// compared against `HAPPY_TOL * beta`.
pub const HAPPY_TOL: f64 = 1e-12;

/// Sentinel for "never chop" thresholds.
pub const NEVER: usize = usize::MAX;

/// Which precision each Arnoldi product uses.
///
/// Iterate `j` (1-based, producing basis vector `j+1`) runs in working
/// precision while `j + 1 <= m_chop1`, in `fmt1` while
/// `m_chop1 < j + 1 <= m_chop2`, and in `fmt2` beyond. `m_chop1 = m_chop2 = 0`
/// chops every product to `fmt2` (the naive all-low-precision algorithm);
/// `m_chop1 = m_chop2 = NEVER` keeps everything in working precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionSchedule {
    pub m_chop1: usize,
    pub m_chop2: usize,
    pub fmt1: FloatFormat,
    pub fmt2: FloatFormat,
    pub mode: ChopMode,
}

impl PrecisionSchedule {
    /// All products in working precision.
    pub fn full_precision() -> Self {
        Self {
            m_chop1: NEVER,
            m_chop2: NEVER,
            fmt1: FloatFormat::fp64(),
            fmt2: FloatFormat::fp64(),
            mode: ChopMode::OpLevel,
        }
    }

    /// Every product chopped to `fmt` (naive low-precision Arnoldi).
    pub fn naive(fmt: FloatFormat, mode: ChopMode) -> Self {
        Self {
            m_chop1: 0,
            m_chop2: 0,
            fmt1: fmt,
            fmt2: fmt,
            mode,
        }
    }

    /// Working precision through iterate `m_chop1`, single through
    /// `m_chop2`, then `fmt2` (the scheduled algorithm as run in the
    /// experiments).
    pub fn mixed(m_chop1: usize, m_chop2: usize, fmt2: FloatFormat, mode: ChopMode) -> Self {
        Self {
            m_chop1,
            m_chop2,
            fmt1: FloatFormat::fp32(),
            fmt2,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), KrylovError> {
        if self.m_chop1 > self.m_chop2 {
            return Err(KrylovError::InvalidInput(format!(
                "m_chop1 = {} exceeds m_chop2 = {}",
                self.m_chop1, self.m_chop2
            )));
        }
        Ok(())
    }

    /// Format for iterate `j` (1-based); `None` means working precision.
    pub fn format_for_iterate(&self, j: usize) -> Option<FloatFormat> {
        let probe = j + 1;
        if self.m_chop2 != NEVER && probe > self.m_chop2 {
            Some(self.fmt2)
        } else if self.m_chop1 != NEVER && probe > self.m_chop1 {
            Some(self.fmt1)
        } else {
            None
        }
    }

    /// True when no iterate would ever be chopped.
    pub fn is_full_precision(&self) -> bool {
        (self.m_chop1 == NEVER || self.fmt1.is_identity())
            && (self.m_chop2 == NEVER || self.fmt2.is_identity())
    }
}

/// The (N+p) x (N+p) block operator whose exponential applied to
/// `[b_0; e_p]` yields the phi-function linear combination. The top block
/// maps `w` to `A w[0:N] + B w[N:N+p]` with `B = [b_p, ..., b_1]`; the tail
/// shifts up one slot and zero-fills.
#[derive(Debug, Clone)]
pub struct AugmentedOperator {
    a: CsrMatrix,
    b_cols: Vec<Vec<f64>>,
    n: usize,
}

impl AugmentedOperator {
    pub fn new(a: CsrMatrix, b_cols: Vec<Vec<f64>>) -> Result<Self, KrylovError> {
        if a.n_rows() != a.n_cols() {
            return Err(KrylovError::Dimension(format!(
                "operator must be square, got {}x{}",
                a.n_rows(),
                a.n_cols()
            )));
        }
        let n = a.n_rows();
        if let Some(c) = b_cols.iter().find(|c| c.len() != n) {
            return Err(KrylovError::Dimension(format!(
                "augmentation column has length {}, expected {n}",
                c.len()
            )));
        }
        Ok(Self { a, b_cols, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.b_cols.len()
    }

    pub fn dim(&self) -> usize {
        self.n + self.b_cols.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    /// Copy with matrix and augmentation values rounded to `fmt`, so the
    /// per-product input rounding in [`apply_chopped`](Self::apply_chopped)
    /// is idempotent on the operator data.
    pub fn rounded(&self, fmt: FloatFormat) -> Self {
        Self {
            a: self.a.rounded(fmt),
            b_cols: self.b_cols.iter().map(|c| round_vec(c, fmt)).collect(),
            n: self.n,
        }
    }

    /// Dense copy of the full augmented matrix (tests and diagnostics).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let p = self.p();
        let mut m = DMatrix::zeros(d, d);
        for (i, j, v) in self.a.triplets() {
            m[(i, j)] = v;
        }
        for (q, col) in self.b_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, self.n + q)] = v;
            }
        }
        for q in 0..p.saturating_sub(1) {
            m[(self.n + q, self.n + q + 1)] = 1.0;
        }
        m
    }

    /// `out = Ã w` in working precision.
    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let n = self.n;
        let p = self.p();
        for i in 0..n {
            let (cols, vals) = self.a.row(i);
            let mut acc = 0.0;
            for (&j, &a) in cols.iter().zip(vals) {
                acc += a * w[j];
            }
            for (q, col) in self.b_cols.iter().enumerate() {
                acc += col[i] * w[n + q];
            }
            out[i] = acc;
        }
        for q in 0..p {
            out[n + q] = if q + 1 < p { w[n + q + 1] } else { 0.0 };
        }
    }

    /// Chopped top-block product: `w` is rounded to `fmt` and the combined
    /// `A`/`B` row sums are evaluated at the chosen fidelity. The operator
    /// values must already be rounded (see [`rounded`](Self::rounded)). The
    /// tail shift is exact data movement. Returns true when the top block
    /// contains a non-finite entry.
    pub fn apply_chopped(
        &self,
        w: &[f64],
        out: &mut [f64],
        fmt: FloatFormat,
        mode: ChopMode,
        scratch: &mut Vec<f64>,
    ) -> bool {
        debug_assert_eq!(w.len(), self.dim());
        let n = self.n;
        let p = self.p();
        scratch.clear();
        scratch.extend(w.iter().map(|&x| round_to(x, fmt)));
        let xr = &scratch[..];
        let mut overflow = false;
        for i in 0..n {
            let (cols, vals) = self.a.row(i);
            let acc = match mode {
                ChopMode::OpLevel => {
                    let mut acc = 0.0;
                    for (&j, &a) in cols.iter().zip(vals) {
                        acc = round_to(acc + round_to(a * xr[j], fmt), fmt);
                    }
                    for (q, col) in self.b_cols.iter().enumerate() {
                        acc = round_to(acc + round_to(col[i] * xr[n + q], fmt), fmt);
                    }
                    acc
                }
                ChopMode::IoLevel => {
                    let mut acc = 0.0;
                    for (&j, &a) in cols.iter().zip(vals) {
                        acc += a * xr[j];
                    }
                    for (q, col) in self.b_cols.iter().enumerate() {
                        acc += col[i] * xr[n + q];
                    }
                    round_to(acc, fmt)
                }
            };
            overflow |= !acc.is_finite();
            out[i] = acc;
        }
        for q in 0..p {
            out[n + q] = if q + 1 < p { w[n + q + 1] } else { 0.0 };
        }
        overflow
    }
}

/// Operator bundle for one solve: the exact operator plus pre-rounded
/// copies for the schedule's chop formats.
pub struct ScheduledOperator {
    exact: AugmentedOperator,
    fmt1_op: Option<AugmentedOperator>,
    fmt2_op: Option<AugmentedOperator>,
    schedule: PrecisionSchedule,
}

impl ScheduledOperator {
    pub fn new(op: AugmentedOperator, schedule: PrecisionSchedule) -> Result<Self, KrylovError> {
        schedule.validate()?;
        let fmt1_op = (schedule.m_chop1 != NEVER && !schedule.fmt1.is_identity())
            .then(|| op.rounded(schedule.fmt1));
        let fmt2_op = (schedule.m_chop2 != NEVER && !schedule.fmt2.is_identity())
            .then(|| op.rounded(schedule.fmt2));
        Ok(Self {
            exact: op,
            fmt1_op,
            fmt2_op,
            schedule,
        })
    }

    pub fn exact(&self) -> &AugmentedOperator {
        &self.exact
    }

    pub fn schedule(&self) -> &PrecisionSchedule {
        &self.schedule
    }

    /// Apply the operator for 1-based Arnoldi iterate `j`, counting the
    /// product under the precision actually used. Returns the format name
    /// when the product overflowed.
    fn apply_for_iterate(
        &self,
        j: usize,
        w: &[f64],
        out: &mut [f64],
        counters: &mut MatvecCounters,
        scratch: &mut Vec<f64>,
    ) -> Result<(), &'static str> {
        let fmt = self.schedule.format_for_iterate(j);
        match fmt {
            None => {
                counters.record(&FloatFormat::fp64());
                self.exact.apply(w, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err("double");
                }
                Ok(())
            }
            Some(f) if f.is_identity() => {
                counters.record(&f);
                self.exact.apply(w, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(f.name);
                }
                Ok(())
            }
            Some(f) => {
                counters.record(&f);
                let in_fmt2_range = self.schedule.m_chop2 != NEVER && j + 1 > self.schedule.m_chop2;
                let op = if in_fmt2_range {
                    self.fmt2_op.as_ref().expect("fmt2 operator prepared")
                } else {
                    self.fmt1_op.as_ref().expect("fmt1 operator prepared")
                };
                let overflow = op.apply_chopped(w, out, f, self.schedule.mode, scratch);
                if overflow {
                    Err(f.name)
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Krylov basis under construction. `v` holds the built columns (each of
/// length N+p), `h` the Hessenberg band, `j` the number of completed
/// Arnoldi iterations.
pub struct KrylovWorkspace {
    pub v: Vec<Vec<f64>>,
    pub h: DMatrix<f64>,
    pub j: usize,
    pub beta: f64,
    pub happy: bool,
}

impl KrylovWorkspace {
    /// Start a basis from `w0`; returns `None` when `w0` is numerically zero.
    pub fn new(w0: &[f64], m_max: usize) -> Option<Self> {
        let beta = norm2(w0);
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        let v0: Vec<f64> = w0.iter().map(|&x| x / beta).collect();
        Some(Self {
            v: vec![v0],
            h: DMatrix::zeros(m_max + 1, m_max),
            j: 0,
            beta,
            happy: false,
        })
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Extend the basis to `m` vectors (or until happy breakdown) with
/// incomplete orthogonalization of depth 2: each new vector is
/// orthogonalized against the previous two only. The top-block product of
/// iterate `j` runs at the precision the schedule assigns; orthogonalization
/// and the Hessenberg entries stay in working precision.
pub fn iop_arnoldi(
    ops: &ScheduledOperator,
    ws: &mut KrylovWorkspace,
    m: usize,
    counters: &mut MatvecCounters,
) -> Result<(), KrylovError> {
    assert!(m <= ws.h.ncols(), "basis size exceeds workspace allocation");
    let dim = ops.exact.dim();
    let mut scratch = Vec::with_capacity(dim);
    let mut w = vec![0f64; dim];
    while ws.j < m && !ws.happy {
        let j = ws.j + 1; // 1-based iterate, producing basis vector j+1
        ops.apply_for_iterate(j, &ws.v[j - 1], &mut w, counters, &mut scratch)
            .map_err(|format| KrylovError::Overflow {
                format,
                iterate: j,
            })?;
        for i in j.saturating_sub(2)..j {
            let hij = dot(&ws.v[i], &w);
            ws.h[(i, j - 1)] = hij;
            for (wk, vk) in w.iter_mut().zip(&ws.v[i]) {
                *wk -= hij * vk;
            }
        }
        let s = norm2(&w);
        ws.j = j;
        if s < HAPPY_TOL * ws.beta {
            ws.happy = true;
            break;
        }
        ws.h[(j, j - 1)] = s;
        ws.v.push(w.iter().map(|&x| x / s).collect());
    }
    Ok(())
}
