//! Linear combinations of phi-functions applied to vectors,
//! `u = sum_k t^k phi_k(tA) b_k`, via an augmented-operator Krylov method
//! with incomplete orthogonalization, adaptive substepping, and a precision
//! schedule for the matrix-vector products.
//!
//! `t` is folded into the operator (`A <- tA`, `b_k <- t^k b_k`) and the
//! augmented state is advanced over substeps `tau` accumulating to 1. Each
//! substep builds an IOP Arnoldi basis of fixed size, evaluates the small
//! exponential of the error-augmented Hessenberg, and accepts or rejects
//! the step from the classical two-term remainder estimate. The local error
//! budget is taken relative to the norm of the current augmented state, so
//! the requested tolerance controls relative accuracy of the result.

mod arnoldi;
mod expm;
mod phi;

pub use arnoldi::{
    iop_arnoldi, norm2, AugmentedOperator, KrylovWorkspace, PrecisionSchedule,
    ScheduledOperator, HAPPY_TOL, NEVER,
};
pub use expm::dense_expm;
pub use phi::{phi1_scalar, phi_scalar};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::sparsemat::{CsrMatrix, MatvecCounters, SparseError};

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("overflow at {format} precision during Arnoldi iterate {iterate}")]
    Overflow {
        format: &'static str,
        iterate: usize,
    },
    #[error(
        "Krylov solve did not converge: {substeps} substeps and {rejections} rejections, \
         local error estimate {achieved:e} at step size {dt:e}"
    )]
    Convergence {
        substeps: u64,
        rejections: u64,
        achieved: f64,
        dt: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Solver parameters for [`phi_combination`].
#[derive(Debug, Clone)]
pub struct PhiParams {
    /// Local error tolerance per unit of the (normalized) integration
    /// interval, relative to the substep vector norm.
    pub tol: f64,
    /// Krylov basis size per substep; fixed for the whole solve.
    pub m: usize,
    /// Precision schedule for the Arnoldi products.
    pub schedule: PrecisionSchedule,
}

impl PhiParams {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            m: DEFAULT_BASIS_SIZE,
            schedule: PrecisionSchedule::full_precision(),
        }
    }

    pub fn with_basis_size(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_schedule(mut self, schedule: PrecisionSchedule) -> Self {
        self.schedule = schedule;
        self
    }
}

/// Default (and maximum, per the experiment setup) Krylov basis size.
pub const DEFAULT_BASIS_SIZE: usize = 128;

const MAX_ATTEMPTS: u64 = 100_000;
const MIN_SUBSTEP: f64 = 1e-14;

/// Result of a phi-combination solve.
#[derive(Debug, Clone)]
pub struct KrylovResult {
    /// The combination value (length N).
    pub w: Vec<f64>,
    /// Arnoldi products per precision, over all substeps and rejections.
    pub counters: MatvecCounters,
    /// Accepted substeps.
    pub substeps: u64,
    /// Rejected substeps.
    pub rejections: u64,
    /// Basis size of the last accepted substep.
    pub final_m: usize,
    /// Largest accepted local error estimate.
    pub err_estimate: f64,
}

/// Local truncation error of one substep from the exponential of the
/// error-augmented Hessenberg: with `f = expm(dt * Hbar)` of size `m + 2`,
/// the first remainder term is `beta * |f[m, 0]|` and the second
/// `beta * |f[m+1, 0]| * ||A v_{m+1}||`; the classical three-case rule picks
/// between them.
pub fn krylov_error_estimate(f: &DMatrix<f64>, beta: f64, av_next_norm: f64, m: usize) -> f64 {
    let err1 = (beta * f[(m, 0)]).abs();
    let err2 = (beta * f[(m + 1, 0)]).abs() * av_next_norm;
    if err1 > 10.0 * err2 {
        err2
    } else if err1 > err2 {
        (err1 * err2) / (err1 - err2)
    } else {
        err1
    }
}

/// Error-augmented Hessenberg of size `m + 2`: the leading m x m block of
/// `h`, the subdiagonal residual norm at `(m, m-1)`, and a 1 at
/// `(m+1, m)` so that the first column of its exponential carries the two
/// remainder terms used by [`krylov_error_estimate`].
fn build_hbar(h: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let mut hbar = DMatrix::zeros(m + 2, m + 2);
    for j in 0..m {
        for i in 0..=(j + 1).min(m - 1) {
            hbar[(i, j)] = h[(i, j)];
        }
    }
    if m >= 1 {
        hbar[(m, m - 1)] = h[(m, m - 1)];
    }
    hbar[(m + 1, m)] = 1.0;
    hbar
}

/// Compute `u = sum_{k=0}^{p} t^k phi_k(tA) b_k`.
///
/// `b` holds the p+1 vectors `b_0..b_p`, each of length N. `t = 0`
/// short-circuits to `b_0`. Chopped products follow `params.schedule`; a
/// non-finite product aborts with an overflow diagnosis naming the
/// precision. If the step controller cannot meet the tolerance the solve
/// fails carrying the achieved error estimate.
pub fn phi_combination(
    t: f64,
    a: &CsrMatrix,
    b: &[Vec<f64>],
    params: &PhiParams,
) -> Result<KrylovResult, KrylovError> {
    if a.n_rows() != a.n_cols() {
        return Err(KrylovError::Dimension(format!(
            "operator must be square, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let n = a.n_rows();
    if b.is_empty() {
        return Err(KrylovError::InvalidInput("need at least b_0".into()));
    }
    if let Some(bad) = b.iter().find(|v| v.len() != n) {
        return Err(KrylovError::Dimension(format!(
            "b vector has length {}, expected {n}",
            bad.len()
        )));
    }
    if !(params.tol > 0.0) {
        return Err(KrylovError::InvalidInput("tol must be positive".into()));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(KrylovError::InvalidInput(format!(
            "t must be finite and nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(KrylovResult {
            w: b[0].clone(),
            counters: MatvecCounters::new(),
            substeps: 0,
            rejections: 0,
            final_m: 0,
            err_estimate: 0.0,
        });
    }

    let p = b.len() - 1;
    // Fold t into the operator and augmentation: A <- tA, b_k <- t^k b_k,
    // with B = [b_p, ..., b_1].
    let a_scaled = a.scaled(t);
    let b_cols: Vec<Vec<f64>> = (0..p)
        .map(|q| {
            let k = p - q;
            let tk = t.powi(k as i32);
            b[k].iter().map(|&x| tk * x).collect()
        })
        .collect();
    let op = AugmentedOperator::new(a_scaled, b_cols)?;
    let dim = op.dim();
    let ops = ScheduledOperator::new(op, params.schedule)?;
    let m_target = params.m.max(1).min(dim);

    let mut u = b[0].clone();
    let mut counters = MatvecCounters::new();
    if p == 0 && norm2(&u) == 0.0 {
        return Ok(KrylovResult {
            w: u,
            counters,
            substeps: 0,
            rejections: 0,
            final_m: 0,
            err_estimate: 0.0,
        });
    }

    let mut tau = 0.0f64;
    let mut dt = 1.0f64;
    let mut substeps = 0u64;
    let mut rejections = 0u64;
    let mut final_m = 0usize;
    let mut max_err = 0.0f64;
    let mut aug = vec![0f64; dim];
    let mut scratch = vec![0f64; dim];

    while tau < 1.0 {
        if substeps + rejections >= MAX_ATTEMPTS {
            return Err(KrylovError::Convergence {
                substeps,
                rejections,
                achieved: max_err,
                dt,
            });
        }
        dt = dt.min(1.0 - tau);
        // augmented state: [u ; tail(tau)] with tail_i = tau^(p-i)/(p-i)!
        aug[..n].copy_from_slice(&u);
        for q in 0..p {
            aug[n + q] = tau_power(tau, p - 1 - q);
        }
        let Some(mut ws) = KrylovWorkspace::new(&aug, m_target) else {
            // zero state evolves to zero
            tau += dt;
            substeps += 1;
            continue;
        };
        iop_arnoldi(&ops, &mut ws, m_target, &mut counters)?;
        let m_used = ws.j;
        let hbar = build_hbar(&ws.h, m_used);
        let f = dense_expm(&(&hbar * dt))?;
        let err_loc = if ws.happy {
            0.0
        } else {
            // one auxiliary working-precision product for the second
            // remainder term; not an Arnoldi product, so not counted
            ops.exact().apply(&ws.v[m_used], &mut scratch);
            krylov_error_estimate(&f, ws.beta, norm2(&scratch), m_used)
        };
        let budget = 1.2 * dt * params.tol * ws.beta;
        let accepted = err_loc <= budget;
        if accepted {
            for (i, ui) in u.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, vk) in ws.v.iter().take(m_used).enumerate() {
                    acc += f[(k, 0)] * vk[i];
                }
                *ui = ws.beta * acc;
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(KrylovError::NonFinite);
            }
            tau += dt;
            substeps += 1;
            final_m = m_used;
            max_err = max_err.max(err_loc);
        } else {
            rejections += 1;
        }
        // step-size update, also applied after an accepted step
        let proposal = if err_loc == 0.0 {
            5.0 * dt
        } else {
            0.9 * dt * (dt * params.tol * ws.beta / err_loc).powf(1.0 / m_used as f64)
        };
        dt = proposal.clamp(dt / 5.0, 5.0 * dt);
        if !accepted && dt < MIN_SUBSTEP {
            return Err(KrylovError::Convergence {
                substeps,
                rejections,
                achieved: err_loc,
                dt,
            });
        }
    }

    Ok(KrylovResult {
        w: u,
        counters,
        substeps,
        rejections,
        final_m,
        err_estimate: max_err,
    })
}

/// tau^k / k! with the tau = k = 0 case equal to 1.
fn tau_power(tau: f64, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 1..=k {
        acc *= tau / i as f64;
    }
    acc
}
