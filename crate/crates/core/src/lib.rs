//! Mixed-precision exponential time integration.
//!
//! The crate provides:
//!
//! * [`precision`] — bit-accurate emulation of reduced floating-point
//!   formats (fp32, TF32, fp16, bfloat16) on binary64 storage;
//! * [`sparsemat`] — CSR matrices with full- and chopped-precision
//!   matrix-vector products, Matrix Market ingestion, and the Poisson test
//!   matrix generators;
//! * [`phikrylov`] — evaluation of linear combinations of phi-functions via
//!   an augmented-operator Krylov method with incomplete orthogonalization,
//!   adaptive substepping, and a precision schedule for the products;
//! * [`integrators`] — the exponential Rosenbrock–Euler method, its
//!   reformulated gamma-parameterized variant, and work/error accounting;
//! * [`problems`] — the advection-diffusion-reaction test problem.

pub mod integrators;
pub mod phikrylov;
pub mod precision;
pub mod problems;
pub mod sparsemat;

pub use precision::{round_to, round_vec, FloatFormat};
pub use sparsemat::{CsrMatrix, MatvecCounters};
