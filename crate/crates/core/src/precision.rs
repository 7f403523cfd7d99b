//! Reduced-precision floating-point emulation on top of binary64 storage.
//!
//! Every value is held as an `f64`; [`round_to`] projects it onto the set of
//! values representable in a narrower format (round-to-nearest, ties to
//! even), so low-precision arithmetic can be simulated operation by
//! operation while all storage stays in working precision.

use std::fmt;

/// Rounding mode of a [`FloatFormat`]. Only round-to-nearest-even is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    NearestEven,
}

/// Description of a binary floating-point format.
///
/// `significand_bits` counts the full significand including the implicit
/// leading bit, so IEEE binary32 is `(24, 8)` and binary16 is `(11, 5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloatFormat {
    pub name: &'static str,
    pub significand_bits: u32,
    pub exponent_bits: u32,
    pub supports_subnormals: bool,
    pub rounding: Rounding,
    // Derived constants kept on the struct so the per-operation rounding
    // path is branch-and-mask only.
    shift: u32,
    max_finite: f64,
    min_normal: f64,
    sub_ulp: f64,
}

impl FloatFormat {
    /// Build a format from its bit widths. Panics if the widths fall outside
    /// what binary64 storage can emulate (2..=53 significand, 2..=11
    /// exponent bits).
    pub fn new(
        name: &'static str,
        significand_bits: u32,
        exponent_bits: u32,
        supports_subnormals: bool,
    ) -> Self {
        assert!(
            (2..=53).contains(&significand_bits),
            "significand_bits must be in 2..=53"
        );
        assert!(
            (2..=11).contains(&exponent_bits),
            "exponent_bits must be in 2..=11"
        );
        let emax = (1i32 << (exponent_bits - 1)) - 1;
        let emin = 1 - emax;
        let max_finite = (2.0 - exp2i(1 - significand_bits as i32)) * exp2i(emax);
        Self {
            name,
            significand_bits,
            exponent_bits,
            supports_subnormals,
            rounding: Rounding::NearestEven,
            shift: 53 - significand_bits,
            max_finite,
            min_normal: exp2i(emin),
            sub_ulp: exp2i(emin + 1 - significand_bits as i32),
        }
    }

    /// IEEE binary64; [`round_to`] is the identity for this format.
    pub fn fp64() -> Self {
        Self::new("double", 53, 11, true)
    }

    /// IEEE binary32.
    pub fn fp32() -> Self {
        Self::new("single", 24, 8, true)
    }

    /// NVIDIA TensorFloat-32: binary32 range with an 11-bit significand and
    /// no subnormal support (the tensor-core mode flushes them).
    pub fn tf32() -> Self {
        Self::new("tf32", 11, 8, false)
    }

    /// IEEE binary16.
    pub fn fp16() -> Self {
        Self::new("half", 11, 5, true)
    }

    /// bfloat16: binary32 range, 8-bit significand.
    pub fn bf16() -> Self {
        Self::new("bfloat16", 8, 8, true)
    }

    /// Look a preset up by the spelling used in experiment output
    /// ("double", "single", "tf32", "half", "bfloat16").
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "double" => Some(Self::fp64()),
            "single" => Some(Self::fp32()),
            "tf32" => Some(Self::tf32()),
            "half" => Some(Self::fp16()),
            "bfloat16" => Some(Self::bf16()),
            _ => None,
        }
    }

    /// All five presets, widest first.
    pub fn presets() -> [Self; 5] {
        [
            Self::fp64(),
            Self::fp32(),
            Self::tf32(),
            Self::fp16(),
            Self::bf16(),
        ]
    }

    /// Precision of the error model `lp(x) = (I + delta) x`:
    /// `epsilon = 2^(1 - significand_bits)` (twice the unit roundoff).
    pub fn epsilon(&self) -> f64 {
        exp2i(1 - self.significand_bits as i32)
    }

    /// Largest finite magnitude representable in the format.
    pub fn max_finite(&self) -> f64 {
        self.max_finite
    }

    /// Smallest positive normal magnitude.
    pub fn min_normal(&self) -> f64 {
        self.min_normal
    }

    /// True when rounding to this format never changes an f64.
    pub fn is_identity(&self) -> bool {
        self.significand_bits == 53 && self.exponent_bits == 11
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// 2^k as f64, exact for the exponent range used by the formats here.
fn exp2i(k: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&k));
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        // subnormal powers of two
        f64::from_bits(1u64 << (k + 1074))
    }
}

/// Round a working-precision value to the nearest value representable in
/// `fmt` (ties to even), returned in working precision. Magnitudes beyond
/// the format's largest finite value become infinities; results below the
/// normal range are rounded on the subnormal grid or flushed to zero when
/// the format has no subnormals. NaN and infinities pass through.
#[inline]
pub fn round_to(x: f64, fmt: FloatFormat) -> f64 {
    if fmt.is_identity() || x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs();
    if mag >= fmt.min_normal {
        let shift = fmt.shift;
        let bits = mag.to_bits();
        let lsb = (bits >> shift) & 1;
        let mask = (1u64 << shift) - 1;
        let rounded = f64::from_bits((bits + (mask >> 1) + lsb) & !mask);
        if rounded > fmt.max_finite {
            return f64::INFINITY.copysign(x);
        }
        rounded.copysign(x)
    } else {
        // Subnormal range of the target format: round on the grid of
        // multiples of its subnormal spacing. The scaling is exact because
        // the quotient is a normal f64 below 2^(significand_bits - 1).
        let r = (mag / fmt.sub_ulp).round_ties_even() * fmt.sub_ulp;
        if !fmt.supports_subnormals && r < fmt.min_normal {
            return 0f64.copysign(x);
        }
        r.copysign(x)
    }
}

/// Elementwise [`round_to`].
pub fn round_vec(v: &[f64], fmt: FloatFormat) -> Vec<f64> {
    v.iter().map(|&x| round_to(x, fmt)).collect()
}

/// In-place elementwise [`round_to`].
pub fn round_vec_inplace(v: &mut [f64], fmt: FloatFormat) {
    for x in v.iter_mut() {
        *x = round_to(*x, fmt);
    }
}

/// Addition rounded into `fmt`. Operands are assumed already representable
/// (callers round inputs first); overflow yields an infinity.
#[inline]
pub fn chopped_add(a: f64, b: f64, fmt: FloatFormat) -> f64 {
    round_to(a + b, fmt)
}

/// Multiplication rounded into `fmt`, same conventions as [`chopped_add`].
#[inline]
pub fn chopped_mul(a: f64, b: f64, fmt: FloatFormat) -> f64 {
    round_to(a * b, fmt)
}
