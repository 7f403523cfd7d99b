//! Scalar phi-functions: phi_0(z) = exp(z), phi_{k+1}(z) = (phi_k(z) - phi_k(0)) / z.

/// phi_k evaluated at a scalar. Uses the Taylor series for |z| <= 5 and the
/// recurrence from exp(z) beyond, which is cancellation-safe in both
/// regimes (for z << 0 the recurrence subtracts terms of opposite sign).
pub fn phi_scalar(k: usize, z: f64) -> f64 {
    if k == 0 {
        return z.exp();
    }
    if z.abs() <= 5.0 {
        // sum_{j>=0} z^j / (j + k)!
        let mut term = 1.0 / factorial(k);
        let mut acc = term;
        for j in 1..=40u32 {
            term *= z / (k as f64 + f64::from(j));
            acc += term;
            if term.abs() <= f64::EPSILON * acc.abs() {
                break;
            }
        }
        acc
    } else {
        let mut p = z.exp();
        for i in 0..k {
            p = (p - 1.0 / factorial(i)) / z;
        }
        p
    }
}

/// phi_1(z) = (exp(z) - 1)/z by the rule used for the logarithmic-norm
/// gamma estimate: truncated series below |z| = 1e-2, closed form above,
/// and 0 in the deep-stiff limit z < -745 where the estimate degenerates
/// to the standard method anyway.
pub fn phi1_scalar(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        // 1 + z/2 + z^2/6 + ... ; six terms reach 2^-53 at |z| = 1e-2
        let c = [
            1.0,
            1.0 / 2.0,
            1.0 / 6.0,
            1.0 / 24.0,
            1.0 / 120.0,
            1.0 / 720.0,
            1.0 / 5040.0,
        ];
        c.iter().rev().fold(0.0, |acc, &ci| acc * z + ci)
    } else if z < -745.0 {
        0.0
    } else {
        z.exp_m1() / z
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}
