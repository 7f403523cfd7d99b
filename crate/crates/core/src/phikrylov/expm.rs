//! Dense matrix exponential by scaling-and-squaring with a degree-13 Padé
//! approximant (Higham's backward-error-based scaling threshold).

use nalgebra::DMatrix;

use super::KrylovError;

// Degree-13 Padé numerator coefficients.
const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error bound theta_13: ||A|| below this makes the degree-13
// approximant accurate to unit roundoff.
const THETA_13: f64 = 5.371920351148152;

/// exp(M) for a small dense square matrix.
pub fn dense_expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, KrylovError> {
    assert_eq!(m.nrows(), m.ncols(), "dense_expm requires a square matrix");
    if m.iter().any(|v| !v.is_finite()) {
        return Err(KrylovError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = one_norm(m);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let a = m / 2f64.powi(s as i32);

    let eye = DMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let w1 = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let w2 = &w1 * &a6 + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1];
    let u = &a * w2;
    let v1 = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = &v1 * &a6 + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let num = &v + &u;
    let den = &v - &u;
    let mut f = den
        .lu()
        .solve(&num)
        .ok_or_else(|| KrylovError::InvalidInput("singular Pade denominator".into()))?;
    for _ in 0..s {
        f = &f * &f;
    }
    Ok(f)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::zeros(3, 3);
        let e = dense_expm(&z).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0]);
        let e = dense_expm(&d).unwrap();
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_of_nilpotent_terminates() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = dense_expm(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((e - expected).abs().max() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(dense_expm(&m), Err(KrylovError::NonFinite)));
    }

    #[test]
    fn matches_independent_exponential_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for n in [1usize, 2, 5, 9, 17] {
            for _ in 0..4 {
                let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.5..1.5));
                let ours = dense_expm(&m).unwrap();
                let reference = m.clone().exp();
                let scale = one_norm(&reference).max(1.0);
                assert!(
                    (&ours - &reference).abs().max() / scale < 1e-12,
                    "n={n}: mismatch {:e}",
                    (&ours - &reference).abs().max()
                );
            }
        }
    }

    #[test]
    fn large_norm_requires_scaling() {
        let m = DMatrix::from_row_slice(2, 2, &[-80.0, 3.0, 0.0, -120.0]);
        let ours = dense_expm(&m).unwrap();
        let reference = m.clone().exp();
        assert!((&ours - &reference).abs().max() < 1e-14);
        let d = DMatrix::from_diagonal(&nalgebra::dvector![30.0, -30.0]);
        let e = dense_expm(&d).unwrap();
        assert!(((e[(0, 0)] - 30f64.exp()) / 30f64.exp()).abs() < 1e-12);
    }
}
