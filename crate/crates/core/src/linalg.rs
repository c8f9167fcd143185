//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Real embedding `[[Re, -Im], [Im, Re]]` of a complex `m x n` matrix.
pub fn embed_complex(h: &CMatrix) -> RMatrix {
    let (m, n) = h.shape();
    let mut out = RMatrix::zeros(2 * m, 2 * n);
    for r in 0..m {
        for c in 0..n {
            let v = h[(r, c)];
            out[(r, c)] = v.re;
            out[(r, c + n)] = -v.im;
            out[(r + m, c)] = v.im;
            out[(r + m, c + n)] = v.re;
        }
    }
    out
}

/// Stacks a complex vector as `[Re; Im]`.
pub fn embed_vector(x: &CVector) -> RVector {
    let n = x.len();
    RVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// `I_reps ⊗ block`: block-diagonal repetition.
pub fn kron_identity(reps: usize, block: &RMatrix) -> RMatrix {
    let (m, n) = block.shape();
    let mut out = RMatrix::zeros(reps * m, reps * n);
    for k in 0..reps {
        out.view_mut((k * m, k * n), (m, n)).copy_from(block);
    }
    out
}

/// `½ log2 det(I + HᵀH)` via a Cholesky factor of the smaller Gram matrix.
pub fn half_log2_det_gram(h: &RMatrix) -> f64 {
    let (m, n) = h.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    let gram = if n <= m {
        RMatrix::identity(n, n) + h.transpose() * h
    } else {
        RMatrix::identity(m, m) + h * h.transpose()
    };
    // I + HᵀH is symmetric positive definite; the factorization cannot fail
    // for finite input.
    let chol = gram
        .cholesky()
        .expect("I + HᵀH is positive definite for finite H");
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.log2())
        .sum()
}

/// Upper-triangular `R` with `RᵀR = A` for a symmetric positive-definite `A`.
pub fn upper_cholesky(a: &RMatrix) -> Result<RMatrix> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.l().transpose())
}

/// Column sub-matrix made from the given `(start, width)` column ranges.
pub fn select_columns(h: &RMatrix, ranges: &[(usize, usize)]) -> RMatrix {
    let width: usize = ranges.iter().map(|r| r.1).sum();
    let mut out = RMatrix::zeros(h.nrows(), width);
    let mut at = 0;
    for &(start, w) in ranges {
        out.columns_mut(at, w).copy_from(&h.columns(start, w));
        at += w;
    }
    out
}

/// Relative Frobenius distance `‖a - b‖ / max(‖b‖, 1)`.
pub fn relative_frobenius(a: &RMatrix, b: &RMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn embeds_real_and_imaginary_units() {
        let one = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert_eq!(embed_complex(&one), RMatrix::identity(2, 2));
        let i = CMatrix::from_element(1, 1, Complex64::new(0.0, 1.0));
        assert_eq!(
            embed_complex(&i),
            RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        );
    }

    #[test]
    fn embedding_commutes_with_products_and_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 2, 3);
            let b = random_complex(&mut rng, 3, 2);
            let c = random_complex(&mut rng, 2, 3);
            let x = CVector::from_iterator(
                3,
                (0..3).map(|_| Complex64::new(rng.random(), rng.random())),
            );
            let prod = embed_complex(&(&a * &b)) - embed_complex(&a) * embed_complex(&b);
            assert!(prod.norm() < 1e-10);
            let sum = embed_complex(&(&a + &c)) - (embed_complex(&a) + embed_complex(&c));
            assert!(sum.norm() < 1e-10);
            let mv = embed_complex(&a) * embed_vector(&x) - embed_vector(&(&a * &x));
            assert!(mv.norm() < 1e-10);
        }
    }

    #[test]
    fn half_log_det_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (m, n) in [(3, 2), (2, 3), (4, 4)] {
            let h = RMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
            let oracle: f64 = h
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .map(|s| 0.5 * (1.0 + s * s).log2())
                .sum();
            assert!((half_log2_det_gram(&h) - oracle).abs() < 1e-9);
        }
        assert_eq!(half_log2_det_gram(&RMatrix::zeros(2, 2)), 0.0);
        assert!((half_log2_det_gram(&RMatrix::identity(1, 1)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kron_identity_repeats_blocks() {
        let b = RMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let k = kron_identity(2, &b);
        assert_eq!(k, RMatrix::from_row_slice(2, 4, &[1., 2., 0., 0., 0., 0., 1., 2.]));
    }
}
