use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, Op, Scalar};

/// Contrastive loss over `2N` projections where row `i` pairs with row
/// `i + N (mod 2N)`:
///
/// `-(1/2N) sum_i [<z_i, z_{i+N}> - tau * log sum_{j != i} exp(<z_i, z_j> / tau)]`.
///
/// Returns the loss and its gradient with respect to `z`.
pub fn info_nce<T: Scalar>(z: &Tensor<T>, tau: T) -> Result<(T, Tensor<T>)> {
    let (rows, d) = match *z.shape() {
        [r, d] if r >= 2 && r % 2 == 0 => (r, d),
        _ => return Err(Error::ShapeMismatch { expected: vec![2, 0], got: z.shape().to_vec() }),
    };
    let half = rows / 2;
    let mut s = vec![T::zero(); rows * rows];
    gemm(T::one(), z.data(), rows, d, Op::N, z.data(), rows, d, Op::T, T::zero(), &mut s);

    let scale = T::one() / T::lit(rows as f64);
    let mut total = T::zero();
    // s becomes G = (P - E) / 2N in place, row by row.
    for (i, row) in s.chunks_exact_mut(rows).enumerate() {
        let partner = (i + half) % rows;
        let positive = row[partner];
        let top = row.iter().enumerate().filter(|&(j, _)| j != i).fold(T::neg_infinity(), |m, (_, &v)| m.max(v));
        let mut sum = T::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if j == i {
                *v = T::zero();
            } else {
                *v = ((*v - top) / tau).exp();
                sum += *v;
            }
        }
        // With a single pair top == positive and sum == 1, so the loss is exactly 0.
        total += tau * sum.ln() + (top - positive);
        for v in row.iter_mut() {
            *v = *v / sum * scale;
        }
        row[partner] -= scale;
    }
    // dZ = (G + G^T) Z
    let mut sym = s.clone();
    for i in 0..rows {
        for j in 0..rows {
            sym[i * rows + j] = s[i * rows + j] + s[j * rows + i];
        }
    }
    let mut grad = Tensor::zeros(&[rows, d]);
    gemm(T::one(), &sym, rows, rows, Op::N, z.data(), rows, d, Op::N, T::zero(), grad.data_mut());
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_is_zero() {
        let z = Tensor::from_rows(&[[0.6f64, 0.8], [1.0, 0.0]]).unwrap();
        let (loss, grad) = info_nce(&z, 0.5).unwrap();
        assert!(loss.abs() < 1e-15);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn identical_rows_closed_form() {
        let z = Tensor::from_rows(&[[1.0f64, 0.0]; 4]).unwrap();
        let (loss, _) = info_nce(&z, 0.5).unwrap();
        assert!((loss - 0.5 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn odd_row_count_rejected() {
        assert!(info_nce(&Tensor::<f64>::zeros(&[3, 2]), 0.5).is_err());
    }
}
