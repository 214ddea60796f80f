//! Loss kernels shared by the tape ops and the standalone loss functions.

use super::tensor::{softmax_row_in_place, Scalar, Tensor};
use crate::{Error, Result};

fn rows_cols<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    let c = t.last_dim();
    (t.len() / c.max(1), c)
}

/// Softened probabilities `softmax(logits / temperature)` row by row.
pub(crate) fn softened<T: Scalar>(logits: &[T], cols: usize, temperature: T) -> Vec<T> {
    let mut p: Vec<T> = logits.iter().map(|&x| x / temperature).collect();
    for row in p.chunks_mut(cols) {
        softmax_row_in_place(row);
    }
    p
}

/// Forward pass of the temperature-scaled KL term. Returns the loss and the
/// teacher/student softened distributions for the backward pass.
pub(crate) fn kl_forward<T: Scalar>(
    teacher: &Tensor<T>,
    student: &Tensor<T>,
    temperature: T,
) -> Result<(T, Vec<T>, Vec<T>)> {
    teacher.ensure_same_shape(student)?;
    if temperature <= T::zero() || !temperature.is_finite() {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let (rows, cols) = rows_cols(teacher);
    let pt = softened(teacher.data(), cols, temperature);
    let ps = softened(student.data(), cols, temperature);
    let mut total = T::zero();
    for (t, s) in pt.iter().zip(&ps) {
        if *t > T::zero() {
            total = total + *t * (t.ln() - s.ln());
        }
    }
    let scale = temperature * temperature / T::from_usize(rows.max(1)).unwrap();
    // KL is non-negative; rounding can leave a tiny negative residue.
    Ok(((total * scale).max(T::zero()), pt, ps))
}

/// `T² · KL(softmax(teacher/T) ‖ softmax(student/T))`, averaged over rows.
pub fn kl_divergence<T: Scalar>(
    teacher_logits: &Tensor<T>,
    student_logits: &Tensor<T>,
    temperature: T,
) -> Result<T> {
    kl_forward(teacher_logits, student_logits, temperature).map(|(l, _, _)| l)
}

/// Weighted negative log-likelihood of one sample: `−weight · log softmax(logits)[class]`.
pub fn cross_entropy<T: Scalar>(logits: &[T], class_index: usize, weight: T) -> Result<T> {
    if class_index >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: class_index,
            len: logits.len(),
        });
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    Ok(weight * (lse - logits[class_index]))
}

/// Batch cross-entropy normalized by the sum of sample weights. Returns the
/// loss and the row softmax for the backward pass.
pub(crate) fn ce_forward<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: &[T],
) -> Result<(T, Vec<T>)> {
    let (rows, cols) = rows_cols(logits);
    if targets.len() != rows {
        return Err(Error::LengthMismatch(targets.len(), rows));
    }
    if weights.len() != rows {
        return Err(Error::LengthMismatch(weights.len(), rows));
    }
    let mut total = T::zero();
    let mut wsum = T::zero();
    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
        total = total + cross_entropy(logits.row(i), y, w)?;
        wsum = wsum + w;
    }
    if wsum <= T::zero() {
        return Err(Error::InvalidConfig("sample weights must be positive".into()));
    }
    let probs = softened(logits.data(), cols, T::one());
    Ok((total / wsum, probs))
}

/// Weighted batch cross-entropy: `Σ wᵢ·nllᵢ / Σ wᵢ`.
pub fn weighted_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: &[T],
) -> Result<T> {
    ce_forward(logits, targets, weights).map(|(l, _)| l)
}

/// Mean of squared differences over all elements.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    a.ensure_same_shape(b)?;
    if a.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / T::from_usize(a.len()).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[1, v.len()], v).unwrap()
    }

    #[test]
    fn kl_examples() {
        let a = t(&[0.3, -1.2, 2.0]);
        assert_eq!(kl_divergence(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(kl_divergence(&a, &a, 3.5).unwrap(), 0.0);

        // (2/3)ln(4/3) + (1/3)ln(2/3)
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        let got = kl_divergence(&t(&[2f64.ln(), 0.0]), &t(&[0.0, 0.0]), 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.0566).abs() < 1e-4);
    }

    #[test]
    fn kl_shape_mismatch() {
        assert!(kl_divergence(&t(&[0.0, 1.0]), &t(&[0.0, 1.0, 2.0]), 1.0).is_err());
    }

    #[test]
    fn ce_examples() {
        let l = cross_entropy(&[0.0f64, 0.0, 0.0, 0.0], 2, 1.0).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let l = cross_entropy(&[10.0f64, 0.0], 0, 1.0).unwrap();
        assert!((l - (1.0 + (-10f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 4.54e-5).abs() < 1e-7);
        let l1 = cross_entropy(&[0.2f64, -0.4, 1.0], 1, 1.0).unwrap();
        let l2 = cross_entropy(&[0.2f64, -0.4, 1.0], 1, 2.0).unwrap();
        assert_eq!(l2, 2.0 * l1);
        assert!(matches!(
            cross_entropy(&[0.0f64, 0.0], 2, 1.0),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn weighted_ce_unit_weights_equal_plain_mean() {
        let logits = Tensor::from_f64(&[2, 3], &[0.1, 0.2, 0.3, -1.0, 0.0, 1.0]).unwrap();
        let weighted = weighted_cross_entropy(&logits, &[0, 2], &[1.0, 1.0]).unwrap();
        let plain = (cross_entropy(logits.row(0), 0, 1.0).unwrap()
            + cross_entropy(logits.row(1), 2, 1.0).unwrap())
            / 2.0;
        assert_eq!(weighted, plain);
    }

    #[test]
    fn mse_examples() {
        let a = t(&[1.0, 1.0]);
        let b = t(&[0.0, 3.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 2.5);
        assert_eq!(mse(&b, &a).unwrap(), 2.5);
        assert!(mse(&a, &t(&[1.0])).is_err());
    }
}
