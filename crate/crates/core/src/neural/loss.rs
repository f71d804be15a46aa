use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

fn check_shapes<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "loss inputs {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over all elements, with probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`. Returns the value and its gradient with respect
/// to `prob`.
pub fn loss_bce<T: Scalar>(prob: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    check_shapes(prob, target)?;
    let eps = T::lit(BCE_EPS);
    let one = T::one();
    let n = T::lit(prob.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(prob.len());
    for (&p, &y) in prob.data().iter().zip(target.data()) {
        let p = p.max(eps).min(one - eps);
        total += -(y * p.ln() + (one - y) * (one - p).ln());
        grad.push((p - y) / (p * (one - p)) / n);
    }
    Ok((total / n, Tensor::new(prob.shape().to_vec(), grad)?))
}

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    check_shapes(pred, target)?;
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        let d = p - y;
        total += d * d;
        grad.push(two * d / n);
    }
    Ok((total / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v).unwrap()
    }

    #[test]
    fn bce_at_half() {
        let (v, _) = loss_bce(&t(vec![0.5]), &t(vec![1.0])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let (v, _) = loss_bce(&t(vec![1.0, 0.0]), &t(vec![1.0, 0.0])).unwrap();
        assert!(v >= 0.0);
        assert!(v <= -(1.0 - BCE_EPS).ln() + 1e-15);
    }

    #[test]
    fn mse_values() {
        let (v, g) = loss_mse(&t(vec![1.0, 2.0]), &t(vec![1.0, 2.0])).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        let (v, g) = loss_mse(&t(vec![3.0; 4]), &t(vec![1.0; 4])).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(g.data(), &[1.0; 4]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(loss_mse(&t(vec![1.0]), &t(vec![1.0, 2.0])).is_err());
        assert!(loss_bce(&t(vec![0.5]), &t(vec![1.0, 0.0])).is_err());
    }
}
