use crate::error::{Error, Result};
use crate::nncore::{sigmoid, Scalar, Tensor};

fn check_targets<T: Scalar>(targets: &Tensor<T>) -> Result<()> {
    if let Some(bad) = targets.data().iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::Data(format!("BCE target {bad:?} is not 0 or 1")));
    }
    Ok(())
}

/// Mean binary cross-entropy of sigmoid outputs `p` against 0/1 targets.
pub fn bce_loss<T: Scalar>(predictions: &Tensor<T>, targets: &Tensor<T>) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape("bce_loss", "predictions and targets differ in shape"));
    }
    check_targets(targets)?;
    let n = predictions.len() as f64;
    let total: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &y)| {
            let (p, y) = (p.as_f64(), y.as_f64());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / n)
}

/// Fused sigmoid + BCE on logits `[B, K]`.
///
/// Returns the mean loss and its gradient with respect to the logits,
/// `(sigmoid(z) - y) / (B * K)`. The loss uses the overflow-free form
/// `max(z, 0) - z y + ln(1 + exp(-|z|))`.
pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            "bce_with_logits",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    check_targets(targets)?;
    let n = logits.len();
    let scale = T::of(1.0 / n as f64);
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0f64;
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets.data()) {
        let (zf, yf) = (z.as_f64(), y.as_f64());
        total += zf.max(0.0) - zf * yf + (-zf.abs()).exp().ln_1p();
        *g = (sigmoid(z) - y) * scale;
    }
    Ok((total / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_logits_give_zero_loss() {
        let z = Tensor::from_vec(&[1, 2], vec![60.0f32, -60.0]).unwrap();
        let y = Tensor::from_vec(&[1, 2], vec![1.0f32, 0.0]).unwrap();
        let (loss, grad) = bce_with_logits(&z, &y).unwrap();
        assert!(loss < 1e-20);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-7));
    }

    #[test]
    fn half_probability_gives_ln2() {
        let z = Tensor::<f64>::zeros(&[3, 4]);
        let y = Tensor::from_vec(&[3, 4], (0..12).map(|i| (i % 2) as f64).collect()).unwrap();
        let (loss, _) = bce_with_logits(&z, &y).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        let p = Tensor::full(&[3, 4], 0.5f64);
        assert!((bce_loss(&p, &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_binary_targets() {
        let z = Tensor::<f32>::zeros(&[1, 1]);
        let y = Tensor::from_vec(&[1, 1], vec![0.3f32]).unwrap();
        assert!(bce_with_logits(&z, &y).is_err());
    }
}
