//! Binary cross-entropy over sigmoid outputs, the per-sample form of
//! the adversarial value function's log D(x) and log(1 - D(G(z))).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictions are clamped into [EPS, 1-EPS] before the logs.
pub const BCE_EPS: f64 = 1e-7;

/// loss = -mean(t*ln p + (1-t)*ln(1-p)) over every element; the returned
/// gradient is d loss / d pred at the clamped predictions.
pub fn loss_bce(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "bce: pred shape {:?} vs target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("bce over zero elements".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    let gd = grad.data_mut();
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        gd[i] = (p - t) / (p * (1.0 - p)) / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_near_zero() {
        let pred = Tensor::filled(&[4, 1], 1.0);
        let target = Tensor::filled(&[4, 1], 1.0);
        let (loss, _) = loss_bce(&pred, &target).unwrap();
        assert!(loss >= 0.0 && loss <= 1e-6, "loss {}", loss);
    }

    #[test]
    fn coin_flip_is_ln_two() {
        let pred = Tensor::filled(&[8, 3], 0.5);
        let target = Tensor::from_vec(
            &[8, 3],
            (0..24).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let (loss, _) = loss_bce(&pred, &target).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = Tensor::from_vec(&[2, 3], vec![0.3, 0.7, 0.45, 0.62, 0.18, 0.83]).unwrap();
        let target = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let (_, grad) = loss_bce(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..pred.len() {
            let mut plus = pred.clone();
            plus.data_mut()[i] += h;
            let mut minus = pred.clone();
            minus.data_mut()[i] -= h;
            let (lp, _) = loss_bce(&plus, &target).unwrap();
            let (lm, _) = loss_bce(&minus, &target).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let a = grad.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-9);
            assert!(rel < 1e-6, "elem {}: analytic {} vs fd {}", i, a, fd);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let pred = Tensor::zeros(&[2, 2]);
        let target = Tensor::zeros(&[2, 3]);
        assert!(loss_bce(&pred, &target).is_err());
    }
}
