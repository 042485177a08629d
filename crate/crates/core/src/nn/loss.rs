use alloc::format;

use crate::math;
use crate::{Error, Result, Tensor};

/// Training objective.
///
/// All three are means: MSE and BCE over every element, softmax
/// cross-entropy over the batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    /// Binary cross-entropy on probabilities; apply a sigmoid first.
    Bce,
    /// Cross-entropy on softmax probabilities against one-hot targets.
    SoftmaxCe,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
            LossKind::SoftmaxCe => "softmax_ce",
        }
    }
}

impl core::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::Bce),
            "softmax_ce" => Ok(LossKind::SoftmaxCe),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

// Floor for log arguments in cross-entropy.
const LOG_FLOOR: f64 = 1e-300;

/// Returns the loss and its gradient with respect to `prediction`.
pub fn compute_loss(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape("compute_loss", prediction.shape(), target.shape()));
    }
    if prediction.is_empty() {
        return Err(Error::Empty(format!("{} loss on an empty batch", kind.name())));
    }
    let p = prediction.data();
    let t = target.data();
    match kind {
        LossKind::Mse => {
            let n = p.len() as f64;
            let loss = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            let grad = prediction.zip(target, |a, b| 2.0 * (a - b) / n)?;
            Ok((loss, grad))
        }
        LossKind::Bce => {
            if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Domain(format!(
                    "bce prediction {bad} outside (0, 1); apply a sigmoid first"
                )));
            }
            let n = p.len() as f64;
            let loss = p
                .iter()
                .zip(t)
                .map(|(&q, &y)| -(y * math::ln(q) + (1.0 - y) * math::ln(1.0 - q)))
                .sum::<f64>()
                / n;
            let grad = prediction.zip(target, |q, y| (q - y) / (q * (1.0 - q)) / n)?;
            Ok((loss, grad))
        }
        LossKind::SoftmaxCe => {
            let batch = prediction.rows() as f64;
            let loss = p
                .iter()
                .zip(t)
                .filter(|(_, &y)| y != 0.0)
                .map(|(&q, &y)| -y * math::ln(q.max(LOG_FLOOR)))
                .sum::<f64>()
                / batch;
            let grad = prediction.zip(target, |q, y| {
                if y == 0.0 {
                    0.0
                } else {
                    -y / q.max(LOG_FLOOR) / batch
                }
            })?;
            Ok((loss, grad))
        }
    }
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Domain(format!("label {l} out of range for {classes} classes")));
        }
        t.data_mut()[i * classes + l] = 1.0;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mse_of_identical_is_zero() {
        let x = Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (loss, grad) = compute_loss(LossKind::Mse, &x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn softmax_ce_uniform_prediction_is_ln4() {
        let p = Tensor::new(vec![1, 4], vec![0.25; 4]).unwrap();
        let t = one_hot(&[2], 4).unwrap();
        let (loss, _) = compute_loss(LossKind::SoftmaxCe, &p, &t).unwrap();
        // closed form: -ln(1/4)
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn bce_half_against_one_is_ln2() {
        let p = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
        let t = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let (loss, _) = compute_loss(LossKind::Bce, &p, &t).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_unsquashed_predictions() {
        let p = Tensor::new(vec![1, 2], vec![0.5, 1.0]).unwrap();
        let t = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(compute_loss(LossKind::Bce, &p, &t), Err(Error::Domain(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Tensor::zeros(&[1, 2]);
        let t = Tensor::zeros(&[2, 1]);
        assert!(matches!(compute_loss(LossKind::Mse, &p, &t), Err(Error::Shape { .. })));
    }

    #[test]
    fn losses_are_non_negative() {
        let mut rng = crate::RngState::new(4);
        for _ in 0..50 {
            let p = rng.uniform_tensor(&[3, 4]).map(|v| 0.01 + 0.98 * v);
            let t = rng.uniform_tensor(&[3, 4]).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
            assert!(compute_loss(LossKind::Mse, &p, &t).unwrap().0 >= 0.0);
            assert!(compute_loss(LossKind::Bce, &p, &t).unwrap().0 >= 0.0);
            let probs = crate::nn::layer::softmax_rows(&p);
            let labels = one_hot(&[0, 3, 1], 4).unwrap();
            assert!(compute_loss(LossKind::SoftmaxCe, &probs, &labels).unwrap().0 >= 0.0);
        }
    }
}
