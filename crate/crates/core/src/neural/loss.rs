use super::NeuralError;
use crate::linalg::{shape_err, DenseVector};

/// Smallest `|y_true|` accepted by [`loss_mape`].
pub const MAPE_GUARD: f64 = 1e-12;

/// Mean squared error and its gradient `2 (y - y_true) / m`.
pub fn loss_mse(y: &[f64], y_true: &[f64]) -> Result<(f64, DenseVector), NeuralError> {
    if y.len() != y_true.len() || y.is_empty() {
        return Err(shape_err("loss_mse", y.len(), y_true.len()).into());
    }
    let m = y.len() as f64;
    let diff: Vec<f64> = y.iter().zip(y_true).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / m;
    Ok((loss, diff.iter().map(|d| 2.0 * d / m).collect()))
}

/// Mean absolute percentage error (as a fraction) and its subgradient, with
/// `sign(0) = 0`.
pub fn loss_mape(y: &[f64], y_true: &[f64]) -> Result<(f64, DenseVector), NeuralError> {
    if y.len() != y_true.len() || y.is_empty() {
        return Err(shape_err("loss_mape", y.len(), y_true.len()).into());
    }
    if let Some((index, &value)) = y_true.iter().enumerate().find(|(_, t)| !(t.abs() > MAPE_GUARD)) {
        return Err(NeuralError::MapeGuard { index, value });
    }
    let m = y.len() as f64;
    let loss = y.iter().zip(y_true).map(|(a, t)| ((a - t) / t).abs()).sum::<f64>() / m;
    let grad = y
        .iter()
        .zip(y_true)
        .map(|(a, t)| {
            let d = a - t;
            let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            sign / (m * t.abs())
        })
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        let (l, g) = loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, g) = loss_mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 5.0);
        assert_eq!(g.as_slice(), &[1.0, 3.0]);
        assert!(loss_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(loss_mape(&[3.0, -2.0], &[3.0, -2.0]).unwrap().0, 0.0);
        let (l, g) = loss_mape(&[2.0], &[1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.as_slice(), &[1.0]);
        assert_eq!(
            loss_mape(&[1.0, 1.0], &[2.0, 0.0]).unwrap_err(),
            NeuralError::MapeGuard { index: 1, value: 0.0 }
        );
    }

    proptest! {
        #[test]
        fn mse_gradient_matches_finite_differences(
            y in proptest::collection::vec(-10.0f64..10.0, 1..6),
            shift in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            let t: Vec<f64> = y.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let (_, g) = loss_mse(&y, &t).unwrap();
            let h = 1e-5;
            for k in 0..y.len() {
                let mut p = y.clone();
                let mut m = y.clone();
                p[k] += h;
                m[k] -= h;
                let fd = (loss_mse(&p, &t).unwrap().0 - loss_mse(&m, &t).unwrap().0) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-8 * (1.0 + g[k].abs()));
            }
        }
    }
}
