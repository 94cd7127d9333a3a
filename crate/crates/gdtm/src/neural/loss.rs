use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smooth-L1 loss, mean over elements: 0.5 x^2 / delta for |x| < delta,
/// |x| - 0.5 delta otherwise (times delta), with x = pred - target.
/// Returns the scalar loss and its gradient with respect to `pred`.
pub fn smooth_l1(
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
    delta: f64,
) -> Result<(f64, DMatrix<f64>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pred is {:?}, target is {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    for i in 0..pred.nrows() {
        for j in 0..pred.ncols() {
            let x = pred[(i, j)] - target[(i, j)];
            if x.abs() < delta {
                loss += 0.5 * x * x / delta;
                grad[(i, j)] = x / delta / n;
            } else {
                loss += x.abs() - 0.5 * delta;
                grad[(i, j)] = x.signum() / n;
            }
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_at_equality() {
        let (l, g) = smooth_l1(&scalar(2.0), &scalar(2.0), 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[(0, 0)], 0.0);
    }

    #[test]
    fn quadratic_region_value() {
        let (l, _) = smooth_l1(&scalar(0.5), &scalar(0.0), 1.0).unwrap();
        assert_relative_eq!(l, 0.125);
    }

    #[test]
    fn linear_region_value() {
        let (l, g) = smooth_l1(&scalar(2.0), &scalar(0.0), 1.0).unwrap();
        assert_relative_eq!(l, 1.5);
        assert_relative_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = DMatrix::from_row_slice(2, 2, &[0.3, -1.7, 0.99, 2.4]);
        let target = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.5]);
        let (_, grad) = smooth_l1(&pred, &target, 1.0).unwrap();
        let h = 1e-7;
        for i in 0..2 {
            for j in 0..2 {
                let mut p = pred.clone();
                p[(i, j)] += h;
                let lp = smooth_l1(&p, &target, 1.0).unwrap().0;
                p[(i, j)] -= 2.0 * h;
                let lm = smooth_l1(&p, &target, 1.0).unwrap().0;
                assert_relative_eq!(grad[(i, j)], (lp - lm) / (2.0 * h), max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn mean_reduction_over_elements() {
        let pred = DMatrix::from_row_slice(1, 4, &[0.5, 0.5, 0.5, 0.5]);
        let target = DMatrix::zeros(1, 4);
        let (l, _) = smooth_l1(&pred, &target, 1.0).unwrap();
        assert_relative_eq!(l, 0.125);
    }
}
