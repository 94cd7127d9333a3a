//! Scalar evaluation metrics for predicted-vs-true response series.
//!
//! `r_squared` keeps the denominator centered on the mean of the
//! *predictions*, exactly as this artifact defines it; the textbook variant
//! (centered on the truth mean) is exposed separately as
//! [`r_squared_conventional`] and never silently substituted.

use crate::error::{Error, Result};

fn check_lengths(y_true: &[f64], y_pred: &[f64], min_len: usize) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "series lengths differ: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < min_len {
        return Err(Error::InvalidSize(format!(
            "need at least {} samples, got {}",
            min_len,
            y_true.len()
        )));
    }
    Ok(())
}

/// Normalized mean-squared error: sum((t - p)^2) / sum(t^2).
///
/// A zero denominator yields 0 when the predictions are also all zero and
/// +inf otherwise.
pub fn nmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred, 1)?;
    let num: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let den: f64 = y_true.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

/// Coefficient of determination with the denominator centered on
/// mean(y_pred): 1 - sum((t - p)^2) / sum((t - mean(p))^2).
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred, 2)?;
    let pred_mean: f64 = y_pred.iter().sum::<f64>() / y_pred.len() as f64;
    let num: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let den: f64 = y_true.iter().map(|t| (t - pred_mean) * (t - pred_mean)).sum();
    if den == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - num / den)
}

/// Textbook coefficient of determination (denominator centered on
/// mean(y_true)).
pub fn r_squared_conventional(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred, 2)?;
    let true_mean: f64 = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let num: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let den: f64 = y_true.iter().map(|t| (t - true_mean) * (t - true_mean)).sum();
    if den == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - num / den)
}

/// Peak error in percent: max|t - p| / max|t| * 100.
pub fn peak_error_pct(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred, 1)?;
    let num = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .fold(0.0f64, f64::max);
    let den = y_true.iter().map(|t| t.abs()).fold(0.0f64, f64::max);
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den * 100.0)
}

/// Modal assurance criterion between two mode shapes:
/// (phi_i . phi_j)^2 / ((phi_i . phi_i)(phi_j . phi_j)), in [0, 1].
pub fn mac(phi_i: &[f64], phi_j: &[f64]) -> Result<f64> {
    check_lengths(phi_i, phi_j, 1)?;
    let dot: f64 = phi_i.iter().zip(phi_j).map(|(a, b)| a * b).sum();
    let ni: f64 = phi_i.iter().map(|a| a * a).sum();
    let nj: f64 = phi_j.iter().map(|b| b * b).sum();
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::InvalidParameter("mac needs vectors with nonzero norm".into()));
    }
    Ok(dot * dot / (ni * nj))
}

/// Metrics of one predicted-vs-true comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub nmse: f64,
    pub r_squared: f64,
    pub peak_error_pct: f64,
    pub sample_count: usize,
    pub mac: Option<f64>,
}

pub const METRIC_CSV_HEADER: &str = "nmse,r2,pe_pct,n";

impl MetricReport {
    pub fn from_series(y_true: &[f64], y_pred: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            nmse: nmse(y_true, y_pred)?,
            r_squared: r_squared(y_true, y_pred)?,
            peak_error_pct: peak_error_pct(y_true, y_pred)?,
            sample_count: y_true.len(),
            mac: None,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.nmse, self.r_squared, self.peak_error_pct, self.sample_count
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn nmse_identical_is_zero() {
        let y = [1.0, -2.0, 3.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn nmse_direct_values() {
        assert_relative_eq!(nmse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(nmse(&[2.0], &[1.0]).unwrap(), 0.25);
    }

    #[test]
    fn nmse_zero_denominator_rule() {
        assert_eq!(nmse(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(nmse(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn r_squared_identical_is_one() {
        assert_relative_eq!(r_squared(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]).unwrap(), 1.0);
    }

    #[test]
    fn r_squared_as_written_examples() {
        // numerator 2, denominator 2 with the prediction-mean convention
        assert_relative_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        // constant predictions off the truth mean: numerator 10, denominator 10
        assert_relative_eq!(r_squared(&[0.0, 2.0], &[3.0, 3.0]).unwrap(), 0.0);
        // the conventional variant disagrees on the same data
        assert_relative_eq!(
            r_squared_conventional(&[0.0, 2.0], &[3.0, 3.0]).unwrap(),
            1.0 - 10.0 / 2.0
        );
    }

    #[test]
    fn peak_error_values() {
        let y = [0.0, 2.0];
        assert_eq!(peak_error_pct(&y, &y).unwrap(), 0.0);
        assert_relative_eq!(peak_error_pct(&[0.0, 2.0], &[0.0, 1.0]).unwrap(), 50.0);
        assert_relative_eq!(
            peak_error_pct(&[-3.0, 1.0], &[-3.0, 0.0]).unwrap(),
            100.0 / 3.0
        );
    }

    #[test]
    fn mac_values() {
        assert_relative_eq!(mac(&[1.0, 2.0, -1.0], &[1.0, 2.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mac(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(mac(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(mac(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn metric_report_csv_row() {
        let r = MetricReport::from_series(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.csv_row(), "0,1,0,2");
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(nmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(peak_error_pct(&[], &[]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn nmse_is_scale_covariant(
            ys in prop::collection::vec(-100.0f64..100.0, 2..40),
            ps in prop::collection::vec(-100.0f64..100.0, 2..40),
            alpha in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0]),
        ) {
            let n = ys.len().min(ps.len());
            let (ys, ps) = (&ys[..n], &ps[..n]);
            prop_assume!(ys.iter().any(|y| *y != 0.0));
            let base = nmse(ys, ps).unwrap();
            let scaled_t: Vec<f64> = ys.iter().map(|y| alpha * y).collect();
            let scaled_p: Vec<f64> = ps.iter().map(|p| alpha * p).collect();
            let scaled = nmse(&scaled_t, &scaled_p).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1.0));
        }

        #[test]
        fn mac_is_bounded_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 3..12),
            b in prop::collection::vec(-10.0f64..10.0, 3..12),
            s in prop::sample::select(vec![-4.0f64, 0.5, 3.0]),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(b.iter().any(|x| x.abs() > 1e-6));
            let m = mac(a, b).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m));
            let sa: Vec<f64> = a.iter().map(|x| s * x).collect();
            let ms = mac(&sa, b).unwrap();
            prop_assert!((m - ms).abs() <= 1e-9);
        }

        #[test]
        fn peak_error_sign_flip_invariant(
            ys in prop::collection::vec(-5.0f64..5.0, 1..20),
            ps in prop::collection::vec(-5.0f64..5.0, 1..20),
        ) {
            let n = ys.len().min(ps.len());
            let (ys, ps) = (&ys[..n], &ps[..n]);
            prop_assume!(ys.iter().any(|y| *y != 0.0));
            let base = peak_error_pct(ys, ps).unwrap();
            let fy: Vec<f64> = ys.iter().map(|y| -y).collect();
            let fp: Vec<f64> = ps.iter().map(|p| -p).collect();
            let flipped = peak_error_pct(&fy, &fp).unwrap();
            prop_assert!((base - flipped).abs() <= 1e-9 * base.max(1.0));
        }
    }
}
