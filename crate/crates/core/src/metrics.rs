//! Classification rates and cost gaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("{labels} labels but {predictions} predictions")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("reference cost must be positive, got {0}")]
    NonPositiveReference(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
    pub tnr: f64,
    pub tpr: f64,
    pub balanced_accuracy: f64,
    /// No negative labels: `tnr` reported as 1.
    pub tnr_undefined: bool,
    /// No positive labels: `tpr` reported as 1.
    pub tpr_undefined: bool,
}

/// TNR = TN/(TN+FP), TPR = TP/(TP+FN), balanced accuracy = their mean.
///
/// A rate whose class is absent from `labels` is reported as 1.0 and
/// flagged.
pub fn confusion_metrics(labels: &[u8], predictions: &[u8]) -> Result<Confusion, MetricError> {
    if labels.len() != predictions.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y != 0, p != 0) {
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (true, true) => c.tp += 1,
        }
    }
    let rate = |hit: usize, miss: usize| {
        if hit + miss == 0 {
            (1.0, true)
        } else {
            (hit as f64 / (hit + miss) as f64, false)
        }
    };
    (c.tnr, c.tnr_undefined) = rate(c.tn, c.fp);
    (c.tpr, c.tpr_undefined) = rate(c.tp, c.fn_);
    c.balanced_accuracy = (c.tnr + c.tpr) / 2.0;
    Ok(c)
}

/// Relative excess `(cost − reference) / reference`; negative when the
/// candidate is cheaper.
pub fn gap(cost: f64, reference: f64) -> Result<f64, MetricError> {
    if reference.is_nan() || reference <= 0.0 {
        return Err(MetricError::NonPositiveReference(reference));
    }
    Ok((cost - reference) / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let c = confusion_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((c.tnr, c.tpr, c.balanced_accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_positive_predictor() {
        let c = confusion_metrics(&[0, 1, 0, 1], &[1, 1, 1, 1]).unwrap();
        assert_eq!((c.tnr, c.tpr, c.balanced_accuracy), (0.0, 1.0, 0.5));
    }

    #[test]
    fn hand_counted() {
        let c = confusion_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!((c.tnr, c.tpr, c.balanced_accuracy), (0.5, 1.0, 0.75));
        assert_eq!((c.tn, c.fp, c.fn_, c.tp), (1, 1, 0, 2));
    }

    #[test]
    fn absent_class_flagged() {
        let c = confusion_metrics(&[1, 1], &[1, 0]).unwrap();
        assert!(c.tnr_undefined && !c.tpr_undefined);
        assert_eq!(c.tnr, 1.0);
        assert_eq!(c.tpr, 0.5);
        assert!(confusion_metrics(&[1], &[]).is_err());
    }

    #[test]
    fn gaps() {
        assert_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        let g = gap(27718.0, 27637.0).unwrap();
        assert!((g * 100.0 - 0.29).abs() < 0.005);
        assert!(gap(55371.0, 55394.0).unwrap() < 0.0);
        assert!(gap(1.0, 0.0).is_err());
        assert!(gap(1.0, -3.0).is_err());
    }
}
