//! Evaluation metrics: intensity RMSE, frame-wise confusion rates, Cohen's
//! kappa over count labels, and parameter absolute errors.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::IntensityParams;

/// Frame-wise agreement report between estimated and reference counts.
///
/// A frame is a true positive when both counts match and are positive, a
/// true negative when both are zero, a false positive on overestimation and
/// a false negative on underestimation. Ratios with empty denominators are
/// reported as `None` rather than NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramewiseReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub cohens_kappa: f64,
}

/// Root mean square error between two per-frame intensity traces.
pub fn rmse_intensity(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidConfig("empty traces".into()));
    }
    let sum: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// Frame-wise confusion metrics and multiclass Cohen's kappa, treating each
/// integer count as a class.
pub fn framewise_report(truth: &[u32], estimate: &[u32]) -> Result<FramewiseReport> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidConfig("empty count sequences".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &e) in truth.iter().zip(estimate) {
        if e == t {
            if t > 0 {
                tp += 1;
            } else {
                tn += 1;
            }
        } else if e > t {
            fp += 1;
        } else {
            fn_ += 1;
        }
    }
    let n = truth.len() as f64;
    let accuracy = (tp + tn) as f64 / n;
    let ratio = |num: usize, den: usize| -> Option<f64> {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);

    // multiclass kappa over the count labels
    let mut truth_marginal: BTreeMap<u32, usize> = BTreeMap::new();
    let mut est_marginal: BTreeMap<u32, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (&t, &e) in truth.iter().zip(estimate) {
        *truth_marginal.entry(t).or_default() += 1;
        *est_marginal.entry(e).or_default() += 1;
        if t == e {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = truth_marginal
        .iter()
        .map(|(class, &ct)| {
            let ce = est_marginal.get(class).copied().unwrap_or(0);
            (ct as f64 / n) * (ce as f64 / n)
        })
        .sum();
    let cohens_kappa = if (1.0 - p_e).abs() < 1e-15 {
        // both sequences constant and identical: perfect agreement
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };

    Ok(FramewiseReport {
        tp,
        tn,
        fp,
        fn_,
        accuracy,
        precision,
        sensitivity,
        specificity,
        cohens_kappa,
    })
}

/// Element-wise absolute errors of the four intensity parameters, in the
/// order mu_f, mu_b, sigma_f2, sigma_b2.
pub fn param_abs_errors(truth: &IntensityParams, estimate: &IntensityParams) -> [f64; 4] {
    [
        (truth.mu_f - estimate.mu_f).abs(),
        (truth.mu_b - estimate.mu_b).abs(),
        (truth.sigma_f2 - estimate.sigma_f2).abs(),
        (truth.sigma_b2 - estimate.sigma_b2).abs(),
    ]
}

/// Mean and normal-approximation 95% confidence half-width of a batch of
/// per-trace metric values.
pub fn mean_with_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}
