use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Per-class F1 averaged with weights proportional to true-class support.
///
/// A class's F1 is 0 when its precision and recall are both zero or undefined.
pub fn weighted_f1(y_true: &[i64], y_pred: &[i64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::Empty("labels"));
    }
    // class -> (support, true positives, predicted count)
    let mut counts: BTreeMap<i64, (usize, usize, usize)> = BTreeMap::new();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts.entry(t).or_default().0 += 1;
        counts.entry(p).or_default().2 += 1;
        if t == p {
            counts.entry(t).or_default().1 += 1;
        }
    }
    let n = y_true.len() as f64;
    let mut total = 0.0;
    for &(support, tp, predicted) in counts.values() {
        if support == 0 || tp == 0 {
            continue;
        }
        let precision = tp as f64 / predicted as f64;
        let recall = tp as f64 / support as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        total += support as f64 / n * f1;
    }
    Ok(total)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Invalid("pearson_r needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of 0/1 correctness, the per-item score used for classification comparisons.
pub fn correctness(y_true: &[i64], y_pred: &[i64]) -> Result<Vec<f64>> {
    check_lengths(y_true.len(), y_pred.len())?;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| if t == p { 1.0 } else { 0.0 })
        .collect())
}
