use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(Error::InvalidParam("metric needs at least one row".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Per-class F1 averaged with weights equal to true-class support.
/// Classes are `0..k`.
pub fn weighted_f1(truth: &[usize], pred: &[usize], k: usize) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    if let Some(&c) = truth.iter().chain(pred).find(|&&c| c >= k) {
        return Err(Error::InvalidParam(format!("class {c} out of range for {k} classes")));
    }
    let mut tp = vec![0usize; k];
    let mut predicted = vec![0usize; k];
    let mut support = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let mut total = 0.0;
    for c in 0..k {
        if support[c] == 0 || tp[c] == 0 {
            continue;
        }
        let precision = tp[c] as f64 / predicted[c] as f64;
        let recall = tp[c] as f64 / support[c] as f64;
        total += support[c] as f64 * 2.0 * precision * recall / (precision + recall);
    }
    Ok(total / truth.len() as f64)
}
