use ndarray::{Array1, ArrayView1};

use crate::error::{ReicError, Result};

/// Softmax restricted to positions where `mask` is true.
///
/// Masked-out positions come back as exactly `0.0`. The maximum unmasked
/// logit is subtracted before exponentiation.
pub fn masked_softmax(logits: ArrayView1<f64>, mask: &[bool]) -> Result<Array1<f64>> {
    if logits.len() != mask.len() {
        return Err(ReicError::shape("softmax mask", logits.len(), mask.len()));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ReicError::EmptyCandidates);
    }
    let mut out = Array1::zeros(logits.len());
    let mut total = 0.0;
    for ((o, &l), &m) in out.iter_mut().zip(logits.iter()).zip(mask) {
        if m {
            *o = (l - max).exp();
            total += *o;
        }
    }
    out /= total;
    Ok(out)
}

/// Numerically stable `log(sum(exp(values)))`. Returns `-inf` when empty.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
