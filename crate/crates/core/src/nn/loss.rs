use crate::error::{Error, Result};

/// `-log softmax(logits)[label]` with max-subtraction.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Dataset(format!(
            "cross entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::Index {
            index: label,
            len: logits.len(),
        });
    }
    // ln(sum) as ln_1p over the non-max terms keeps precision when one
    // logit dominates.
    let top = argmax(logits);
    let max = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, z)| (z - max).exp())
        .sum();
    Ok(rest.ln_1p() - (logits[label] - max))
}

/// Mean cross entropy over a batch of `classes`-wide logit rows, with the
/// gradient `(softmax - onehot) / batch` written into `d_logits`.
pub fn cross_entropy_batch(
    logits: &[f64],
    classes: usize,
    labels: &[usize],
    d_logits: &mut [f64],
) -> Result<f64> {
    let batch = labels.len();
    if logits.len() != batch * classes || d_logits.len() != logits.len() {
        return Err(Error::Dimension {
            expected: batch * classes,
            got: logits.len(),
        });
    }
    let mut total = 0.0;
    for ((row, d), &label) in logits
        .chunks_exact(classes)
        .zip(d_logits.chunks_exact_mut(classes))
        .zip(labels)
    {
        total += cross_entropy(row, label)?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (di, z) in d.iter_mut().zip(row) {
            *di = (z - max).exp();
            sum += *di;
        }
        for di in d.iter_mut() {
            *di /= sum * batch as f64;
        }
        d[label] -= 1.0 / batch as f64;
    }
    Ok(total / batch as f64)
}

/// Mean squared error over the attribute slots.
pub fn attribute_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let sum = pred
        .iter()
        .zip(target)
        .fold(0.0, |acc, (p, t)| acc + (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}

/// Batch mean of [`attribute_loss`] with gradient `2 (p - t) / (width * batch)`.
pub fn attribute_loss_batch(
    pred: &[f64],
    target: &[f64],
    width: usize,
    d_pred: &mut [f64],
) -> Result<f64> {
    if pred.len() != target.len() || d_pred.len() != pred.len() || width == 0 {
        return Err(Error::Dimension {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let batch = pred.len() / width;
    let mut total = 0.0;
    for (p, t) in pred.chunks_exact(width).zip(target.chunks_exact(width)) {
        total += attribute_loss(p, t)?;
    }
    let scale = 2.0 / (width * batch) as f64;
    for ((d, p), t) in d_pred.iter_mut().zip(pred).zip(target) {
        *d = scale * (p - t);
    }
    Ok(total / batch as f64)
}

/// Index of the largest logit; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
