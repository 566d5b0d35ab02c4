//! Softmax, categorical cross-entropy and sigmoid binary cross-entropy.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Result<Matrix> {
    logits.ensure_finite("logits")?;
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Log-softmax of one row, computed from the max-shifted log-sum-exp.
fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Batch-mean categorical cross-entropy against one-hot targets.
///
/// Returns the loss and `∂loss/∂logits = (softmax − onehot) / batch`.
pub fn ce_loss(logits: &Matrix, onehot: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != onehot.shape() {
        return Err(Error::contract(format!(
            "ce_loss: logits {:?} vs targets {:?}",
            logits.shape(),
            onehot.shape()
        )));
    }
    for (r, row) in onehot.row_iter().enumerate() {
        let ones = row.iter().filter(|v| **v == 1.0).count();
        let zeros = row.iter().filter(|v| **v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::contract(format!("ce_loss: target row {r} is not one-hot")));
        }
    }
    let mut classes = Vec::with_capacity(onehot.rows());
    for row in onehot.row_iter() {
        classes.push(row.iter().position(|v| *v == 1.0).unwrap_or(0));
    }
    ce_loss_indices(logits, &classes)
}

/// Same as [`ce_loss`] with targets given as class indices.
pub fn ce_loss_indices(logits: &Matrix, classes: &[usize]) -> Result<(f64, Matrix)> {
    logits.ensure_finite("logits")?;
    let n = logits.rows();
    if classes.len() != n {
        return Err(Error::contract(format!(
            "ce_loss: {} targets for {} rows",
            classes.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::contract("ce_loss: empty batch"));
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, logits.cols());
    for (r, &c) in classes.iter().enumerate() {
        if c >= logits.cols() {
            return Err(Error::contract(format!(
                "ce_loss: class {c} out of range for {} logits",
                logits.cols()
            )));
        }
        let logp = log_softmax_row(logits.row(r));
        loss -= logp[c];
        let g = grad.row_mut(r);
        for (j, lp) in logp.iter().enumerate() {
            g[j] = (lp.exp() - if j == c { 1.0 } else { 0.0 }) / nf;
        }
    }
    Ok((loss / nf, grad))
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Batch-mean binary cross-entropy on sigmoid logits (`batch×1`).
///
/// Uses `−[y log σ(l) + (1−y) log(1−σ(l))] = softplus(l) − y·l`.
pub fn be_loss(logit: &Matrix, y: &[f64]) -> Result<(f64, Matrix)> {
    logit.ensure_finite("logits")?;
    if logit.cols() != 1 || logit.rows() != y.len() {
        return Err(Error::contract(format!(
            "be_loss: logits {:?} vs {} targets",
            logit.shape(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::contract("be_loss: empty batch"));
    }
    if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::contract(format!("be_loss: target {bad} is not binary")));
    }
    let nf = y.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(y.len(), 1);
    for (i, &t) in y.iter().enumerate() {
        let l = logit.get(i, 0);
        loss += softplus(l) - t * l;
        grad.set(i, 0, (sigmoid(l) - t) / nf);
    }
    Ok((loss / nf, grad))
}
