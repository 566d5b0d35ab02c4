//! Metric losses that act directly on embeddings or distances.

use super::merge::cosine_with_grad;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Batch mean of `max(0, ‖a−p‖² − ‖a−n‖² + margin)`.
///
/// Returns the loss and gradients for anchor, positive and negative.
pub fn triplet_loss(
    za: &Matrix,
    zp: &Matrix,
    zn: &Matrix,
    margin: f64,
) -> Result<(f64, [Matrix; 3])> {
    if za.shape() != zp.shape() || za.shape() != zn.shape() {
        return Err(Error::contract(format!(
            "triplet_loss: shapes {:?}, {:?}, {:?}",
            za.shape(),
            zp.shape(),
            zn.shape()
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::contract(format!("triplet margin must be > 0, got {margin}")));
    }
    let n = za.rows();
    if n == 0 {
        return Err(Error::contract("triplet_loss: empty batch"));
    }
    let nf = n as f64;
    let (rows, cols) = za.shape();
    let mut ga = Matrix::zeros(rows, cols);
    let mut gp = Matrix::zeros(rows, cols);
    let mut gn = Matrix::zeros(rows, cols);
    let mut loss = 0.0;
    for r in 0..n {
        let (a, p, ng) = (za.row(r), zp.row(r), zn.row(r));
        let dap: f64 = a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum();
        let dan: f64 = a.iter().zip(ng).map(|(x, y)| (x - y) * (x - y)).sum();
        let hinge = dap - dan + margin;
        if hinge > 0.0 {
            loss += hinge;
            for k in 0..cols {
                let d_ap = 2.0 * (a[k] - p[k]) / nf;
                let d_an = 2.0 * (a[k] - ng[k]) / nf;
                ga.set(r, k, d_ap - d_an);
                gp.set(r, k, -d_ap);
                gn.set(r, k, d_an);
            }
        }
    }
    Ok((loss / nf, [ga, gp, gn]))
}

/// Multi-class N-pair loss with cosine logits.
///
/// For anchor `i`: `log(1 + Σ_{j≠i} exp(cos(a_i, p_j) − cos(a_i, p_i)))`, averaged over
/// the batch. Row `j` of `zp` is the positive of row `j` of `za` and a negative for
/// every other anchor.
pub fn npair_loss(za: &Matrix, zp: &Matrix) -> Result<(f64, [Matrix; 2])> {
    if za.shape() != zp.shape() {
        return Err(Error::contract(format!(
            "npair_loss: shapes {:?} and {:?}",
            za.shape(),
            zp.shape()
        )));
    }
    let n = za.rows();
    if n < 2 {
        return Err(Error::contract(format!(
            "npair_loss needs a batch of at least 2 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let cols = za.cols();
    let mut ga = Matrix::zeros(n, cols);
    let mut gp = Matrix::zeros(n, cols);
    let mut loss = 0.0;
    for i in 0..n {
        let sims: Vec<_> = (0..n).map(|j| cosine_with_grad(za.row(i), zp.row(j))).collect();
        let pos = sims[i].0;
        // log(1 + Σ e^{t_j}) as a log-sum-exp over {0} ∪ {t_j}
        let t: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sims[j].0 - pos).collect();
        let m = t.iter().copied().fold(0.0_f64, f64::max);
        let denom = (-m).exp() + t.iter().map(|v| (v - m).exp()).sum::<f64>();
        loss += m + denom.ln();

        let mut total_p = 0.0;
        for (j, s) in sims.iter().enumerate() {
            if j == i {
                continue;
            }
            let pj = ((s.0 - pos) - m).exp() / denom / nf;
            total_p += pj;
            for k in 0..cols {
                ga.row_mut(i)[k] += pj * s.1[k];
                gp.row_mut(j)[k] += pj * s.2[k];
            }
        }
        let (_, du, dv) = &sims[i];
        for k in 0..cols {
            ga.row_mut(i)[k] -= total_p * du[k];
            gp.row_mut(i)[k] -= total_p * dv[k];
        }
    }
    Ok((loss / nf, [ga, gp]))
}

/// Batch mean of `y·d² + (1−y)·max(0, margin − d)²` over an N×1 distance column.
pub fn contrastive_loss(d: &Matrix, y: &[f64], margin: f64) -> Result<(f64, Matrix)> {
    if d.cols() != 1 || d.rows() != y.len() {
        return Err(Error::contract(format!(
            "contrastive_loss: distances {:?} vs {} labels",
            d.shape(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::contract("contrastive_loss: empty batch"));
    }
    if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::contract(format!("contrastive_loss: label {bad} is not binary")));
    }
    let nf = y.len() as f64;
    let mut loss = 0.0;
    let mut g = Matrix::zeros(y.len(), 1);
    for (i, &t) in y.iter().enumerate() {
        let di = d.get(i, 0);
        let gap = (margin - di).max(0.0);
        loss += t * di * di + (1.0 - t) * gap * gap;
        g.set(i, 0, (2.0 * t * di - 2.0 * (1.0 - t) * gap) / nf);
    }
    Ok((loss / nf, g))
}
