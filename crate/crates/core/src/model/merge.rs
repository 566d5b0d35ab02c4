//! Merge operations that combine two branch embeddings.

use crate::error::{Error, Result};
use crate::nn::matrix::{dot, norm};
use crate::nn::Matrix;

const COSINE_EPS: f64 = 1e-12;

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn centered(row: &[f64]) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|v| v - mean).collect()
}

/// Per row, the element-wise product of the mean-centred rows: `(z − z̄) ⊙ (z′ − z̄′)`.
///
/// Summing a row gives the unnormalised covariance; its sign says whether the
/// two embeddings are positively related, unrelated, or negatively related.
pub fn covariance_vector(z: &Matrix, z2: &Matrix) -> Result<Matrix> {
    same_shape(z, z2, "covariance_vector")?;
    let mut out = Matrix::zeros(z.rows(), z.cols());
    if z.cols() == 0 {
        return Ok(out);
    }
    for r in 0..z.rows() {
        let a = centered(z.row(r));
        let b = centered(z2.row(r));
        for ((o, x), y) in out.row_mut(r).iter_mut().zip(&a).zip(&b) {
            *o = x * y;
        }
    }
    Ok(out)
}

/// Gradients of [`covariance_vector`] with respect to both inputs.
pub fn covariance_vector_backward(z: &Matrix, z2: &Matrix, dv: &Matrix) -> Result<(Matrix, Matrix)> {
    same_shape(z, z2, "covariance_vector_backward")?;
    same_shape(z, dv, "covariance_vector_backward")?;
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut dz2 = Matrix::zeros(z.rows(), z.cols());
    let q = z.cols() as f64;
    for r in 0..z.rows() {
        let a = centered(z.row(r));
        let b = centered(z2.row(r));
        let g = dv.row(r);
        // ∂/∂z_k of Σ_i g_i a_i b_i is g_k b_k − mean(g ⊙ b), since a = (I − 11ᵀ/q) z
        let gb: Vec<f64> = g.iter().zip(&b).map(|(x, y)| x * y).collect();
        let ga: Vec<f64> = g.iter().zip(&a).map(|(x, y)| x * y).collect();
        let mgb = gb.iter().sum::<f64>() / q;
        let mga = ga.iter().sum::<f64>() / q;
        for (d, v) in dz.row_mut(r).iter_mut().zip(&gb) {
            *d = v - mgb;
        }
        for (d, v) in dz2.row_mut(r).iter_mut().zip(&ga) {
            *d = v - mga;
        }
    }
    Ok((dz, dz2))
}

/// Sample covariance `Σ (z_i − z̄)(z′_i − z̄′) / (s − 1)`.
pub fn covariance_scalar(z: &[f64], z2: &[f64]) -> Result<f64> {
    if z.len() != z2.len() {
        return Err(Error::contract(format!(
            "covariance_scalar: lengths {} and {} differ",
            z.len(),
            z2.len()
        )));
    }
    if z.len() < 2 {
        return Err(Error::contract("covariance_scalar needs at least 2 components"));
    }
    let a = centered(z);
    let b = centered(z2);
    Ok(dot(&a, &b) / (z.len() - 1) as f64)
}

/// Per-row Euclidean distance, as an N×1 column.
pub fn euclidean_distance(z: &Matrix, z2: &Matrix) -> Result<Matrix> {
    same_shape(z, z2, "euclidean_distance")?;
    let mut d = Matrix::zeros(z.rows(), 1);
    for r in 0..z.rows() {
        let s: f64 = z
            .row(r)
            .iter()
            .zip(z2.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.set(r, 0, s.sqrt());
    }
    Ok(d)
}

/// Gradients of [`euclidean_distance`]; rows at distance zero get zero gradient.
pub fn euclidean_distance_backward(
    z: &Matrix,
    z2: &Matrix,
    d: &Matrix,
    dd: &Matrix,
) -> Result<(Matrix, Matrix)> {
    same_shape(z, z2, "euclidean_distance_backward")?;
    same_shape(d, dd, "euclidean_distance_backward")?;
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut dz2 = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let dist = d.get(r, 0);
        if dist == 0.0 {
            continue;
        }
        let s = dd.get(r, 0) / dist;
        for k in 0..z.cols() {
            let g = s * (z.get(r, k) - z2.get(r, k));
            dz.set(r, k, g);
            dz2.set(r, k, -g);
        }
    }
    Ok((dz, dz2))
}

/// `u·v / (‖u‖‖v‖)` with the denominator floored at 1e-12.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let denom = (norm(u) * norm(v)).max(COSINE_EPS);
    (dot(u, v) / denom).clamp(-1.0, 1.0)
}

/// Cosine similarity with its gradients `(∂c/∂u, ∂c/∂v)`.
pub fn cosine_with_grad(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let nu = norm(u).max(COSINE_EPS);
    let nv = norm(v).max(COSINE_EPS);
    let c = dot(u, v) / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - c * b / (nv * nv))
        .collect();
    (c, du, dv)
}
