//! Principal-component projection of an embedding table.

use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Project centred embeddings onto the top `dims` principal directions.
///
/// Each direction is signed so that its largest-magnitude loading is positive.
pub fn pca_project(table: &EmbeddingTable, dims: usize) -> Result<Matrix> {
    let n = table.len();
    let q = table.dim();
    if n < 3 {
        return Err(Error::contract(format!("projection needs at least 3 samples, got {n}")));
    }
    if dims < 1 || dims > q {
        return Err(Error::contract(format!("cannot project {q}-d embeddings to {dims} dims")));
    }
    let z = table.z();
    let mean: Vec<f64> = z.col_sums().into_iter().map(|s| s / n as f64).collect();
    let centred = DMatrix::from_fn(n, q, |r, c| z.get(r, c) - mean[c]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut out = Matrix::zeros(n, dims);
    for (d, &k) in order.iter().take(dims).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = (0..q)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("q >= 1");
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for r in 0..n {
            let s: f64 = centred.row(r).iter().zip(&v).map(|(a, b)| a * b).sum();
            out.set(r, d, s);
        }
    }
    Ok(out)
}
