//! Embedding-space analysis: k-NN accuracy, similarity search, class correlation, PCA.

mod correlation;
mod export;
mod pca;
mod search;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::LabeledDataset;
use crate::model::Model;
use crate::nn::matrix::norm;
use crate::nn::Matrix;

pub use correlation::{class_correlation_matrix, pearson, CorrelationMode};
pub use export::{read_embeddings_csv, load_embeddings_csv, save_embeddings_csv, save_projection_csv, write_embeddings_csv, write_projection_csv};
pub use pca::pca_project;
pub use search::{knn_accuracies, knn_accuracy, ranked_neighbors, topk_search, Query, SearchHit};

const UNIT_NORM_TOL: f64 = 1e-9;

/// Unit-norm embeddings with their labels and stable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<u64>,
    z: Matrix,
    labels: Vec<usize>,
    label_names: Vec<i64>,
}

impl EmbeddingTable {
    /// `label_names[c]` is the external value of class `c`.
    pub fn new(ids: Vec<u64>, z: Matrix, labels: Vec<usize>, label_names: Vec<i64>) -> Result<Self> {
        if ids.len() != z.rows() || labels.len() != z.rows() {
            return Err(Error::contract(format!(
                "table has {} ids, {} rows and {} labels",
                ids.len(),
                z.rows(),
                labels.len()
            )));
        }
        let unique: HashSet<u64> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(Error::contract("embedding ids are not unique"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        z.ensure_finite("embeddings")?;
        for (i, row) in z.row_iter().enumerate() {
            let n = norm(row);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::contract(format!("embedding row {i} has norm {n}, expected 1")));
            }
        }
        Ok(EmbeddingTable {
            ids,
            z,
            labels,
            label_names,
        })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[i64] {
        &self.label_names
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&v| v == id)
    }
}

/// Inference-mode embedding of every row; ids are row indices.
pub fn embed_dataset(model: &Model, dataset: &LabeledDataset) -> Result<EmbeddingTable> {
    let z = model.embedding().embed_infer(dataset.x())?;
    EmbeddingTable::new(
        (0..dataset.len() as u64).collect(),
        z,
        dataset.y().to_vec(),
        dataset.label_names().to_vec(),
    )
}

/// Accuracy per k plus the class-correlation matrix of one evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub n_samples: usize,
    pub n_classes: usize,
    pub ks: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub correlation_mode: CorrelationMode,
    /// Row-major; `null` marks an undefined entry.
    pub correlation: Vec<Vec<Option<f64>>>,
}

impl EvalReport {
    pub fn build(
        table: &EmbeddingTable,
        ks: &[usize],
        mode: CorrelationMode,
        variant: &str,
        seed: u64,
        dataset_hash: String,
    ) -> Result<Self> {
        Ok(EvalReport {
            variant: variant.to_string(),
            seed,
            dataset_hash,
            n_samples: table.len(),
            n_classes: table.n_classes(),
            ks: ks.to_vec(),
            accuracies: knn_accuracies(table, ks)?,
            correlation_mode: mode,
            correlation: class_correlation_matrix(table, mode)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariantName;
    use crate::training::{build_model, TrainConfig};

    #[test]
    fn table_rejects_bad_rows() {
        let z = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(EmbeddingTable::new(vec![0, 1], z, vec![0, 0], vec![0]).is_err());
        let z = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(EmbeddingTable::new(vec![3, 3], z.clone(), vec![0, 0], vec![0]).is_err());
        assert!(EmbeddingTable::new(vec![0, 1], z, vec![0, 2], vec![0, 1]).is_err());
    }

    #[test]
    fn embed_dataset_is_batch_transparent() {
        let cfg = TrainConfig {
            variant: VariantName::CovNetV2,
            ..TrainConfig::default()
        };
        let m = build_model(&cfg, 4, 2).unwrap();
        let x = Matrix::from_vec(3, 4, (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let ds = LabeledDataset::new(x.clone(), vec![0, 1, 1], 2).unwrap();
        let t = embed_dataset(&m, &ds).unwrap();
        for i in 0..3 {
            let single = m.embedding().embed_infer(&x.select_rows(&[i])).unwrap();
            assert_eq!(single.row(0), t.z().row(i));
        }
        assert_eq!(t, embed_dataset(&m, &ds).unwrap());
        assert!(embed_dataset(&m, &LabeledDataset::new(Matrix::zeros(1, 3), vec![0], 1).unwrap()).is_err());
    }
}
