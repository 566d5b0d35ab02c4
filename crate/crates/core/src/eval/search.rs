//! Cosine k-NN accuracy and top-k retrieval.

use std::cmp::Ordering;

use serde::Serialize;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::cosine_similarity;

/// Descending similarity, then ascending row index.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Every other row of the table ranked for query row `i`.
pub fn ranked_neighbors(table: &EmbeddingTable, i: usize) -> Vec<(usize, f64)> {
    let z = table.z();
    let mut sims: Vec<(usize, f64)> = (0..table.len())
        .filter(|&j| j != i)
        .map(|j| (j, cosine_similarity(z.row(i), z.row(j))))
        .collect();
    sims.sort_by(rank);
    sims
}

/// Accuracy for each `k`: matching-label neighbours among the k nearest, over `N·k`.
pub fn knn_accuracies(table: &EmbeddingTable, ks: &[usize]) -> Result<Vec<f64>> {
    let n = table.len();
    for &k in ks {
        if k < 1 || k + 1 > n {
            return Err(Error::Usage(format!("k = {k} out of range 1..={}", n.saturating_sub(1))));
        }
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let mut hits = vec![0usize; ks.len()];
    for i in 0..n {
        let mut sims: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, cosine_similarity(table.z().row(i), table.z().row(j))))
            .collect();
        if kmax < sims.len() {
            sims.select_nth_unstable_by(kmax - 1, rank);
            sims.truncate(kmax);
        }
        sims.sort_by(rank);
        let label = table.labels()[i];
        let mut running = 0;
        let mut prefix = Vec::with_capacity(kmax + 1);
        prefix.push(0);
        for &(j, _) in &sims {
            running += usize::from(table.labels()[j] == label);
            prefix.push(running);
        }
        for (h, &k) in hits.iter_mut().zip(ks) {
            *h += prefix[k];
        }
    }
    Ok(ks
        .iter()
        .zip(hits)
        .map(|(&k, h)| h as f64 / (n * k) as f64)
        .collect())
}

pub fn knn_accuracy(table: &EmbeddingTable, k: usize) -> Result<f64> {
    Ok(knn_accuracies(table, &[k])?[0])
}

/// A stored sample or an outside vector, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Id(u64),
    Vector { z: Vec<f64>, label: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub id: u64,
    pub label: i64,
    pub similarity: f64,
    /// Whether the hit shares the query's label; unknown for unlabelled queries.
    pub relevant: Option<bool>,
}

/// The `k` most cosine-similar samples to `query`; an internal query never returns itself.
pub fn topk_search(table: &EmbeddingTable, query: &Query, k: usize) -> Result<Vec<SearchHit>> {
    let z = table.z();
    let (vector, label, own): (&[f64], Option<usize>, Option<usize>) = match query {
        Query::Id(id) => {
            let i = table
                .position(*id)
                .ok_or_else(|| Error::Usage(format!("unknown query id {id}")))?;
            (z.row(i), Some(table.labels()[i]), Some(i))
        }
        Query::Vector { z: v, label } => {
            if v.len() != table.dim() {
                return Err(Error::contract(format!(
                    "query has {} components, table has {}",
                    v.len(),
                    table.dim()
                )));
            }
            (v.as_slice(), *label, None)
        }
    };
    let available = table.len() - usize::from(own.is_some());
    if k < 1 || k > available {
        return Err(Error::Usage(format!("k = {k} out of range 1..={available}")));
    }
    let mut sims: Vec<(usize, f64)> = (0..table.len())
        .filter(|&j| Some(j) != own)
        .map(|j| (j, cosine_similarity(vector, z.row(j))))
        .collect();
    sims.sort_by(rank);
    Ok(sims
        .into_iter()
        .take(k)
        .map(|(j, s)| SearchHit {
            id: table.ids()[j],
            label: table.label_names()[table.labels()[j]],
            similarity: s,
            relevant: label.map(|l| l == table.labels()[j]),
        })
        .collect())
}
