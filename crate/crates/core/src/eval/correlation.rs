//! Pearson correlation between classes in embedding space.

use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};

/// How class-level correlation is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    /// Correlation between the two class centroids.
    #[default]
    Centroid,
    /// Mean correlation over all cross-class sample pairs.
    Sample,
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(CorrelationMode::Centroid),
            "sample" => Ok(CorrelationMode::Sample),
            _ => Err(Error::Usage(format!(
                "unknown correlation mode '{s}'; expected centroid or sample"
            ))),
        }
    }
}

/// Pearson correlation over vector components; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if denom <= f64::MIN_POSITIVE {
        return None;
    }
    Some((sab / denom).clamp(-1.0, 1.0))
}

fn centroids(table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; table.dim()]; table.n_classes()];
    let mut counts = vec![0usize; table.n_classes()];
    for (row, &l) in table.z().row_iter().zip(table.labels()) {
        sums[l].iter_mut().zip(row).for_each(|(s, v)| *s += v);
        counts[l] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// C×C correlation matrix; the diagonal is 1 and undefined entries are `None`.
pub fn class_correlation_matrix(table: &EmbeddingTable, mode: CorrelationMode) -> Result<Vec<Vec<Option<f64>>>> {
    if table.dim() < 2 {
        return Err(Error::contract("correlation needs embeddings with q >= 2"));
    }
    let c = table.n_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in table.labels().iter().enumerate() {
        members[l].push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!(
            "class {} has no samples",
            table.label_names()[empty]
        )));
    }
    let cents = centroids(table);
    let mut m = vec![vec![None; c]; c];
    for a in 0..c {
        m[a][a] = Some(1.0);
        for b in a + 1..c {
            let v = match mode {
                CorrelationMode::Centroid => pearson(&cents[a], &cents[b]),
                CorrelationMode::Sample => {
                    let z = table.z();
                    let vals: Vec<f64> = members[a]
                        .iter()
                        .flat_map(|&i| members[b].iter().map(move |&j| (i, j)))
                        .filter_map(|(i, j)| pearson(z.row(i), z.row(j)))
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            m[a][b] = v;
            m[b][a] = v;
        }
    }
    Ok(m)
}
