//! Stratified splitting and per-feature standardization.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::LabeledDataset;
use crate::nn::Matrix;
use crate::rng::{stream, Stream};

/// Train/validation/test fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            val: 0.1,
            test: 0.2,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Spec(format!("split fractions must be >= 0, got {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Sorted row indices of each part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: each class is shuffled with its own sub-stream and cut
/// at `round(train·n)` and `round(val·n)`; the test part takes the rest.
pub fn split_indices(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..dataset.n_classes() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.y()[i] == class).collect();
        let n = members.len();
        if n == 0 {
            continue;
        }
        members.shuffle(&mut stream(spec.seed, Stream::Split, class as u64));
        let n_train = ((spec.train * n as f64).round() as usize).min(n);
        let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
        if spec.train > 0.0 && n_train == 0 {
            return Err(Error::Spec(format!(
                "class {} has {n} samples, too few to place one in train",
                dataset.label_names()[class]
            )));
        }
        out.train.extend_from_slice(&members[..n_train]);
        out.val.extend_from_slice(&members[n_train..n_train + n_val]);
        out.test.extend_from_slice(&members[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// `(train, val, test)` subsets, keeping the full class count and label names.
pub fn split(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let idx = split_indices(dataset, spec)?;
    Ok((
        dataset.subset(&idx.train),
        dataset.subset(&idx.val),
        dataset.subset(&idx.test),
    ))
}

/// Per-feature mean and population standard deviation of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &LabeledDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::contract("cannot standardize on an empty training set"));
        }
        let x = train.x();
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        for row in x.row_iter() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    fn is_constant(&self, k: usize) -> bool {
        self.std[k] <= 1e-12 * self.mean[k].abs().max(1.0)
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::contract(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (k, v) in out.row_mut(r).iter_mut().enumerate() {
                if !self.is_constant(k) {
                    *v = (*v - self.mean[k]) / self.std[k];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        dataset.with_features(self.apply_matrix(dataset.x())?)
    }
}

/// Fit on `train` and apply to `train` and every dataset in `others`.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> Result<(LabeledDataset, Vec<LabeledDataset>, Standardizer)> {
    let s = Standardizer::fit(train)?;
    let t = s.apply(train)?;
    let rest = others.iter().map(|d| s.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((t, rest, s))
}
