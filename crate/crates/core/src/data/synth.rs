//! Gaussian blob generators.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::LabeledDataset;
use crate::nn::Matrix;
use crate::rng::{stream, Prng, Stream};

/// Parameters of a synthetic blob dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation around each class center.
    pub spread: f64,
    /// Distance of every (super)class center from the origin.
    pub center_scale: f64,
    /// Class → superclass; when set the data is hierarchical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superclass_map: Option<Vec<usize>>,
    /// Ratio of superclass center magnitude to the class offset magnitude.
    pub super_ratio: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            classes: 4,
            per_class: 200,
            dim: 20,
            spread: 1.0,
            center_scale: 6.0,
            superclass_map: None,
            super_ratio: 5.0,
            seed: 42,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 {
            return Err(Error::Spec("classes must be >= 1".into()));
        }
        if self.per_class < 2 {
            return Err(Error::Spec(format!(
                "per_class must be >= 2 so every sample has a classmate, got {}",
                self.per_class
            )));
        }
        if self.dim < 1 {
            return Err(Error::Spec("dim must be >= 1".into()));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::Spec(format!("spread must be finite and >= 0, got {}", self.spread)));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::Spec(format!(
                "center_scale must be finite and > 0, got {}",
                self.center_scale
            )));
        }
        if !(self.super_ratio > 0.0 && self.super_ratio.is_finite()) {
            return Err(Error::Spec(format!("super_ratio must be > 0, got {}", self.super_ratio)));
        }
        if let Some(map) = &self.superclass_map {
            if map.len() != self.classes {
                return Err(Error::Spec(format!(
                    "superclass_map has {} entries for {} classes",
                    map.len(),
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

fn unit_direction(dim: usize, rng: &mut Prng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn sample_around(centers: &[Vec<f64>], spec: &BlobSpec, rng: &mut Prng) -> Result<LabeledDataset> {
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut y = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &m in center {
                let e: f64 = rng.sample(StandardNormal);
                data.push(m + spec.spread * e);
            }
            y.push(c);
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, spec.dim, data)?, y, spec.classes)
}

/// Isotropic blobs: one center per class at distance `center_scale` from the origin.
///
/// Samples are laid out class by class.
pub fn gen_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    if spec.superclass_map.is_some() {
        return Err(Error::Spec("gen_blobs does not take a superclass_map".into()));
    }
    let mut rng = stream(spec.seed, Stream::Data, 0);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            unit_direction(spec.dim, &mut rng)
                .into_iter()
                .map(|v| v * spec.center_scale)
                .collect()
        })
        .collect();
    sample_around(&centers, spec, &mut rng)
}

/// Two-level blobs: superclass centers at `center_scale`, each class center
/// offset from its superclass center by `center_scale / super_ratio`.
pub fn gen_hierarchical(spec: &BlobSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let map = spec
        .superclass_map
        .as_ref()
        .ok_or_else(|| Error::Spec("gen_hierarchical needs a superclass_map".into()))?;
    let n_super = map.iter().max().map_or(0, |m| m + 1);
    let mut rng = stream(spec.seed, Stream::Data, 0);
    let supers: Vec<Vec<f64>> = (0..n_super)
        .map(|_| {
            unit_direction(spec.dim, &mut rng)
                .into_iter()
                .map(|v| v * spec.center_scale)
                .collect()
        })
        .collect();
    let sub = spec.center_scale / spec.super_ratio;
    let centers: Vec<Vec<f64>> = map
        .iter()
        .map(|&s| {
            let d = unit_direction(spec.dim, &mut rng);
            supers[s].iter().zip(d).map(|(c, u)| c + sub * u).collect()
        })
        .collect();
    sample_around(&centers, spec, &mut rng)
}

/// Dispatches on whether `spec` carries a superclass map.
pub fn generate(spec: &BlobSpec) -> Result<LabeledDataset> {
    if spec.superclass_map.is_some() {
        gen_hierarchical(spec)
    } else {
        gen_blobs(spec)
    }
}
