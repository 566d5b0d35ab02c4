use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{n_class_for, MappingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "covnet-v1")]
    CovNetV1,
    #[serde(rename = "covnet-v2")]
    CovNetV2,
    #[serde(rename = "covnet-v3")]
    CovNetV3,
    #[serde(rename = "siamese")]
    Siamese,
    #[serde(rename = "triplet")]
    Triplet,
    #[serde(rename = "npair")]
    NPair,
}

impl VariantName {
    pub const ALL: [VariantName; 6] = [
        VariantName::CovNetV1,
        VariantName::CovNetV2,
        VariantName::CovNetV3,
        VariantName::Siamese,
        VariantName::Triplet,
        VariantName::NPair,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::CovNetV1 => "covnet-v1",
            VariantName::CovNetV2 => "covnet-v2",
            VariantName::CovNetV3 => "covnet-v3",
            VariantName::Siamese => "siamese",
            VariantName::Triplet => "triplet",
            VariantName::NPair => "npair",
        }
    }

    pub fn mapping(&self) -> MappingKind {
        match self {
            VariantName::CovNetV1 | VariantName::NPair => MappingKind::Im,
            VariantName::CovNetV2 => MappingKind::Iim,
            VariantName::CovNetV3 | VariantName::Siamese => MappingKind::Isim,
            VariantName::Triplet => MappingKind::Tm,
        }
    }

    /// Margin used when the configuration does not set one.
    pub fn default_margin(&self) -> f64 {
        match self {
            VariantName::Triplet => 0.2,
            _ => 1.0,
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantName {
    type Err = Error;

    /// Accepts the canonical names and spelling variants such as `CovNetV2` or `n-pair`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "covnetv1" => Ok(VariantName::CovNetV1),
            "covnetv2" => Ok(VariantName::CovNetV2),
            "covnetv3" => Ok(VariantName::CovNetV3),
            "siamese" => Ok(VariantName::Siamese),
            "triplet" => Ok(VariantName::Triplet),
            "npair" => Ok(VariantName::NPair),
            _ => Err(Error::Usage(format!(
                "unknown variant '{s}'; valid variants: {}",
                VariantName::ALL.map(|v| v.as_str()).join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeKind {
    Covariance,
    EuclideanDistance,
    TripletDistance,
    None,
}

/// Classification head after the merge layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    /// `Dense(n_class)`; softmax is applied inside the loss.
    SoftmaxDense { n_class: usize },
    /// `BatchNorm(input) → Dense(1)`; sigmoid is applied inside the loss.
    SigmoidDense { input: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CategoricalCrossEntropy,
    BinaryCrossEntropy,
    Contrastive,
    Triplet,
    NPair,
}

/// How the Siamese baseline turns a distance into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiameseMode {
    /// `BatchNorm → Dense(1) → sigmoid` head with binary cross-entropy.
    #[default]
    SigmoidHead,
    /// Margin contrastive loss on the raw distance.
    Contrastive,
}

impl FromStr for SiameseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid-head" => Ok(SiameseMode::SigmoidHead),
            "contrastive" => Ok(SiameseMode::Contrastive),
            _ => Err(Error::Usage(format!(
                "unknown siamese mode '{s}'; expected sigmoid-head or contrastive"
            ))),
        }
    }
}

/// One row of the architecture table: mapping, merge, head and loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub name: VariantName,
    pub mapping: MappingKind,
    pub merge: MergeKind,
    pub tail: Option<TailKind>,
    pub loss: LossKind,
    pub margin: f64,
}

impl ModelVariant {
    pub fn new(
        name: VariantName,
        n_classes: usize,
        embedding_dim: usize,
        margin: Option<f64>,
        siamese: SiameseMode,
    ) -> Result<Self> {
        let mapping = name.mapping();
        let margin = margin.unwrap_or_else(|| name.default_margin());
        if !(margin > 0.0) {
            return Err(Error::Spec(format!("margin must be > 0, got {margin}")));
        }
        let n_class = n_class_for(mapping, n_classes);
        let (merge, tail, loss) = match name {
            VariantName::CovNetV1 | VariantName::CovNetV2 => (
                MergeKind::Covariance,
                Some(TailKind::SoftmaxDense { n_class }),
                LossKind::CategoricalCrossEntropy,
            ),
            VariantName::CovNetV3 => (
                MergeKind::Covariance,
                Some(TailKind::SigmoidDense {
                    input: embedding_dim,
                }),
                LossKind::BinaryCrossEntropy,
            ),
            VariantName::Siamese => match siamese {
                SiameseMode::SigmoidHead => (
                    MergeKind::EuclideanDistance,
                    Some(TailKind::SigmoidDense { input: 1 }),
                    LossKind::BinaryCrossEntropy,
                ),
                SiameseMode::Contrastive => {
                    (MergeKind::EuclideanDistance, None, LossKind::Contrastive)
                }
            },
            VariantName::Triplet => (MergeKind::TripletDistance, None, LossKind::Triplet),
            VariantName::NPair => (MergeKind::None, None, LossKind::NPair),
        };
        Ok(ModelVariant {
            name,
            mapping,
            merge,
            tail,
            loss,
            margin,
        })
    }

    /// Checks the binding against the architecture table.
    pub fn validate(&self) -> Result<()> {
        use LossKind as L;
        use MergeKind as M;
        let ok = match self.name {
            VariantName::CovNetV1 => {
                self.mapping == MappingKind::Im
                    && self.merge == M::Covariance
                    && matches!(self.tail, Some(TailKind::SoftmaxDense { .. }))
                    && self.loss == L::CategoricalCrossEntropy
            }
            VariantName::CovNetV2 => {
                self.mapping == MappingKind::Iim
                    && self.merge == M::Covariance
                    && matches!(self.tail, Some(TailKind::SoftmaxDense { .. }))
                    && self.loss == L::CategoricalCrossEntropy
            }
            VariantName::CovNetV3 => {
                self.mapping == MappingKind::Isim
                    && self.merge == M::Covariance
                    && matches!(self.tail, Some(TailKind::SigmoidDense { .. }))
                    && self.loss == L::BinaryCrossEntropy
            }
            VariantName::Siamese => {
                self.mapping == MappingKind::Isim
                    && self.merge == M::EuclideanDistance
                    && match self.loss {
                        L::BinaryCrossEntropy => {
                            matches!(self.tail, Some(TailKind::SigmoidDense { input: 1 }))
                        }
                        L::Contrastive => self.tail.is_none(),
                        _ => false,
                    }
            }
            VariantName::Triplet => {
                self.mapping == MappingKind::Tm
                    && self.merge == M::TripletDistance
                    && self.tail.is_none()
                    && self.loss == L::Triplet
            }
            VariantName::NPair => {
                self.mapping == MappingKind::Im
                    && self.merge == M::None
                    && self.tail.is_none()
                    && self.loss == L::NPair
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "inconsistent bindings for {}: {self:?}",
                self.name
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in VariantName::ALL {
            assert_eq!(v.as_str().parse::<VariantName>().unwrap(), v);
        }
        assert_eq!("CovNetV2".parse::<VariantName>().unwrap(), VariantName::CovNetV2);
        assert_eq!("N-pair".parse::<VariantName>().unwrap(), VariantName::NPair);
    }

    #[test]
    fn bogus_name_lists_all_six() {
        let err = "bogus".parse::<VariantName>().unwrap_err().to_string();
        for v in VariantName::ALL {
            assert!(err.contains(v.as_str()), "{err}");
        }
    }

    #[test]
    fn table_bindings() {
        let v2 = ModelVariant::new(VariantName::CovNetV2, 4, 8, None, SiameseMode::default()).unwrap();
        assert_eq!(v2.tail, Some(TailKind::SoftmaxDense { n_class: 10 }));
        let v3 = ModelVariant::new(VariantName::CovNetV3, 4, 8, None, SiameseMode::default()).unwrap();
        assert_eq!(v3.tail, Some(TailKind::SigmoidDense { input: 8 }));
        for name in VariantName::ALL {
            for mode in [SiameseMode::SigmoidHead, SiameseMode::Contrastive] {
                ModelVariant::new(name, 4, 8, None, mode).unwrap().validate().unwrap();
            }
        }
        let mut bad = v2;
        bad.mapping = MappingKind::Im;
        assert!(bad.validate().is_err());
        let t = ModelVariant::new(VariantName::Triplet, 4, 8, None, SiameseMode::default()).unwrap();
        assert_eq!(t.margin, 0.2);
    }
}
