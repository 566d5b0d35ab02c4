//! Shared-weight embedding network, merge layers, heads and the six model variants.

pub mod merge;
pub mod objective;
pub mod variant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{LabelKind, LabeledDataset, MappedSet, PairSet, TripletSet};
use crate::nn::network::accumulate;
use crate::nn::{be_loss, ce_loss_indices, Cache, LayerSpec, Matrix, Mode, Sequential};
use crate::rng::Prng;

pub use merge::{
    cosine_similarity, covariance_scalar, covariance_vector, covariance_vector_backward,
    euclidean_distance,
};
pub use objective::{contrastive_loss, npair_loss, triplet_loss};
pub use variant::{LossKind, MergeKind, ModelVariant, SiameseMode, TailKind, VariantName};

/// Shape of the dense embedding stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Hidden widths, each followed by ReLU (and optionally BatchNorm and Dropout).
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub batch_norm: bool,
    /// Dropout after each hidden block; 0 disables it.
    pub dropout: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![32],
            embedding_dim: 16,
            batch_norm: false,
            dropout: 0.0,
        }
    }
}

impl NetworkConfig {
    /// `[Dense(h) ReLU (BN) (Dropout)]* Dense(q) Tanh L2Norm`.
    pub fn layer_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut w = input_dim;
        for &h in &self.hidden {
            specs.push(LayerSpec::Dense {
                input: w,
                output: h,
            });
            specs.push(LayerSpec::Relu);
            if self.batch_norm {
                specs.push(LayerSpec::BatchNorm { dim: h });
            }
            if self.dropout > 0.0 {
                specs.push(LayerSpec::Dropout { rate: self.dropout });
            }
            w = h;
        }
        specs.push(LayerSpec::Dense {
            input: w,
            output: self.embedding_dim,
        });
        specs.push(LayerSpec::Tanh);
        specs.push(LayerSpec::L2Norm);
        specs
    }
}

/// The embedding network `F`: any layer stack ending in `Dense(q) → Tanh → L2Norm`.
///
/// Both branches of a pair run through this one network, so there is a single
/// parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNetwork {
    net: Sequential,
}

impl EmbeddingNetwork {
    pub fn new(input_dim: usize, specs: &[LayerSpec], rng: &mut Prng) -> Result<Self> {
        Self::from_sequential(Sequential::new(input_dim, specs, rng)?)
    }

    pub fn from_sequential(net: Sequential) -> Result<Self> {
        let specs = net.specs();
        let n = specs.len();
        let ok = n >= 3
            && matches!(specs[n - 3], LayerSpec::Dense { .. })
            && specs[n - 2] == LayerSpec::Tanh
            && specs[n - 1] == LayerSpec::L2Norm;
        if !ok {
            return Err(Error::contract(
                "embedding network must end with Dense, Tanh, L2Norm",
            ));
        }
        Ok(EmbeddingNetwork { net })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    /// `z = F(x)`; train mode applies dropout and updates BatchNorm statistics.
    pub fn embed(&mut self, x: &Matrix, mode: Mode, rng: &mut Prng) -> Result<Matrix> {
        Ok(self.net.forward(x, mode, rng)?.0)
    }

    /// Inference-mode embedding without touching any state.
    pub fn embed_infer(&self, x: &Matrix) -> Result<Matrix> {
        self.net.infer(x)
    }
}

/// Inputs for one optimisation step, already gathered from the dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Pairs {
        left: Matrix,
        right: Matrix,
        labels: Vec<usize>,
    },
    Triplets {
        anchor: Matrix,
        positive: Matrix,
        negative: Matrix,
    },
}

impl Batch {
    pub fn from_pairs(x: &Matrix, set: &PairSet, idx: &[usize]) -> Batch {
        let left: Vec<usize> = idx.iter().map(|&k| set.pairs[k].0).collect();
        let right: Vec<usize> = idx.iter().map(|&k| set.pairs[k].1).collect();
        Batch::Pairs {
            left: x.select_rows(&left),
            right: x.select_rows(&right),
            labels: idx.iter().map(|&k| set.labels[k]).collect(),
        }
    }

    pub fn from_triplets(x: &Matrix, set: &TripletSet, idx: &[usize]) -> Batch {
        let pick = |f: fn(&(usize, usize, usize)) -> usize| -> Matrix {
            let rows: Vec<usize> = idx.iter().map(|&k| f(&set.triples[k])).collect();
            x.select_rows(&rows)
        };
        Batch::Triplets {
            anchor: pick(|t| t.0),
            positive: pick(|t| t.1),
            negative: pick(|t| t.2),
        }
    }

    /// Rows `idx` of a mapped set over `dataset`.
    pub fn gather(dataset: &LabeledDataset, set: &MappedSet, idx: &[usize]) -> Batch {
        match set {
            MappedSet::Pairs(p) => Batch::from_pairs(dataset.x(), p, idx),
            MappedSet::Triplets(t) => Batch::from_triplets(dataset.x(), t, idx),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Batch::Pairs { labels, .. } => labels.len(),
            Batch::Triplets { anchor, .. } => anchor.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> Vec<&Matrix> {
        match self {
            Batch::Pairs { left, right, .. } => vec![left, right],
            Batch::Triplets {
                anchor,
                positive,
                negative,
            } => vec![anchor, positive, negative],
        }
    }

    pub fn inputs_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Batch::Pairs { left, right, .. } => vec![left, right],
            Batch::Triplets {
                anchor,
                positive,
                negative,
            } => vec![anchor, positive, negative],
        }
    }
}

/// Loss of one batch with gradients for every parameter array and every input.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    /// Embedding parameters first, then the head, matching [`Model::param_arrays`].
    pub grads: Vec<Vec<f64>>,
    /// One matrix per batch input (left/right or anchor/positive/negative).
    pub input_grads: Vec<Matrix>,
}

/// An embedding network bound to a variant's merge, head and loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    variant: ModelVariant,
    embedding: EmbeddingNetwork,
    tail: Option<Sequential>,
}

fn tail_specs(kind: TailKind, embedding_dim: usize) -> Vec<LayerSpec> {
    match kind {
        TailKind::SoftmaxDense { n_class } => vec![LayerSpec::Dense {
            input: embedding_dim,
            output: n_class,
        }],
        TailKind::SigmoidDense { input } => vec![
            LayerSpec::BatchNorm { dim: input },
            LayerSpec::Dense { input, output: 1 },
        ],
    }
}

fn tail_input_dim(kind: TailKind, embedding_dim: usize) -> usize {
    match kind {
        TailKind::SoftmaxDense { .. } => embedding_dim,
        TailKind::SigmoidDense { input } => input,
    }
}

impl Model {
    pub fn new(variant: ModelVariant, embedding: EmbeddingNetwork, rng: &mut Prng) -> Result<Self> {
        variant.validate()?;
        let q = embedding.embedding_dim();
        let tail = match variant.tail {
            Some(kind) => Some(Sequential::new(
                tail_input_dim(kind, q),
                &tail_specs(kind, q),
                rng,
            )?),
            None => None,
        };
        Self::from_parts(variant, embedding, tail)
    }

    /// Assemble a model from stored parts, checking that the head fits the variant.
    pub fn from_parts(
        variant: ModelVariant,
        embedding: EmbeddingNetwork,
        tail: Option<Sequential>,
    ) -> Result<Self> {
        variant.validate()?;
        let q = embedding.embedding_dim();
        match (variant.tail, &tail) {
            (Some(kind), Some(t)) => {
                if t.specs() != tail_specs(kind, q) || t.input_dim() != tail_input_dim(kind, q) {
                    return Err(Error::contract(format!(
                        "head layers {:?} do not match {kind:?}",
                        t.specs()
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::contract(format!(
                    "variant {} and head presence disagree",
                    variant.name
                )))
            }
        }
        if variant.merge == MergeKind::Covariance {
            if let Some(TailKind::SigmoidDense { input }) = variant.tail {
                if input != q {
                    return Err(Error::contract("covariance head width must equal q"));
                }
            }
        }
        Ok(Model {
            variant,
            embedding,
            tail,
        })
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn embedding(&self) -> &EmbeddingNetwork {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingNetwork {
        &mut self.embedding
    }

    pub fn tail(&self) -> Option<&Sequential> {
        self.tail.as_ref()
    }

    pub fn tail_mut(&mut self) -> Option<&mut Sequential> {
        self.tail.as_mut()
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut s = self.embedding.net.param_shapes();
        if let Some(t) = &self.tail {
            s.extend(t.param_shapes());
        }
        s
    }

    pub fn param_arrays(&self) -> Vec<&Vec<f64>> {
        let mut p = self.embedding.net.param_arrays();
        if let Some(t) = &self.tail {
            p.extend(t.param_arrays());
        }
        p
    }

    /// The parameter set Ω = φ ∪ ψ, embedding arrays first.
    pub fn param_arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut p = self.embedding.net.param_arrays_mut();
        if let Some(t) = self.tail.as_mut() {
            p.extend(t.param_arrays_mut());
        }
        p
    }

    /// Whether a mapped set carries the labels this variant's loss needs.
    pub fn accepts(&self, set: &MappedSet) -> Result<()> {
        let ok = match (self.variant.loss, set) {
            (LossKind::CategoricalCrossEntropy, MappedSet::Pairs(p)) => match (p.kind, self.variant.tail) {
                (LabelKind::Categorical(n), Some(TailKind::SoftmaxDense { n_class })) => n == n_class,
                _ => false,
            },
            (LossKind::BinaryCrossEntropy | LossKind::Contrastive, MappedSet::Pairs(p)) => {
                p.kind == LabelKind::Binary
            }
            (LossKind::NPair, MappedSet::Pairs(_)) => true,
            (LossKind::Triplet, MappedSet::Triplets(_)) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "mapped set does not fit variant {} ({:?} loss)",
                self.variant.name, self.variant.loss
            )))
        }
    }

    /// Loss and gradients for one batch.
    ///
    /// Every branch runs through the same embedding network and the branch
    /// gradients are summed into its single parameter set.
    pub fn forward_backward(&mut self, batch: &Batch, mode: Mode, rng: &mut Prng) -> Result<StepOutput> {
        self.pass(batch, mode, rng, true)
    }

    /// Loss only, in inference mode, leaving the model untouched.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let mut scratch = self.clone();
        let mut rng = crate::rng::prng(0);
        Ok(scratch.pass(batch, Mode::Infer, &mut rng, false)?.loss)
    }

    /// Loss and gradients on rows `idx` of a mapped set over `dataset`.
    pub fn forward_backward_on(
        &mut self,
        dataset: &LabeledDataset,
        set: &MappedSet,
        idx: &[usize],
        mode: Mode,
        rng: &mut Prng,
    ) -> Result<StepOutput> {
        self.accepts(set)?;
        let batch = Batch::gather(dataset, set, idx);
        self.forward_backward(&batch, mode, rng)
    }

    pub(crate) fn pass(
        &mut self,
        batch: &Batch,
        mode: Mode,
        rng: &mut Prng,
        want_grads: bool,
    ) -> Result<StepOutput> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let inputs = batch.inputs();
        let mut embedded = Vec::with_capacity(inputs.len());
        for x in &inputs {
            embedded.push(self.embedding.net.forward(x, mode, rng)?);
        }
        let zs: Vec<&Matrix> = embedded.iter().map(|(z, _)| z).collect();
        let margin = self.variant.margin;

        let (loss, dzs, tail_grads) = match self.variant.loss {
            LossKind::CategoricalCrossEntropy | LossKind::BinaryCrossEntropy => {
                let (zl, zr) = (zs[0], zs[1]);
                let labels = match batch {
                    Batch::Pairs { labels, .. } => labels,
                    Batch::Triplets { .. } => {
                        return Err(Error::contract("classification head needs a pair batch"))
                    }
                };
                let merged = match self.variant.merge {
                    MergeKind::Covariance => covariance_vector(zl, zr)?,
                    MergeKind::EuclideanDistance => euclidean_distance(zl, zr)?,
                    other => return Err(Error::contract(format!("{other:?} cannot feed a head"))),
                };
                let tail = self
                    .tail
                    .as_mut()
                    .ok_or_else(|| Error::contract("variant needs a head"))?;
                let (logits, tail_caches) = tail.forward(&merged, mode, rng)?;
                let (loss, dlogits) = if self.variant.loss == LossKind::CategoricalCrossEntropy {
                    ce_loss_indices(&logits, labels)?
                } else {
                    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                    be_loss(&logits, &y)?
                };
                if !want_grads {
                    (loss, Vec::new(), Vec::new())
                } else {
                    let (dmerged, tg) = tail.backward(&tail_caches, &dlogits)?;
                    let (dl, dr) = match self.variant.merge {
                        MergeKind::Covariance => covariance_vector_backward(zl, zr, &dmerged)?,
                        _ => merge::euclidean_distance_backward(zl, zr, &merged, &dmerged)?,
                    };
                    (loss, vec![dl, dr], tg)
                }
            }
            LossKind::Contrastive => {
                let labels = match batch {
                    Batch::Pairs { labels, .. } => labels,
                    Batch::Triplets { .. } => {
                        return Err(Error::contract("contrastive loss needs a pair batch"))
                    }
                };
                let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                let d = euclidean_distance(zs[0], zs[1])?;
                let (loss, dd) = contrastive_loss(&d, &y, margin)?;
                let (dl, dr) = merge::euclidean_distance_backward(zs[0], zs[1], &d, &dd)?;
                (loss, vec![dl, dr], Vec::new())
            }
            LossKind::Triplet => {
                if zs.len() != 3 {
                    return Err(Error::contract("triplet loss needs a triplet batch"));
                }
                let (loss, [ga, gp, gn]) = triplet_loss(zs[0], zs[1], zs[2], margin)?;
                (loss, vec![ga, gp, gn], Vec::new())
            }
            LossKind::NPair => {
                if zs.len() != 2 {
                    return Err(Error::contract("n-pair loss needs a pair batch"));
                }
                let (loss, [ga, gp]) = npair_loss(zs[0], zs[1])?;
                (loss, vec![ga, gp], Vec::new())
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss is {loss}")));
        }
        if !want_grads {
            return Ok(StepOutput {
                loss,
                grads: Vec::new(),
                input_grads: Vec::new(),
            });
        }

        let mut grads: Vec<Vec<f64>> = self
            .embedding
            .net
            .param_shapes()
            .into_iter()
            .map(|n| vec![0.0; n])
            .collect();
        let mut input_grads = Vec::with_capacity(dzs.len());
        for ((_, caches), dz) in embedded.iter().zip(&dzs) {
            let caches: &[Cache] = caches;
            let (dx, g) = self.embedding.net.backward(caches, dz)?;
            accumulate(&mut grads, &g);
            input_grads.push(dx);
        }
        grads.extend(tail_grads);
        Ok(StepOutput {
            loss,
            grads,
            input_grads,
        })
    }
}
