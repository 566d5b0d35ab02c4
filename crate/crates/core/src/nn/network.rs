use serde::{Deserialize, Serialize};

use super::layer::{Cache, Layer, LayerSpec, Mode};
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// A chain of layers applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(input_dim: usize, specs: &[LayerSpec], rng: &mut Prng) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| Layer::new(*s, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(input_dim, layers)
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut w = input_dim;
        for (i, l) in layers.iter().enumerate() {
            w = l
                .spec()
                .output_width(w)
                .map_err(|e| Error::contract(format!("layer {i}: {e}")))?;
        }
        Ok(Sequential { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .try_fold(self.input_dim, |w, l| l.spec().output_width(w))
            .expect("widths validated on construction")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| l.params().iter().map(Vec::len))
            .collect()
    }

    /// Every parameter array, in layer order.
    pub fn param_arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut().iter_mut())
            .collect()
    }

    pub fn param_arrays(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.params().iter()).collect()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::contract(format!(
                "network expects {} input columns, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Forward pass; in train mode BatchNorm running statistics are updated.
    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut Prng) -> Result<(Matrix, Vec<Cache>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in self.layers.iter_mut() {
            let (y, c) = l.forward(&h, mode, rng)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    /// Forward pass without touching any layer state.
    pub fn forward_pure(&self, x: &Matrix, mode: Mode, rng: &mut Prng) -> Result<(Matrix, Vec<Cache>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let (y, c) = l.forward_pure(&h, mode, rng)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    /// Inference-mode output.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        // the generator is never touched in infer mode
        let mut rng = crate::rng::prng(0);
        Ok(self.forward_pure(x, Mode::Infer, &mut rng)?.0)
    }

    /// Returns `∂L/∂x` and one gradient array per parameter array, in layer order.
    pub fn backward(&self, caches: &[Cache], dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        if caches.len() != self.layers.len() {
            return Err(Error::contract(format!(
                "{} caches for {} layers",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = dy.clone();
        for (l, c) in self.layers.iter().zip(caches).rev() {
            let (dx, dp) = l.backward(c, &g)?;
            per_layer.push(dp);
            g = dx;
        }
        per_layer.reverse();
        Ok((g, per_layer.into_iter().flatten().collect()))
    }
}

/// Element-wise `acc += other` over congruent gradient lists.
pub fn accumulate(acc: &mut [Vec<f64>], other: &[Vec<f64>]) {
    for (a, o) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(o) {
            *x += y;
        }
    }
}
