use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Rows whose norm falls below this are divided by it instead.
pub const L2_NORM_EPS: f64 = 1e-12;
pub const BATCH_NORM_EPS: f64 = 1e-5;
/// Weight given to the previous running statistic on each update.
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    Tanh,
    BatchNorm { dim: usize },
    Dropout { rate: f64 },
    L2Norm,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { input, output } if input == 0 || output == 0 => Err(
                Error::contract(format!("dense layer needs positive widths, got {input}->{output}")),
            ),
            LayerSpec::BatchNorm { dim: 0 } => {
                Err(Error::contract("batch norm needs a positive width"))
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => Err(Error::contract(
                format!("dropout rate must be in [0, 1), got {rate}"),
            )),
            _ => Ok(()),
        }
    }

    /// Output width given the incoming width, or an error if they do not fit.
    pub fn output_width(&self, input_width: usize) -> Result<usize> {
        match *self {
            LayerSpec::Dense { input, output } => {
                if input != input_width {
                    return Err(Error::contract(format!(
                        "dense layer expects width {input}, got {input_width}"
                    )));
                }
                Ok(output)
            }
            LayerSpec::BatchNorm { dim } => {
                if dim != input_width {
                    return Err(Error::contract(format!(
                        "batch norm expects width {dim}, got {input_width}"
                    )));
                }
                Ok(dim)
            }
            _ => Ok(input_width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A layer with its parameters.
///
/// Dense keeps `[W (input×output, row-major), b]`; BatchNorm keeps `[gamma, beta]`
/// plus running statistics. The other kinds are parameter-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    running: Option<RunningStats>,
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Dense { x: Matrix },
    Relu { x: Matrix },
    Tanh { y: Matrix },
    BatchNormTrain { xhat: Matrix, inv_std: Vec<f64> },
    BatchNormInfer { xhat: Matrix, inv_std: Vec<f64> },
    Dropout { mask: Option<Matrix> },
    L2Norm { y: Matrix, norms: Vec<f64> },
}

impl Layer {
    /// Fresh layer. Dense weights use Glorot-uniform initialisation, biases zero.
    pub fn new(spec: LayerSpec, rng: &mut Prng) -> Result<Self> {
        spec.validate()?;
        let (params, running) = match spec {
            LayerSpec::Dense { input, output } => {
                let limit = (6.0 / (input + output) as f64).sqrt();
                let w = (0..input * output)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                (vec![w, vec![0.0; output]], None)
            }
            LayerSpec::BatchNorm { dim } => (
                vec![vec![1.0; dim], vec![0.0; dim]],
                Some(RunningStats {
                    mean: vec![0.0; dim],
                    var: vec![1.0; dim],
                }),
            ),
            _ => (Vec::new(), None),
        };
        Ok(Layer {
            spec,
            params,
            running,
        })
    }

    /// Rebuild a layer from stored parameters, checking every shape against the spec.
    pub fn from_parts(
        spec: LayerSpec,
        params: Vec<Vec<f64>>,
        running: Option<RunningStats>,
    ) -> Result<Self> {
        spec.validate()?;
        let expected = param_shapes(&spec);
        let got: Vec<usize> = params.iter().map(Vec::len).collect();
        if got != expected {
            return Err(Error::contract(format!(
                "{spec:?}: parameter lengths {got:?}, expected {expected:?}"
            )));
        }
        match (spec, &running) {
            (LayerSpec::BatchNorm { dim }, Some(r)) if r.mean.len() == dim && r.var.len() == dim => {}
            (LayerSpec::BatchNorm { .. }, _) => {
                return Err(Error::contract("batch norm layer needs running statistics"))
            }
            (_, Some(_)) => {
                return Err(Error::contract(format!(
                    "{spec:?} does not carry running statistics"
                )))
            }
            _ => {}
        }
        Ok(Layer {
            spec,
            params,
            running,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn running(&self) -> Option<&RunningStats> {
        self.running.as_ref()
    }

    fn input_width(&self) -> Option<usize> {
        match self.spec {
            LayerSpec::Dense { input, .. } => Some(input),
            LayerSpec::BatchNorm { dim } => Some(dim),
            _ => None,
        }
    }

    /// Forward pass. In train mode BatchNorm running statistics are updated.
    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut Prng) -> Result<(Matrix, Cache)> {
        let (y, cache, stats) = self.forward_impl(x, mode, rng)?;
        if let (Some(running), Some((mean, var))) = (self.running.as_mut(), stats) {
            let m = BATCH_NORM_MOMENTUM;
            for (r, b) in running.mean.iter_mut().zip(&mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in running.var.iter_mut().zip(&var) {
                *r = m * *r + (1.0 - m) * b;
            }
        }
        Ok((y, cache))
    }

    /// Forward pass that leaves the layer untouched, including running statistics.
    pub fn forward_pure(&self, x: &Matrix, mode: Mode, rng: &mut Prng) -> Result<(Matrix, Cache)> {
        let (y, cache, _) = self.forward_impl(x, mode, rng)?;
        Ok((y, cache))
    }

    #[allow(clippy::type_complexity)]
    fn forward_impl(
        &self,
        x: &Matrix,
        mode: Mode,
        rng: &mut Prng,
    ) -> Result<(Matrix, Cache, Option<(Vec<f64>, Vec<f64>)>)> {
        if let Some(w) = self.input_width() {
            if x.cols() != w {
                return Err(Error::contract(format!(
                    "{:?}: input has {} columns, expected {}",
                    self.spec,
                    x.cols(),
                    w
                )));
            }
        }
        x.ensure_finite("layer input")?;

        match self.spec {
            LayerSpec::Dense { input, output } => {
                let w = Matrix::from_vec(input, output, self.params[0].clone())?;
                let mut y = x.matmul(&w)?;
                let b = &self.params[1];
                for r in 0..y.rows() {
                    for (v, bj) in y.row_mut(r).iter_mut().zip(b) {
                        *v += bj;
                    }
                }
                Ok((y, Cache::Dense { x: x.clone() }, None))
            }
            LayerSpec::Relu => Ok((x.map(|v| v.max(0.0)), Cache::Relu { x: x.clone() }, None)),
            LayerSpec::Tanh => {
                let y = x.map(f64::tanh);
                Ok((y.clone(), Cache::Tanh { y }, None))
            }
            LayerSpec::BatchNorm { dim } => {
                let gamma = &self.params[0];
                let beta = &self.params[1];
                match mode {
                    Mode::Train => {
                        let n = x.rows();
                        if n < 2 {
                            return Err(Error::contract(
                                "batch norm in train mode needs a batch of at least 2",
                            ));
                        }
                        let nf = n as f64;
                        let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / nf).collect();
                        let mut var = vec![0.0; dim];
                        for row in x.row_iter() {
                            for j in 0..dim {
                                let d = row[j] - mean[j];
                                var[j] += d * d;
                            }
                        }
                        for v in var.iter_mut() {
                            *v /= nf;
                        }
                        let inv_std: Vec<f64> =
                            var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
                        let mut xhat = Matrix::zeros(n, dim);
                        let mut y = Matrix::zeros(n, dim);
                        for r in 0..n {
                            for j in 0..dim {
                                let h = (x.get(r, j) - mean[j]) * inv_std[j];
                                xhat.set(r, j, h);
                                y.set(r, j, gamma[j] * h + beta[j]);
                            }
                        }
                        Ok((y, Cache::BatchNormTrain { xhat, inv_std }, Some((mean, var))))
                    }
                    Mode::Infer => {
                        let running = self
                            .running
                            .as_ref()
                            .ok_or_else(|| Error::contract("batch norm without running stats"))?;
                        let inv_std: Vec<f64> = running
                            .var
                            .iter()
                            .map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
                            .collect();
                        let mut xhat = x.clone();
                        let mut y = x.clone();
                        for r in 0..y.rows() {
                            for j in 0..dim {
                                let h = (x.get(r, j) - running.mean[j]) * inv_std[j];
                                xhat.set(r, j, h);
                                y.set(r, j, gamma[j] * h + beta[j]);
                            }
                        }
                        Ok((y, Cache::BatchNormInfer { xhat, inv_std }, None))
                    }
                }
            }
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Infer || rate == 0.0 {
                    return Ok((x.clone(), Cache::Dropout { mask: None }, None));
                }
                let keep = 1.0 / (1.0 - rate);
                let mut mask = Matrix::zeros(x.rows(), x.cols());
                for m in mask.data_mut() {
                    *m = if rng.random::<f64>() < rate { 0.0 } else { keep };
                }
                let mut y = x.clone();
                for (v, m) in y.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                Ok((y, Cache::Dropout { mask: Some(mask) }, None))
            }
            LayerSpec::L2Norm => {
                let mut y = x.clone();
                let mut norms = Vec::with_capacity(x.rows());
                for r in 0..y.rows() {
                    let row = y.row_mut(r);
                    let n = dot(row, row).sqrt();
                    let d = n.max(L2_NORM_EPS);
                    for v in row.iter_mut() {
                        *v /= d;
                    }
                    norms.push(n);
                }
                Ok((y.clone(), Cache::L2Norm { y, norms }, None))
            }
        }
    }

    /// Backward pass: returns `∂L/∂x` and gradients congruent to [`Layer::params`].
    pub fn backward(&self, cache: &Cache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        dy.ensure_finite("upstream gradient")?;
        match (self.spec, cache) {
            (LayerSpec::Dense { input, output }, Cache::Dense { x }) => {
                dy.ensure_shape(x.rows(), output, "dense backward")?;
                let w = Matrix::from_vec(input, output, self.params[0].clone())?;
                let dx = dy.matmul_t(&w)?;
                let dw = x.t_matmul(dy)?;
                let db = dy.col_sums();
                Ok((dx, vec![dw.into_data(), db]))
            }
            (LayerSpec::Relu, Cache::Relu { x }) => {
                dy.ensure_shape(x.rows(), x.cols(), "relu backward")?;
                let mut dx = dy.clone();
                for (g, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok((dx, Vec::new()))
            }
            (LayerSpec::Tanh, Cache::Tanh { y }) => {
                dy.ensure_shape(y.rows(), y.cols(), "tanh backward")?;
                let mut dx = dy.clone();
                for (g, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    *g *= 1.0 - yv * yv;
                }
                Ok((dx, Vec::new()))
            }
            (LayerSpec::BatchNorm { dim }, Cache::BatchNormTrain { xhat, inv_std }) => {
                dy.ensure_shape(xhat.rows(), dim, "batch norm backward")?;
                let gamma = &self.params[0];
                let n = xhat.rows();
                let nf = n as f64;
                let mut dgamma = vec![0.0; dim];
                let dbeta = dy.col_sums();
                let mut sum_dxhat = vec![0.0; dim];
                let mut sum_dxhat_xhat = vec![0.0; dim];
                for r in 0..n {
                    for j in 0..dim {
                        let g = dy.get(r, j);
                        let h = xhat.get(r, j);
                        dgamma[j] += g * h;
                        let dh = g * gamma[j];
                        sum_dxhat[j] += dh;
                        sum_dxhat_xhat[j] += dh * h;
                    }
                }
                let mut dx = Matrix::zeros(n, dim);
                for r in 0..n {
                    for j in 0..dim {
                        let dh = dy.get(r, j) * gamma[j];
                        let h = xhat.get(r, j);
                        dx.set(
                            r,
                            j,
                            inv_std[j] / nf * (nf * dh - sum_dxhat[j] - h * sum_dxhat_xhat[j]),
                        );
                    }
                }
                Ok((dx, vec![dgamma, dbeta]))
            }
            (LayerSpec::BatchNorm { dim }, Cache::BatchNormInfer { xhat, inv_std }) => {
                dy.ensure_shape(xhat.rows(), dim, "batch norm backward")?;
                let gamma = &self.params[0];
                let mut dgamma = vec![0.0; dim];
                let mut dx = dy.clone();
                for r in 0..dx.rows() {
                    for (j, g) in dx.row_mut(r).iter_mut().enumerate() {
                        dgamma[j] += *g * xhat.get(r, j);
                        *g *= gamma[j] * inv_std[j];
                    }
                }
                Ok((dx, vec![dgamma, dy.col_sums()]))
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                None => Ok((dy.clone(), Vec::new())),
                Some(mask) => {
                    dy.ensure_shape(mask.rows(), mask.cols(), "dropout backward")?;
                    let mut dx = dy.clone();
                    for (g, m) in dx.data_mut().iter_mut().zip(mask.data()) {
                        *g *= m;
                    }
                    Ok((dx, Vec::new()))
                }
            },
            (LayerSpec::L2Norm, Cache::L2Norm { y, norms }) => {
                dy.ensure_shape(y.rows(), y.cols(), "l2norm backward")?;
                let mut dx = dy.clone();
                for r in 0..dx.rows() {
                    let n = norms[r];
                    let yr = y.row(r);
                    let g = dx.row_mut(r);
                    if n > L2_NORM_EPS {
                        // (I - ŷŷᵀ) g / ‖x‖
                        let proj = dot(yr, g);
                        for (gi, &yi) in g.iter_mut().zip(yr) {
                            *gi = (*gi - yi * proj) / n;
                        }
                    } else {
                        for gi in g.iter_mut() {
                            *gi /= L2_NORM_EPS;
                        }
                    }
                }
                Ok((dx, Vec::new()))
            }
            (spec, _) => Err(Error::contract(format!(
                "cache does not belong to a {spec:?} layer"
            ))),
        }
    }
}

/// Parameter array lengths implied by a spec.
pub fn param_shapes(spec: &LayerSpec) -> Vec<usize> {
    match *spec {
        LayerSpec::Dense { input, output } => vec![input * output, output],
        LayerSpec::BatchNorm { dim } => vec![dim, dim],
        _ => Vec::new(),
    }
}
