//! Adapted spectral GCN: a fixed stack of Chebyshev graph convolutions with
//! leaky-ReLU activations and a linear output layer, regressing the
//! partially-deployed marker references from the fully-deployed ones.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LayerRecord, CHECKPOINT_VERSION};
pub use train::{train, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::MarkerSet3D;
use crate::graph::{GraphError, MarkerGraph, NodeFeatures};

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub hidden_layers: usize,
    pub channels: usize,
    /// Chebyshev kernel size (number of polynomial terms).
    pub k: usize,
    pub leaky_slope: f64,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 8,
            channels: 32,
            k: 2,
            leaky_slope: 0.1,
            in_channels: 3,
            out_channels: 3,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        let bad = |m: &str| Err(GcnError::InvalidConfig(m.to_string()));
        if self.hidden_layers == 0 {
            return bad("hidden_layers must be at least 1");
        }
        if self.channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.k == 0 {
            return bad("kernel size k must be at least 1");
        }
        // a slope of exactly 1 turns the network linear; useful for tests
        if !(self.leaky_slope > 0.0 && self.leaky_slope <= 1.0) {
            return bad("leaky_slope must lie in (0, 1]");
        }
        Ok(())
    }

    /// `(C_in, C_out)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut c_in = self.in_channels;
        for _ in 0..self.hidden_layers {
            shapes.push((c_in, self.channels));
            c_in = self.channels;
        }
        shapes.push((c_in, self.out_channels));
        shapes
    }
}

/// One convolution layer: `theta[k]` is the `C_in × C_out` coefficient
/// slice for Chebyshev order `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub theta: Vec<DMatrix<f64>>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub layers: Vec<Layer>,
}

impl GcnParams {
    pub fn zeros(config: &GcnConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(ci, co)| Layer {
                theta: vec![DMatrix::zeros(ci, co); config.k],
                bias: DVector::zeros(co),
            })
            .collect();
        Self { layers }
    }

    /// Uniform in `±√(6 / (K·C_in + C_out))`, biases zero.
    pub fn init(config: &GcnConfig, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(config);
        for layer in &mut params.layers {
            let (ci, co) = layer.theta[0].shape();
            let limit = (6.0 / (config.k * ci + co) as f64).sqrt();
            for slice in &mut layer.theta {
                for v in slice.iter_mut() {
                    *v = rng.random_range(-limit..limit);
                }
            }
        }
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.theta.iter().map(|t| t.len()).sum::<usize>() + l.bias.len()).sum()
    }

    /// Euclidean norm over every filter coefficient; biases excluded.
    pub fn theta_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.theta.iter())
            .map(|t| t.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Thetas then bias, layer by layer, each slice column-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            for t in &l.theta {
                out.extend_from_slice(t.as_slice());
            }
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for l in &mut self.layers {
            for t in &mut l.theta {
                let n = t.len();
                t.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &GcnParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.theta.iter_mut().zip(&b.theta) {
                ta.zip_apply(tb, |a, b| *a += s * b);
            }
            a.bias.axpy(s, &b.bias, 1.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for t in &mut l.theta {
                *t *= s;
            }
            l.bias *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.bias.iter().all(|v| v.is_finite()) && l.theta.iter().all(|t| t.iter().all(|v| v.is_finite())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub config: GcnConfig,
    pub params: GcnParams,
}

impl GcnModel {
    pub fn new(config: GcnConfig, params: GcnParams) -> Result<Self, GcnError> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if params.layers.len() != shapes.len() {
            return Err(GcnError::ShapeMismatch(format!(
                "config has {} layers, parameters have {}",
                shapes.len(),
                params.layers.len()
            )));
        }
        for (i, (layer, (ci, co))) in params.layers.iter().zip(shapes).enumerate() {
            let ok = layer.theta.len() == config.k && layer.theta.iter().all(|t| t.shape() == (ci, co)) && layer.bias.len() == co;
            if !ok {
                return Err(GcnError::ShapeMismatch(format!("layer {i} does not match {}x{ci}x{co}", config.k)));
            }
        }
        Ok(Self { config, params })
    }

    pub fn zeros(config: GcnConfig) -> Result<Self, GcnError> {
        Self::new(config, GcnParams::zeros(&config))
    }

    pub fn initialized(config: GcnConfig, rng: &mut impl Rng) -> Result<Self, GcnError> {
        config.validate()?;
        Self::new(config, GcnParams::init(&config, rng))
    }
}

/// Per-layer intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Chebyshev basis `T_k(L̃) F^{i−1}` of each layer's input.
    basis: Vec<Vec<DMatrix<f64>>>,
    /// Pre-activation of each layer.
    pre: Vec<DMatrix<f64>>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Runs the network on a `5 × C_in` node signal.
pub fn forward(model: &GcnModel, graph: &MarkerGraph, input: &NodeFeatures) -> Result<(NodeFeatures, ForwardCache), GcnError> {
    if input.channels() != model.config.in_channels || input.nodes() != graph.node_count() {
        return Err(GcnError::ShapeMismatch(format!(
            "input is {}x{}, expected {}x{}",
            input.nodes(),
            input.channels(),
            graph.node_count(),
            model.config.in_channels
        )));
    }
    if !input.values().iter().all(|v| v.is_finite()) {
        return Err(GcnError::ShapeMismatch("input contains non-finite values".into()));
    }
    let last = model.params.layers.len() - 1;
    let mut cache = ForwardCache {
        basis: Vec::with_capacity(last + 1),
        pre: Vec::with_capacity(last + 1),
    };
    let mut x = input.values().clone();
    for (i, layer) in model.params.layers.iter().enumerate() {
        let basis = graph.chebyshev_basis(&x, model.config.k)?;
        let mut z = &basis[0] * &layer.theta[0];
        for (tk, theta) in basis.iter().zip(&layer.theta).skip(1) {
            z.gemm(1.0, tk, theta, 1.0);
        }
        for mut row in z.row_iter_mut() {
            row += layer.bias.transpose();
        }
        x = if i == last {
            z.clone()
        } else {
            z.map(|v| leaky(v, model.config.leaky_slope))
        };
        cache.basis.push(basis);
        cache.pre.push(z);
    }
    Ok((NodeFeatures(x), cache))
}

pub fn predict_references(model: &GcnModel, graph: &MarkerGraph, deployed_local: &MarkerSet3D) -> Result<MarkerSet3D, GcnError> {
    let (out, _) = forward(model, graph, &NodeFeatures(markers_to_features(deployed_local)))?;
    if out.values().shape() != (5, 3) {
        return Err(GcnError::ShapeMismatch(format!("network emits {:?}, expected 5x3", out.values().shape())));
    }
    let mut markers = MarkerSet3D::zeros();
    for node in 0..5 {
        for c in 0..3 {
            markers.0[(c, node)] = out.values()[(node, c)];
        }
    }
    Ok(markers)
}

/// Node-major `5 × 3` matrix of a marker set.
pub fn markers_to_features(markers: &MarkerSet3D) -> DMatrix<f64> {
    DMatrix::from_fn(5, 3, |node, c| markers.0[(c, node)])
}

/// Data term `‖pred − target‖_F` of one sample.
pub fn data_loss(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).norm()
}

/// `‖pred − target‖_F + α‖ϑ‖₂`.
pub fn loss(pred: &DMatrix<f64>, target: &DMatrix<f64>, params: &GcnParams, alpha: f64) -> Result<f64, GcnError> {
    if pred.shape() != target.shape() {
        return Err(GcnError::ShapeMismatch(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    Ok(data_loss(pred, target) + alpha * params.theta_norm())
}

/// Backpropagates `d_out` (gradient w.r.t. the network output) and
/// accumulates `scale ×` the parameter gradient into `grad`.
pub fn backward(model: &GcnModel, graph: &MarkerGraph, cache: &ForwardCache, d_out: &DMatrix<f64>, scale: f64, grad: &mut GcnParams) -> Result<(), GcnError> {
    let last = model.params.layers.len() - 1;
    let slope = model.config.leaky_slope;
    let mut upstream = d_out.clone();
    for i in (0..=last).rev() {
        let layer = &model.params.layers[i];
        let dz = if i == last {
            upstream
        } else {
            let mut dz = upstream;
            dz.zip_apply(&cache.pre[i], |g, z| {
                if z <= 0.0 {
                    *g *= slope;
                }
            });
            dz
        };
        let g = &mut grad.layers[i];
        for (gt, tk) in g.theta.iter_mut().zip(&cache.basis[i]) {
            gt.gemm_tr(scale, tk, &dz, 1.0);
        }
        for (c, col) in dz.column_iter().enumerate() {
            g.bias[c] += scale * col.sum();
        }
        if i > 0 {
            let terms: Vec<DMatrix<f64>> = layer.theta.iter().map(|t| &dz * t.transpose()).collect();
            upstream = graph.chebyshev_combine(&terms)?;
        } else {
            break;
        }
    }
    Ok(())
}

/// Gradient of the single-sample loss with respect to every parameter.
pub fn gradients(model: &GcnModel, graph: &MarkerGraph, input: &NodeFeatures, target: &DMatrix<f64>, alpha: f64) -> Result<GcnParams, GcnError> {
    let (out, cache) = forward(model, graph, input)?;
    if out.values().shape() != target.shape() {
        return Err(GcnError::ShapeMismatch(format!("prediction {:?} vs target {:?}", out.values().shape(), target.shape())));
    }
    let mut grad = GcnParams::zeros(&model.config);
    let residual = out.values() - target;
    let norm = residual.norm();
    if norm > 0.0 {
        backward(model, graph, &cache, &(residual / norm), 1.0, &mut grad)?;
    }
    add_regularizer_gradient(&model.params, alpha, &mut grad);
    Ok(grad)
}

/// Adds `α ϑ / ‖ϑ‖` to the theta entries of `grad`.
pub fn add_regularizer_gradient(params: &GcnParams, alpha: f64, grad: &mut GcnParams) {
    let norm = params.theta_norm();
    if alpha == 0.0 || norm == 0.0 {
        return;
    }
    let s = alpha / norm;
    for (g, p) in grad.layers.iter_mut().zip(&params.layers) {
        for (gt, pt) in g.theta.iter_mut().zip(&p.theta) {
            gt.zip_apply(pt, |g, p| *g += s * p);
        }
    }
}
