use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{add_regularizer_gradient, backward, forward, markers_to_features, GcnError, GcnModel, GcnParams};
use crate::geometry::MarkerSet3D;
use crate::graph::{MarkerGraph, NodeFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight α of the L2 penalty on the filter coefficients.
    pub l2_weight: f64,
    pub batch_size: usize,
    /// Standard deviation of the Gaussian noise added to every input, mm.
    pub noise_sigma: f64,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            momentum: 0.9,
            l2_weight: 5e-4,
            batch_size: 10,
            noise_sigma: 0.1,
            epochs: 100,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        let bad = |m: &str| Err(GcnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return bad("l2_weight must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: GcnParams,
    /// Mean mini-batch loss of every epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch momentum SGD on `(Y_f^l, Y_p^l)` pairs.
///
/// Every epoch reshuffles the pairs with the seeded generator and every
/// presentation of an input gets fresh Gaussian noise.
pub fn train(model: &GcnModel, graph: &MarkerGraph, pairs: &[(MarkerSet3D, MarkerSet3D)], cfg: &TrainConfig) -> Result<TrainOutcome, GcnError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(GcnError::EmptyDataset);
    }
    let inputs: Vec<DMatrix<f64>> = pairs.iter().map(|(f, _)| markers_to_features(f)).collect();
    let targets: Vec<DMatrix<f64>> = pairs.iter().map(|(_, p)| markers_to_features(p)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| GcnError::InvalidConfig(e.to_string()))?;
    let mut current = model.clone();
    let mut velocity = GcnParams::zeros(&model.config);
    let mut grad = GcnParams::zeros(&model.config);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grad.scale(0.0);
            let weight = 1.0 / batch.len() as f64;
            let mut data_term = 0.0;
            for &idx in batch {
                let mut x = inputs[idx].clone();
                if cfg.noise_sigma > 0.0 {
                    for v in x.iter_mut() {
                        *v += noise.sample(&mut rng);
                    }
                }
                let (out, cache) = forward(&current, graph, &NodeFeatures(x))?;
                let residual = out.values() - &targets[idx];
                let norm = residual.norm();
                data_term += weight * norm;
                if norm > 0.0 {
                    backward(&current, graph, &cache, &(residual / norm), weight, &mut grad)?;
                }
            }
            add_regularizer_gradient(&current.params, cfg.l2_weight, &mut grad);
            let batch_loss = data_term + cfg.l2_weight * current.params.theta_norm();
            if !batch_loss.is_finite() {
                return Err(GcnError::NonFiniteLoss { epoch });
            }
            velocity.scale(cfg.momentum);
            velocity.axpy(-cfg.learning_rate, &grad);
            current.params.axpy(1.0, &velocity);
            epoch_loss += batch_loss;
            batches += 1;
        }
        if !current.params.is_finite() {
            return Err(GcnError::NonFiniteLoss { epoch });
        }
        history.push(epoch_loss / batches as f64);
    }
    Ok(TrainOutcome {
        params: current.params,
        loss_history: history,
    })
}
