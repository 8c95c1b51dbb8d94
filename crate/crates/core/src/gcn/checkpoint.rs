use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GcnConfig, GcnError, GcnModel, GcnParams, Layer, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Filter tensor of one layer, `[K, C_in, C_out]` in row-major order, plus
/// its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub theta_shape: [usize; 3],
    pub theta: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: GcnConfig,
    pub layers: Vec<LayerRecord>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub final_loss: Option<f64>,
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &GcnModel, train_config: Option<TrainConfig>, loss_history: Vec<f64>) -> Self {
        let layers = model
            .params
            .layers
            .iter()
            .map(|l| {
                let (ci, co) = l.theta[0].shape();
                let mut theta = Vec::with_capacity(l.theta.len() * ci * co);
                for t in &l.theta {
                    for r in 0..ci {
                        for c in 0..co {
                            theta.push(t[(r, c)]);
                        }
                    }
                }
                LayerRecord {
                    theta_shape: [l.theta.len(), ci, co],
                    theta,
                    bias: l.bias.iter().copied().collect(),
                }
            })
            .collect();
        Self {
            format_version: CHECKPOINT_VERSION,
            config: model.config,
            layers,
            train_config,
            final_loss: loss_history.last().copied(),
            loss_history,
        }
    }

    pub fn to_model(&self) -> Result<GcnModel, GcnError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(GcnError::Format(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.iter().enumerate() {
            let [k, ci, co] = rec.theta_shape;
            if rec.theta.len() != k * ci * co || rec.bias.len() != co || k == 0 {
                return Err(GcnError::Format(format!(
                    "layer {i}: shape {:?} does not match {} coefficients and {} biases",
                    rec.theta_shape,
                    rec.theta.len(),
                    rec.bias.len()
                )));
            }
            let theta = rec.theta.chunks(ci * co).map(|chunk| DMatrix::from_row_slice(ci, co, chunk)).collect();
            layers.push(Layer {
                theta,
                bias: DVector::from_vec(rec.bias.clone()),
            });
        }
        GcnModel::new(self.config, GcnParams { layers })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), GcnError> {
    let text = serde_json::to_string_pretty(checkpoint).map_err(|e| GcnError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, GcnError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GcnError::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::forward;
    use crate::graph::{build_marker_graph, NodeFeatures};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = GcnModel::initialized(GcnConfig::default(), &mut rng).unwrap();
        let ckpt = Checkpoint::from_model(&model, Some(TrainConfig::default()), vec![1.5, 0.1 + 0.2]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.to_model().unwrap();
        assert_eq!(restored, model);

        let graph = build_marker_graph();
        let x = NodeFeatures(DMatrix::from_fn(5, 3, |_, _| rng.random_range(-20.0..20.0)));
        let a = forward(&model, &graph, &x).unwrap().0;
        let b = forward(&restored, &graph, &x).unwrap().0;
        assert_eq!(a.values().as_slice(), b.values().as_slice());
    }

    #[test]
    fn rejects_bad_documents() {
        let model = GcnModel::zeros(GcnConfig::default()).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, None, vec![]);
        ckpt.format_version = 7;
        assert!(ckpt.to_model().is_err());
        let mut ckpt = Checkpoint::from_model(&model, None, vec![]);
        ckpt.layers[2].theta.pop();
        assert!(matches!(ckpt.to_model(), Err(GcnError::Format(_))));
    }
}
