//! Segment records, the mean distance error, augmentation, the synthetic
//! deployment simulator, family-wise fold splitting and dataset files.

mod augment;
mod io;
mod simulate;
mod split;

pub use augment::{augment, AugmentConfig, AxesMode};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_FORMAT, DATASET_VERSION};
pub use simulate::{
    generate_dataset, simulate_deployment, CameraConfig, FamilyConfig, JitterConfig, ObservationConfig, Range, SimulationConfig,
};
pub use split::{crossval_split, Fold};

use nalgebra::{Dim, Matrix, RawStorage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraProjection, GeometryError, MarkerSet2D, MarkerSet3D, RigidTransform};
use crate::mesh::{MeshError, StentSegmentSpec};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("marker placements are coplanar (smallest centered singular value {smallest:e} mm)")]
    CoplanarPlacement { smallest: f64 },
    #[error("cross-validation needs at least 3 graft families, found {found}")]
    InsufficientFamilies { found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported dataset version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("invalid sample {record}: {message}")]
    InvalidSample { record: String, message: String },
    #[error("invalid configuration: {field} {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Mean distance error between corresponding columns of two point matrices
/// (one point per column).
pub fn mde<R1, C1, S1, R2, C2, S2>(a: &Matrix<f64, R1, C1, S1>, b: &Matrix<f64, R2, C2, S2>) -> Result<f64, DatasetError>
where
    R1: Dim,
    C1: Dim,
    S1: RawStorage<f64, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<f64, R2, C2>,
{
    if a.shape() != b.shape() {
        return Err(DatasetError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for j in 0..cols {
        let mut sq = 0.0;
        for i in 0..rows {
            let d = a[(i, j)] - b[(i, j)];
            sq += d * d;
        }
        total += sq.sqrt();
    }
    Ok(total / cols as f64)
}

/// One stent segment: the fully-deployed markers and the partially-deployed
/// ground truth in the standardized local frame, plus the optional
/// intra-operative data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    /// Graft family, e.g. `iliac`, `fenestrated`, `thoracic` or a synthetic
    /// family name.
    pub graft_id: String,
    pub segment_index: u32,
    pub y_f_l: MarkerSet3D,
    pub y_p_l: MarkerSet3D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_p_g: Option<MarkerSet3D>,
    /// Observed (noisy) 2D markers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_g: Option<MarkerSet2D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<CameraProjection>,
    pub spec: StentSegmentSpec,
    /// Nominal `(θ deg, h mm)` of each marker on the segment surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placements: Option<[[f64; 2]; 5]>,
    /// Pose taking the segment model frame (axis along z, h = 0 at the
    /// origin) to the global frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_g: Option<RigidTransform>,
}

impl SegmentSample {
    pub fn id(&self) -> String {
        format!("{}/{}", self.graft_id, self.segment_index)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |message: String| DatasetError::InvalidSample { record: self.id(), message };
        if !self.y_f_l.is_finite() || !self.y_p_l.is_finite() {
            return Err(fail("non-finite marker coordinate".into()));
        }
        let c = self.y_f_l.centroid().norm();
        let scale = self.y_f_l.0.amax().max(1.0);
        if c > 1e-9 * scale {
            return Err(fail(format!("y_f_l is not centered (centroid norm {c:e})")));
        }
        if self.x_g.is_some() && self.projection.is_none() {
            return Err(fail("x_g present without a projection matrix".into()));
        }
        self.spec.validate().map_err(|e| fail(e.to_string()))?;
        Ok(())
    }

    /// The no-op error: MDE between the fully- and partially-deployed local
    /// markers.
    pub fn initial_variation(&self) -> f64 {
        mde(&self.y_f_l.0, &self.y_p_l.0).expect("3x5 sets")
    }
}
