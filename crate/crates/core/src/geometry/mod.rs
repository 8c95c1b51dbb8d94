//! Rigid-frame machinery for marker sets: local-frame standardization, SVD
//! alignment, pinhole projection, perspective-n-point pose recovery and
//! marker instantiation.

mod camera;
mod frame;
mod markers;
mod pnp;
mod procrustes;

pub use camera::{project, CameraProjection};
pub use frame::local_frame;
pub use markers::{MarkerSet2D, MarkerSet3D, RigidTransform};
pub use pnp::{solve_pnp, solve_pnp_with, PnpOptions, MIN_REFERENCE_THICKNESS};
pub use procrustes::{procrustes_align, rigid_fit};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("marker {marker} coincides with the marker centroid")]
    CoincidentMarkers { marker: usize },
    #[error("markers 1 and 2 are collinear with the centroid; the local frame is undefined")]
    DegenerateFrame,
    #[error("cross-covariance is rank deficient (singular values {singular_values:?}); rotation is ambiguous")]
    DegenerateConfiguration { singular_values: [f64; 3] },
    #[error("marker {marker} lies on the principal plane (denominator {denominator:e})")]
    PointOnPrincipalPlane { marker: usize, denominator: f64 },
    #[error("reference markers are coplanar or collinear (smallest centered singular value {smallest:e} mm)")]
    DegenerateReference { smallest: f64 },
    #[error("pose refinement did not converge after {iterations} iterations (rms residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("invalid projection matrix: {0}")]
    InvalidProjection(String),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("point count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
}

/// Intra-operative markers recovered from a predicted reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instantiation {
    /// `R̂·f(Ŷ_p^l, Y_f^l) + t̂`.
    pub markers: MarkerSet3D,
    pub pose: RigidTransform,
    /// The prediction after alignment onto the fully-deployed local markers.
    pub aligned_reference: MarkerSet3D,
}

/// Aligns the predicted references onto the fully-deployed local markers,
/// solves the pose against the observation and applies it.
pub fn instantiate_markers(
    predicted_local: &MarkerSet3D,
    deployed_local: &MarkerSet3D,
    observed: &MarkerSet2D,
    camera: &CameraProjection,
) -> Result<Instantiation, GeometryError> {
    let (_, aligned_reference) = procrustes_align(predicted_local, deployed_local)?;
    let pose = solve_pnp(&aligned_reference, observed, camera)?;
    Ok(Instantiation {
        markers: pose.apply(&aligned_reference),
        pose,
        aligned_reference,
    })
}
