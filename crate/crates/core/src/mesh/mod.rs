//! Parametric stent-segment surfaces: cylinder when fully deployed, cone
//! when partially deployed, with rectangular fenestration cutouts, posing
//! and the mesh-level evaluation metrics.

mod distance;
mod export;
mod generate;
mod spec;

pub use distance::{brute_force_distance, closest_point_on_triangle, point_to_mesh_distance, TriangleBvh};
pub use export::{read_params_sidecar, write_obj, write_params_sidecar, ParamsSidecar};
pub use generate::{cut_fenestration, generate_segment_mesh, generate_segment_mesh_capped, SegmentMesh, VertexParam, DEFAULT_MAX_VERTICES};
pub use spec::{partial_diameters, wrapped_angle_difference, DeploymentState, Fenestration, StentSegmentSpec};

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{MarkerSet3D, RigidTransform};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid segment spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("mesh would have {vertices} vertices, above the cap of {cap}")]
    ResolutionOverflow { vertices: usize, cap: usize },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("corrupt mesh: {0}")]
    Corrupt(String),
    #[error("mesh i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Marker position on the model surface at angle `theta` (degrees) and
/// height `h`.
pub fn surface_point(spec: &StentSegmentSpec, state: DeploymentState, theta: f64, h: f64) -> Vector3<f64> {
    let r = spec.radius_at(h, state);
    let (s, c) = theta.to_radians().sin_cos();
    Vector3::new(r * c, r * s, h)
}

/// Translation that moves the centroid of the posed model markers onto the
/// centroid of the instantiated markers.
pub fn central_point_correction(markers_model: &MarkerSet3D, pose: &RigidTransform, markers_instantiated: &MarkerSet3D) -> Vector3<f64> {
    markers_instantiated.centroid() - pose.apply(markers_model).centroid()
}

/// Applies `pose` to every vertex and then the central-point correction.
pub fn pose_mesh(mesh: &SegmentMesh, markers_model: &MarkerSet3D, pose: &RigidTransform, markers_instantiated: &MarkerSet3D) -> SegmentMesh {
    let offset = central_point_correction(markers_model, pose, markers_instantiated);
    mesh.map_vertices(|v| pose.apply_point(v) + offset)
}

/// Mean distance from the predicted vertices to the ground-truth surface.
pub fn mesh_distance_error(mesh_pred: &SegmentMesh, mesh_gt: &SegmentMesh) -> Result<f64, MeshError> {
    if mesh_pred.vertices.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let bvh = TriangleBvh::new(mesh_gt)?;
    // collect first so the summation order never depends on scheduling
    let d: Vec<f64> = mesh_pred.vertices.par_iter().map(|v| bvh.distance(v)).collect();
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

fn nearest_vertex(mesh: &SegmentMesh, p: &Vector3<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in mesh.vertices.iter().enumerate() {
        let d = (v - p).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Mean wrapped difference between the θ of the mesh vertices nearest to
/// each predicted and ground-truth marker, degrees.
pub fn angular_error(markers_pred: &MarkerSet3D, markers_gt: &MarkerSet3D, mesh_gt: &SegmentMesh) -> Result<f64, MeshError> {
    if mesh_gt.vertices.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let total: f64 = (0..5)
        .map(|i| {
            let a = mesh_gt.params[nearest_vertex(mesh_gt, &markers_pred.point(i))].theta;
            let b = mesh_gt.params[nearest_vertex(mesh_gt, &markers_gt.point(i))].theta;
            wrapped_angle_difference(a, b)
        })
        .sum();
    Ok(total / 5.0)
}
