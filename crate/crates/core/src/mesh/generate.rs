use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{DeploymentState, Fenestration, MeshError, StentSegmentSpec};

/// Default upper bound on generated vertex count.
pub const DEFAULT_MAX_VERTICES: usize = 10_000_000;

/// Generating parameters of a mesh vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexParam {
    /// Angle around the segment axis, degrees in `[0, 360)`.
    pub theta: f64,
    /// Height along the axis, mm.
    pub h: f64,
    pub ring: u32,
    pub step: u32,
}

/// Triangulated segment surface. Vertices keep their (θ, h) parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub params: Vec<VertexParam>,
    pub faces: Vec<[u32; 3]>,
}

impl SegmentMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Checks index bounds and that no face has zero area.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.vertices.len() != self.params.len() {
            return Err(MeshError::Corrupt("vertex and parameter counts differ".into()));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= self.vertices.len()) {
                return Err(MeshError::Corrupt(format!("face {i} references a missing vertex")));
            }
            let [a, b, c] = self.triangle(i);
            if (b - a).cross(&(c - a)).norm() <= 0.0 {
                return Err(MeshError::Corrupt(format!("face {i} is degenerate")));
            }
        }
        Ok(())
    }

    /// Applies `f` to every vertex position.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> SegmentMesh {
        SegmentMesh {
            vertices: self.vertices.iter().map(f).collect(),
            params: self.params.clone(),
            faces: self.faces.clone(),
        }
    }

    /// Drops every vertex matching `remove` together with its incident faces
    /// and compacts the indices.
    pub fn remove_vertices(&self, remove: impl Fn(&VertexParam) -> bool) -> SegmentMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::with_capacity(self.vertices.len());
        let mut params = Vec::with_capacity(self.vertices.len());
        for (i, p) in self.params.iter().enumerate() {
            if !remove(p) {
                remap[i] = vertices.len() as u32;
                vertices.push(self.vertices[i]);
                params.push(*p);
            }
        }
        let faces = self
            .faces
            .iter()
            .filter_map(|f| {
                let mapped = f.map(|v| remap[v as usize]);
                mapped.iter().all(|&v| v != u32::MAX).then_some(mapped)
            })
            .collect();
        SegmentMesh { vertices, params, faces }
    }
}

/// Number of height intervals for a segment (rings minus one).
fn interval_count(spec: &StentSegmentSpec) -> usize {
    ((spec.height / spec.h_resolution).round() as usize).max(1)
}

pub fn generate_segment_mesh(spec: &StentSegmentSpec, state: DeploymentState) -> Result<SegmentMesh, MeshError> {
    generate_segment_mesh_capped(spec, state, DEFAULT_MAX_VERTICES)
}

/// Concentric rings every `h_resolution` from `h = 0` to `h = height` with
/// one vertex per `theta_resolution`; neighbouring rings are stitched into
/// two triangles per quad and fenestrations are cut out afterwards.
pub fn generate_segment_mesh_capped(spec: &StentSegmentSpec, state: DeploymentState, max_vertices: usize) -> Result<SegmentMesh, MeshError> {
    spec.validate()?;
    let intervals = interval_count(spec);
    let rings = intervals + 1;
    let steps = (360.0 / spec.theta_resolution).round() as usize;
    let count = rings.saturating_mul(steps);
    if count > max_vertices {
        return Err(MeshError::ResolutionOverflow { vertices: count, cap: max_vertices });
    }

    let mut vertices = Vec::with_capacity(count);
    let mut params = Vec::with_capacity(count);
    for ring in 0..rings {
        let h = spec.height * ring as f64 / intervals as f64;
        let r = spec.radius_at(h, state);
        for step in 0..steps {
            let theta = spec.theta_resolution * step as f64;
            let (s, c) = theta.to_radians().sin_cos();
            vertices.push(Vector3::new(r * c, r * s, h));
            params.push(VertexParam {
                theta,
                h,
                ring: ring as u32,
                step: step as u32,
            });
        }
    }

    let mut faces = Vec::with_capacity(intervals * steps * 2);
    let idx = |ring: usize, step: usize| (ring * steps + step % steps) as u32;
    for ring in 0..intervals {
        for step in 0..steps {
            let v00 = idx(ring, step);
            let v01 = idx(ring, step + 1);
            let v10 = idx(ring + 1, step);
            let v11 = idx(ring + 1, step + 1);
            faces.push([v00, v01, v11]);
            faces.push([v00, v11, v10]);
        }
    }

    let mut mesh = SegmentMesh { vertices, params, faces };
    for f in &spec.fenestrations {
        mesh = cut_fenestration(&mesh, f);
    }
    Ok(mesh)
}

/// Removes the vertices inside `region` and every face touching them.
pub fn cut_fenestration(mesh: &SegmentMesh, region: &Fenestration) -> SegmentMesh {
    if region.is_empty() {
        return mesh.clone();
    }
    mesh.remove_vertices(|p| region.contains(p.theta, p.h))
}
