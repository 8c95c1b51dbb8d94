use nalgebra::Matrix3;

use super::{GeometryError, MarkerSet3D, RigidTransform};

/// Standardizes a marker set into its local frame.
///
/// The origin is the marker centroid. With `c₁, c₂` the centered markers 1
/// and 2, the axes are `c₁`, `c₁ × c₂` and their cross product, normalized.
/// Returns the transform mapping local to global coordinates together with
/// the local coordinates, so that `transform.apply(local) == global`.
pub fn local_frame(global: &MarkerSet3D) -> Result<(RigidTransform, MarkerSet3D), GeometryError> {
    if !global.is_finite() {
        return Err(GeometryError::NonFinite("marker set"));
    }
    let t = global.centroid();
    let centered = global.centered();
    let c1 = centered.column(0).into_owned();
    let c2 = centered.column(1).into_owned();

    let scale = centered.amax().max(1.0);
    for (marker, c) in [(1, &c1), (2, &c2)] {
        if c.norm() <= 1e-12 * scale {
            return Err(GeometryError::CoincidentMarkers { marker });
        }
    }
    let v1 = c1;
    let v2 = c1.cross(&c2);
    if v2.norm() <= 1e-9 * (c1.norm() * c2.norm()).max(1.0) {
        return Err(GeometryError::DegenerateFrame);
    }
    let v3 = v1.cross(&v2);
    let rotation = Matrix3::from_columns(&[v1.normalize(), v2.normalize(), v3.normalize()]);
    let transform = RigidTransform::new(rotation, t);
    let local = MarkerSet3D(rotation.transpose() * centered);
    Ok((transform, local))
}
