use nalgebra::{Matrix3, Vector3, SVD};

use super::{GeometryError, MarkerSet3D, RigidTransform};

/// Least-squares rigid transform taking `source[i]` onto `target[i]`.
///
/// Both sets are centered, the cross-covariance `Σ (sᵢ − s̄)(tᵢ − t̄)ᵀ =
/// U Σ Vᵀ` is decomposed and `R = V Uᵀ`; when that product is a reflection
/// the column of `V` belonging to the smallest singular value is negated.
pub fn rigid_fit(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<RigidTransform, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::CountMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.is_empty() {
        return Err(GeometryError::DegenerateConfiguration { singular_values: [0.0; 3] });
    }
    if !source.iter().chain(target).all(|p| p.iter().all(|v| v.is_finite())) {
        return Err(GeometryError::NonFinite("alignment input"));
    }
    let n = source.len() as f64;
    let cs = source.iter().sum::<Vector3<f64>>() / n;
    let ct = target.iter().sum::<Vector3<f64>>() / n;

    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }

    let svd = SVD::new(h, true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let sorted = [sv[order[0]], sv[order[1]], sv[order[2]]];
    let spread_s = source.iter().map(|p| (p - cs).norm_squared()).sum::<f64>().sqrt();
    let spread_t = target.iter().map(|p| (p - ct).norm_squared()).sum::<f64>().sqrt();
    let scale = spread_s * spread_t;
    // The rotation is unique as long as the cross-covariance has rank ≥ 2.
    if scale <= f64::MIN_POSITIVE || sorted[1] <= 1e-12 * scale {
        return Err(GeometryError::DegenerateConfiguration { singular_values: sorted });
    }

    let mut v = v_t.transpose();
    let mut rotation = v * u.transpose();
    if rotation.determinant() < 0.0 {
        let weakest = order[2];
        let mut col = v.column_mut(weakest);
        col.neg_mut();
        rotation = v * u.transpose();
    }
    let translation = ct - rotation * cs;
    Ok(RigidTransform::new(rotation, translation))
}

/// Rigidly aligns `source` onto `reference` by marker number.
///
/// Returns the transform and `R·source + t`.
pub fn procrustes_align(source: &MarkerSet3D, reference: &MarkerSet3D) -> Result<(RigidTransform, MarkerSet3D), GeometryError> {
    let src: Vec<Vector3<f64>> = source.points().collect();
    let dst: Vec<Vector3<f64>> = reference.points().collect();
    let transform = rigid_fit(&src, &dst)?;
    Ok((transform, transform.apply(source)))
}
