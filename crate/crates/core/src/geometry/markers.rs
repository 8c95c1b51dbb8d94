use nalgebra::{Matrix2x5, Matrix3, Matrix3x5, Point3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Centers of the five markers in mm, one column per marker (numbered 1–5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct MarkerSet3D(pub Matrix3x5<f64>);

/// Image-plane marker positions, one column per marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct MarkerSet2D(pub Matrix2x5<f64>);

impl MarkerSet3D {
    pub fn from_columns(points: &[Vector3<f64>; 5]) -> Self {
        Self(Matrix3x5::from_columns(points))
    }

    pub fn from_points(points: &[[f64; 3]; 5]) -> Self {
        Self(Matrix3x5::from_fn(|r, c| points[c][r]))
    }

    pub fn zeros() -> Self {
        Self(Matrix3x5::zeros())
    }

    pub fn point(&self, marker: usize) -> Vector3<f64> {
        self.0.column(marker).into_owned()
    }

    pub fn points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.0.column_iter().map(|c| c.into_owned())
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.0.column_mean()
    }

    /// Coordinates with the centroid subtracted from every column.
    pub fn centered(&self) -> Matrix3x5<f64> {
        let c = self.centroid();
        let mut m = self.0;
        for mut col in m.column_iter_mut() {
            col -= c;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }

    /// Smallest singular value of the centered coordinates; near zero means
    /// the markers are coplanar.
    pub fn planarity(&self) -> f64 {
        let c = self.centered();
        let sv = (c * c.transpose()).symmetric_eigen().eigenvalues;
        sv.min().max(0.0).sqrt()
    }
}

impl TryFrom<Vec<[f64; 3]>> for MarkerSet3D {
    type Error = String;

    fn try_from(points: Vec<[f64; 3]>) -> Result<Self, Self::Error> {
        let points: [[f64; 3]; 5] = points
            .try_into()
            .map_err(|p: Vec<[f64; 3]>| format!("expected 5 markers, found {}", p.len()))?;
        Ok(Self::from_points(&points))
    }
}

impl From<MarkerSet3D> for Vec<[f64; 3]> {
    fn from(m: MarkerSet3D) -> Self {
        m.0.column_iter().map(|c| [c[0], c[1], c[2]]).collect()
    }
}

impl MarkerSet2D {
    pub fn from_points(points: &[[f64; 2]; 5]) -> Self {
        Self(Matrix2x5::from_fn(|r, c| points[c][r]))
    }

    pub fn point(&self, marker: usize) -> Vector2<f64> {
        self.0.column(marker).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<Vec<[f64; 2]>> for MarkerSet2D {
    type Error = String;

    fn try_from(points: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        let points: [[f64; 2]; 5] = points
            .try_into()
            .map_err(|p: Vec<[f64; 2]>| format!("expected 5 markers, found {}", p.len()))?;
        Ok(Self::from_points(&points))
    }
}

impl From<MarkerSet2D> for Vec<[f64; 2]> {
    fn from(m: MarkerSet2D) -> Self {
        m.0.column_iter().map(|c| [c[0], c[1]]).collect()
    }
}

/// `x ↦ R x + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TransformRecord", into = "TransformRecord")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Row-major file form of a [`RigidTransform`].
#[derive(Serialize, Deserialize)]
struct TransformRecord {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<TransformRecord> for RigidTransform {
    fn from(r: TransformRecord) -> Self {
        Self::new(Matrix3::from_fn(|i, j| r.rotation[i][j]), Vector3::from(r.translation))
    }
}

impl From<RigidTransform> for TransformRecord {
    fn from(t: RigidTransform) -> Self {
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| t.rotation[(i, j)])),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// Rotation about `axis` by `angle` radians, no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = Rotation3::from_scaled_axis(axis.normalize() * angle);
        Self::new(*rot.matrix(), Vector3::zeros())
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_point3(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.apply_point(&p.coords))
    }

    pub fn apply(&self, markers: &MarkerSet3D) -> MarkerSet3D {
        let mut m = self.rotation * markers.0;
        for mut col in m.column_iter_mut() {
            col += self.translation;
        }
        MarkerSet3D(m)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    /// Orthonormality and orientation error: `max(‖RᵀR − I‖, |det R − 1|)`.
    pub fn rotation_error(&self) -> f64 {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        orth.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        Ok(())
    }
}
