use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::{GeometryError, MarkerSet2D, MarkerSet3D};

/// Smallest admissible `|p₃ᵀ yʰ|` before a point counts as lying on the
/// principal plane.
pub const PRINCIPAL_PLANE_EPS: f64 = 1e-12;

/// A 3×4 perspective projection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 3]", into = "[[f64; 4]; 3]")]
pub struct CameraProjection(Matrix3x4<f64>);

impl CameraProjection {
    pub fn new(p: Matrix3x4<f64>) -> Result<Self, GeometryError> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("projection matrix"));
        }
        let sv = p.singular_values();
        let max = sv.max();
        if max <= 0.0 || sv.min() <= 1e-12 * max {
            return Err(GeometryError::InvalidProjection(format!("rank < 3 (singular values {sv:?})")));
        }
        Ok(Self(p))
    }

    /// `[f·I | 0]` with the source at the origin looking down +z and the
    /// detector `source_to_detector` mm away.
    pub fn pinhole(source_to_detector: f64) -> Self {
        let f = source_to_detector;
        Self(Matrix3x4::new(f, 0.0, 0.0, 0.0, 0.0, f, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0))
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    /// Left 3×3 block `A` of `P = [A | b]`.
    pub fn linear_part(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.0.column(3).into_owned()
    }

    /// Signed depth of a point: positive in front of the source.
    pub fn depth(&self, y: &Vector3<f64>) -> f64 {
        let w = (self.0 * Vector4::new(y.x, y.y, y.z, 1.0)).z;
        w * self.linear_part().determinant().signum()
    }

    /// Projects a single point, `None` on the principal plane.
    pub fn project_point(&self, y: &Vector3<f64>) -> Option<Vector2<f64>> {
        let h = self.0 * Vector4::new(y.x, y.y, y.z, 1.0);
        if h.z.abs() < PRINCIPAL_PLANE_EPS {
            return None;
        }
        Some(Vector2::new(h.x / h.z, h.y / h.z))
    }

    /// Twelve numbers, row-major, whitespace separated. Lines starting with
    /// `#` are comments.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut values = Vec::with_capacity(12);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for token in line.split_whitespace() {
                let v = f64::from_str(token).map_err(|_| {
                    GeometryError::InvalidProjection(format!("line {}: `{token}` is not a number", lineno + 1))
                })?;
                values.push(v);
            }
        }
        if values.len() != 12 {
            return Err(GeometryError::InvalidProjection(format!("expected 12 numbers, found {}", values.len())));
        }
        Self::new(Matrix3x4::from_row_slice(&values))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# 3x4 projection matrix, row-major\n");
        for r in 0..3 {
            let row: Vec<String> = (0..4).map(|c| format!("{:?}", self.0[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

impl TryFrom<[[f64; 4]; 3]> for CameraProjection {
    type Error = GeometryError;

    fn try_from(rows: [[f64; 4]; 3]) -> Result<Self, Self::Error> {
        Self::new(Matrix3x4::from_fn(|r, c| rows[r][c]))
    }
}

impl From<CameraProjection> for [[f64; 4]; 3] {
    fn from(p: CameraProjection) -> Self {
        std::array::from_fn(|r| std::array::from_fn(|c| p.0[(r, c)]))
    }
}

/// Homogeneous projection `x = p₁ᵀyʰ ⊘ p₃ᵀyʰ`, `y = p₂ᵀyʰ ⊘ p₃ᵀyʰ`.
pub fn project(p: &CameraProjection, markers: &MarkerSet3D) -> Result<MarkerSet2D, GeometryError> {
    let mut out = MarkerSet2D(Default::default());
    for (i, y) in markers.points().enumerate() {
        let h = p.0 * Vector4::new(y.x, y.y, y.z, 1.0);
        if h.z.abs() < PRINCIPAL_PLANE_EPS {
            return Err(GeometryError::PointOnPrincipalPlane {
                marker: i + 1,
                denominator: h.z,
            });
        }
        out.0[(0, i)] = h.x / h.z;
        out.0[(1, i)] = h.y / h.z;
    }
    Ok(out)
}
