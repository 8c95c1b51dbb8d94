use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, SegmentSample};
use crate::geometry::{local_frame, procrustes_align, MarkerSet3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxesMode {
    /// One axis at a time: `3 × steps` rotations.
    PerAxis,
    /// Every combination of x, y and z angles: `steps³` rotations.
    Combinatorial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rot_min: f64,
    pub rot_max: f64,
    pub rot_step: f64,
    pub scale_base: f64,
    pub scale_ratio: f64,
    pub scale_count: usize,
    /// Upper clamp of the scale grid.
    pub scale_max: f64,
    pub axes_mode: AxesMode,
    /// Re-standardize every variant through the local frame. The frame is
    /// rotation-equivariant, so this undoes the rotations and keeps only
    /// the scaling.
    pub restandardize: bool,
    /// Keep at most this many variants per input sample, drawn with
    /// `rng_seed`.
    pub max_variants: Option<usize>,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rot_min: -30.0,
            rot_max: 30.0,
            rot_step: 3.0,
            scale_base: 0.2,
            scale_ratio: 1.5,
            scale_count: 11,
            scale_max: 11.39,
            axes_mode: AxesMode::PerAxis,
            restandardize: false,
            max_variants: None,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |field: &str, reason: &str| {
            Err(DatasetError::InvalidConfig {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if !(self.rot_step > 0.0) {
            return bad("rot_step", "must be positive");
        }
        if !(self.rot_min <= self.rot_max) {
            return bad("rot_min", "must not exceed rot_max");
        }
        if !(self.scale_ratio > 1.0) {
            return bad("scale_ratio", "must exceed 1");
        }
        if !(self.scale_base > 0.0) || !(self.scale_max >= self.scale_base) {
            return bad("scale_base", "must be positive and not above scale_max");
        }
        if self.scale_count == 0 {
            return bad("scale_count", "must be at least 1");
        }
        Ok(())
    }

    /// `rot_min, rot_min + step, …` up to `rot_max` inclusive, degrees.
    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.rot_max - self.rot_min) / self.rot_step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.rot_min + i as f64 * self.rot_step).collect()
    }

    /// `scale_base · scale_ratio^k` for `k < scale_count`, clamped at
    /// `scale_max`; duplicates produced by the clamp are dropped.
    pub fn scales(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.scale_count);
        for k in 0..self.scale_count {
            let s = (self.scale_base * self.scale_ratio.powi(k as i32)).min(self.scale_max);
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn rotations(&self) -> Vec<Matrix3<f64>> {
        let angles = self.angles();
        let axis_rot = |axis: Vector3<f64>, deg: f64| *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), deg.to_radians()).matrix();
        match self.axes_mode {
            AxesMode::PerAxis => [Vector3::x(), Vector3::y(), Vector3::z()]
                .into_iter()
                .flat_map(|axis| angles.iter().map(move |&a| axis_rot(axis, a)))
                .collect(),
            AxesMode::Combinatorial => {
                let mut out = Vec::with_capacity(angles.len().pow(3));
                for &ax in &angles {
                    for &ay in &angles {
                        for &az in &angles {
                            out.push(axis_rot(Vector3::z(), az) * axis_rot(Vector3::y(), ay) * axis_rot(Vector3::x(), ax));
                        }
                    }
                }
                out
            }
        }
    }

    /// Variants generated per input sample before `max_variants`.
    pub fn variant_count(&self) -> usize {
        self.rotations().len() * self.scales().len()
    }
}

fn transform(m: &MarkerSet3D, r: &Matrix3<f64>, s: f64) -> MarkerSet3D {
    MarkerSet3D(r * m.0 * s)
}

/// Replicates every sample over the rotation × scale grid, applying the
/// same similarity to both marker sets. Global-frame and image data do not
/// survive the transform and are dropped; the segment geometry is scaled.
pub fn augment(samples: &[SegmentSample], cfg: &AugmentConfig) -> Result<Vec<SegmentSample>, DatasetError> {
    cfg.validate()?;
    let rotations = cfg.rotations();
    let scales = cfg.scales();
    let total = rotations.len() * scales.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::with_capacity(samples.len() * cfg.max_variants.unwrap_or(total).min(total));
    for sample in samples {
        let mut picks: Vec<usize> = match cfg.max_variants {
            Some(n) if n < total => sample_indices(&mut rng, total, n).into_vec(),
            _ => (0..total).collect(),
        };
        picks.sort_unstable();
        for idx in picks {
            let r = &rotations[idx / scales.len()];
            let s = scales[idx % scales.len()];
            let (y_f_l, y_p_l) = if cfg.restandardize {
                let (_, f) = local_frame(&transform(&sample.y_f_l, r, s))?;
                let (_, p) = procrustes_align(&transform(&sample.y_p_l, r, s), &f)?;
                (f, p)
            } else {
                (transform(&sample.y_f_l, r, s), transform(&sample.y_p_l, r, s))
            };
            let mut spec = sample.spec.clone();
            spec.r_fd *= s;
            spec.r_fc *= s;
            spec.w_g *= s;
            spec.height *= s;
            for f in &mut spec.fenestrations {
                f.h_center *= s;
                f.h_halfheight *= s;
            }
            out.push(SegmentSample {
                graft_id: sample.graft_id.clone(),
                segment_index: sample.segment_index,
                y_f_l,
                y_p_l,
                y_p_g: None,
                x_g: None,
                projection: None,
                spec,
                placements: sample.placements.map(|p| p.map(|[t, h]| [t, h * s])),
                pose_g: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::mde;
    use crate::mesh::StentSegmentSpec;

    fn sample() -> SegmentSample {
        let y = MarkerSet3D::from_points(&[
            [6.0, 0.0, -3.0],
            [1.0, 5.5, 2.5],
            [-5.0, 2.0, -1.0],
            [-3.0, -5.0, 3.0],
            [1.0, -2.5, -1.5],
        ]);
        let (_, y_f_l) = local_frame(&y).unwrap();
        let mut y_p_l = y_f_l.scaled(0.8);
        y_p_l.0[(2, 1)] += 0.5;
        SegmentSample {
            graft_id: "A".into(),
            segment_index: 1,
            y_f_l,
            y_p_l,
            y_p_g: None,
            x_g: None,
            projection: None,
            spec: StentSegmentSpec::new(10.0, 4.0, 1.0, 12.0),
            placements: None,
            pose_g: None,
        }
    }

    #[test]
    fn grid_sizes() {
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.angles().len(), 21);
        let scales = cfg.scales();
        assert_eq!(scales.len(), 11);
        assert_eq!(scales[0], 0.2);
        assert_eq!(*scales.last().unwrap(), 11.39);
        assert_eq!(cfg.variant_count(), 693);
        assert_eq!(augment(&[sample()], &cfg).unwrap().len(), 693);
        let comb = AugmentConfig {
            axes_mode: AxesMode::Combinatorial,
            ..cfg
        };
        assert_eq!(comb.rotations().len(), 9261);
    }

    #[test]
    fn original_present_when_grid_contains_unit_scale() {
        let cfg = AugmentConfig {
            scale_base: 1.0,
            scale_count: 2,
            ..AugmentConfig::default()
        };
        let out = augment(&[sample()], &cfg).unwrap();
        let s = sample();
        assert!(out.iter().any(|o| o.y_f_l == s.y_f_l && o.y_p_l == s.y_p_l));
    }

    #[test]
    fn scaling_is_homogeneous_and_centered() {
        let s = sample();
        let base = mde(&s.y_f_l.0, &s.y_p_l.0).unwrap();
        let cfg = AugmentConfig::default();
        let scales = cfg.scales();
        let out = augment(&[s], &cfg).unwrap();
        for (i, o) in out.iter().enumerate() {
            let k = scales[i % scales.len()];
            let v = mde(&o.y_f_l.0, &o.y_p_l.0).unwrap();
            assert!((v - k * base).abs() <= 1e-9 * (1.0 + v));
            o.validate().unwrap();
        }
    }

    #[test]
    fn restandardized_variants_are_in_local_frame() {
        let cfg = AugmentConfig {
            restandardize: true,
            max_variants: Some(40),
            rng_seed: 3,
            ..AugmentConfig::default()
        };
        let out = augment(&[sample()], &cfg).unwrap();
        assert_eq!(out.len(), 40);
        for o in &out {
            let (tf, _) = local_frame(&o.y_f_l).unwrap();
            assert!((tf.rotation - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn subsampling_is_seeded() {
        let cfg = AugmentConfig {
            max_variants: Some(25),
            rng_seed: 17,
            ..AugmentConfig::default()
        };
        assert_eq!(augment(&[sample()], &cfg).unwrap(), augment(&[sample()], &cfg).unwrap());
    }
}
