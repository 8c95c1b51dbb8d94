use nalgebra::{Matrix2x5, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, SegmentSample};
use crate::geometry::{local_frame, procrustes_align, project, CameraProjection, MarkerSet2D, MarkerSet3D, RigidTransform, MIN_REFERENCE_THICKNESS};
use crate::mesh::{surface_point, DeploymentState, Fenestration, StentSegmentSpec};

/// Standard deviations of the placement noise on the partially-deployed
/// markers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterConfig {
    pub angular_deg: f64,
    pub axial_mm: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            angular_deg: 3.0,
            axial_mm: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationConfig {
    pub camera: CameraProjection,
    /// Per-coordinate standard deviation of the 2D observation noise.
    pub noise_sigma: f64,
}

fn normal(std: f64, what: &str) -> Result<Normal<f64>, DatasetError> {
    Normal::new(0.0, std).map_err(|_| DatasetError::InvalidConfig {
        field: what.into(),
        reason: format!("standard deviation {std} is invalid"),
    })
}

fn marker_set(spec: &StentSegmentSpec, state: DeploymentState, placements: &[[f64; 2]; 5]) -> MarkerSet3D {
    MarkerSet3D::from_columns(&placements.map(|[t, h]| surface_point(spec, state, t, h)))
}

/// Places five markers on the fully-deployed cylinder and, with seeded
/// jitter, on the partially-deployed cone; poses the cone markers into the
/// global frame and derives the local-frame pair and the optional 2D
/// observation from them.
pub fn simulate_deployment(
    spec: &StentSegmentSpec,
    placements: &[[f64; 2]; 5],
    jitter: &JitterConfig,
    pose: &RigidTransform,
    observation: Option<&ObservationConfig>,
    seed: u64,
) -> Result<SegmentSample, DatasetError> {
    spec.validate()?;
    pose.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ang = normal(jitter.angular_deg, "jitter.angular_deg")?;
    let ax = normal(jitter.axial_mm, "jitter.axial_mm")?;

    let full = marker_set(spec, DeploymentState::FullyDeployed, placements);
    let smallest = full.planarity();
    if smallest <= MIN_REFERENCE_THICKNESS {
        return Err(DatasetError::CoplanarPlacement { smallest });
    }
    let jittered = placements.map(|[t, h]| {
        let dt = ang.sample(&mut rng);
        let dh = ax.sample(&mut rng);
        [t + dt, (h + dh).clamp(0.0, spec.height)]
    });
    let partial = marker_set(spec, DeploymentState::PartiallyDeployed, &jittered);
    let smallest = partial.planarity();
    if smallest <= MIN_REFERENCE_THICKNESS {
        return Err(DatasetError::CoplanarPlacement { smallest });
    }

    let y_p_g = pose.apply(&partial);
    let (_, y_f_l) = local_frame(&full)?;
    let (_, y_p_l) = procrustes_align(&y_p_g, &y_f_l)?;

    let (x_g, projection) = match observation {
        Some(obs) => {
            let noise = normal(obs.noise_sigma, "observation.noise_sigma")?;
            let ideal = project(&obs.camera, &y_p_g)?;
            let perturbation = Matrix2x5::from_fn(|_, _| noise.sample(&mut rng));
            (Some(MarkerSet2D(ideal.0 + perturbation)), Some(obs.camera))
        }
        None => (None, None),
    };

    Ok(SegmentSample {
        graft_id: "synthetic".into(),
        segment_index: 0,
        y_f_l,
        y_p_l,
        y_p_g: Some(y_p_g),
        x_g,
        projection,
        spec: spec.clone(),
        placements: Some(*placements),
        pose_g: Some(*pose),
    })
}

/// Closed interval, written `[min, max]` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

impl TryFrom<[f64; 2]> for Range {
    type Error = String;

    fn try_from([min, max]: [f64; 2]) -> Result<Self, Self::Error> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(format!("invalid range [{min}, {max}]"));
        }
        Ok(Self { min, max })
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    /// Source-to-detector distance, mm.
    pub source_to_detector: f64,
    /// Nominal source-to-object distance, mm.
    pub source_to_object: f64,
    /// Half-range of the random lateral offset of a segment, mm.
    pub lateral_mm: f64,
    /// Half-range of the random depth offset of a segment, mm.
    pub depth_mm: f64,
    /// Per-coordinate standard deviation of the observed 2D markers.
    pub observation_sigma: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            source_to_detector: 1000.0,
            source_to_object: 400.0,
            lateral_mm: 20.0,
            depth_mm: 20.0,
            observation_sigma: 0.65,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub name: String,
    pub segments: usize,
    pub r_fd: Range,
    pub r_fc: Range,
    pub w_g: Range,
    pub height: Range,
    /// Nominal marker angles, degrees.
    #[serde(default = "default_theta")]
    pub placement_theta: [f64; 5],
    /// Nominal marker heights as fractions of the segment height.
    #[serde(default = "default_height_fraction")]
    pub placement_height: [f64; 5],
    /// Half-range of the per-marker angular variation between segments.
    #[serde(default = "default_theta_spread")]
    pub theta_spread_deg: f64,
    /// Half-range of the per-marker height-fraction variation.
    #[serde(default = "default_height_spread")]
    pub height_spread: f64,
    #[serde(default)]
    pub fenestrations: Vec<Fenestration>,
}

fn default_theta() -> [f64; 5] {
    [0.0, 80.0, 160.0, 240.0, 310.0]
}

fn default_height_fraction() -> [f64; 5] {
    [0.15, 0.85, 0.3, 0.7, 0.5]
}

fn default_theta_spread() -> f64 {
    8.0
}

fn default_height_spread() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Required by [`generate_dataset`]; the command line may supply it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub jitter: JitterConfig,
    #[serde(rename = "family")]
    pub families: Vec<FamilyConfig>,
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DatasetError::InvalidConfig {
            field: "config".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |field: String, reason: String| Err(DatasetError::InvalidConfig { field, reason });
        let c = &self.camera;
        if !(c.source_to_detector > 0.0) {
            return bad("camera.source_to_detector".into(), "must be positive".into());
        }
        if !(c.source_to_object > c.depth_mm + 100.0) {
            return bad("camera.source_to_object".into(), "must exceed depth_mm by at least 100 mm".into());
        }
        if !(c.observation_sigma >= 0.0) || !(c.lateral_mm >= 0.0) || !(c.depth_mm >= 0.0) {
            return bad("camera".into(), "offsets and noise must be non-negative".into());
        }
        if !(self.jitter.angular_deg >= 0.0 && self.jitter.axial_mm >= 0.0) {
            return bad("jitter".into(), "standard deviations must be non-negative".into());
        }
        if self.families.is_empty() {
            return bad("family".into(), "at least one family is required".into());
        }
        for (i, f) in self.families.iter().enumerate() {
            let field = |name: &str| format!("family[{i}].{name}");
            if f.segments == 0 {
                return bad(field("segments"), "must be positive".into());
            }
            if !(f.r_fc.min > 0.0) {
                return bad(field("r_fc"), "must be positive".into());
            }
            if f.r_fc.max > f.r_fd.min {
                return bad(
                    field("r_fc"),
                    format!("compressed radius up to {} exceeds deployed radius from {}", f.r_fc.max, f.r_fd.min),
                );
            }
            if !(f.w_g.min >= 0.0) {
                return bad(field("w_g"), "must be non-negative".into());
            }
            if !(f.height.min > 0.0) {
                return bad(field("height"), "must be positive".into());
            }
            if f.placement_height.iter().any(|h| !(0.0..=1.0).contains(h)) {
                return bad(field("placement_height"), "fractions must lie in [0, 1]".into());
            }
            if self.families[..i].iter().any(|g| g.name == f.name) {
                return bad(field("name"), format!("duplicate family name `{}`", f.name));
            }
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraProjection {
        CameraProjection::pinhole(self.camera.source_to_detector)
    }
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q: Vector4<f64> = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q))
}

/// Draws every segment of every family in order from one seeded stream.
pub fn generate_dataset(cfg: &SimulationConfig) -> Result<Vec<SegmentSample>, DatasetError> {
    cfg.validate()?;
    let seed = cfg.seed.ok_or_else(|| DatasetError::InvalidConfig {
        field: "seed".into(),
        reason: "is required to generate a dataset".into(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observation = ObservationConfig {
        camera: cfg.camera(),
        noise_sigma: cfg.camera.observation_sigma,
    };
    let mut out = Vec::new();
    for family in &cfg.families {
        for index in 0..family.segments {
            let mut spec = StentSegmentSpec::new(
                family.r_fd.sample(&mut rng),
                family.r_fc.sample(&mut rng),
                family.w_g.sample(&mut rng),
                family.height.sample(&mut rng),
            );
            spec.fenestrations = family.fenestrations.clone();
            let offset = rng.random_range(0.0..360.0);
            let placements: [[f64; 2]; 5] = std::array::from_fn(|m| {
                let t = family.placement_theta[m] + offset + rng.random_range(-1.0..=1.0) * family.theta_spread_deg;
                let frac = (family.placement_height[m] + rng.random_range(-1.0..=1.0) * family.height_spread).clamp(0.0, 1.0);
                [t.rem_euclid(360.0), frac * spec.height]
            });
            let c = &cfg.camera;
            let translation = Vector3::new(
                rng.random_range(-1.0..=1.0) * c.lateral_mm,
                rng.random_range(-1.0..=1.0) * c.lateral_mm,
                c.source_to_object + rng.random_range(-1.0..=1.0) * c.depth_mm,
            );
            let rotation = random_rotation(&mut rng);
            // keep the segment centered on the translation regardless of the rotation
            let center = Vector3::new(0.0, 0.0, spec.height / 2.0);
            let pose = RigidTransform::new(*rotation.to_rotation_matrix().matrix(), translation - rotation * center);
            let seed = rng.random::<u64>();
            let mut sample = simulate_deployment(&spec, &placements, &cfg.jitter, &pose, Some(&observation), seed)?;
            sample.graft_id = family.name.clone();
            sample.segment_index = index as u32 + 1;
            out.push(sample);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::mde;
    use nalgebra::Rotation3;

    const PLACEMENTS: [[f64; 2]; 5] = [[0.0, 3.0], [80.0, 17.0], [160.0, 6.0], [240.0, 14.0], [310.0, 10.0]];

    fn pose() -> RigidTransform {
        RigidTransform::new(*Rotation3::from_euler_angles(0.3, 1.1, -0.4).matrix(), Vector3::new(4.0, -6.0, 400.0))
    }

    #[test]
    fn closed_form_cone_map() {
        let spec = StentSegmentSpec::new(15.0, 4.0, 2.0, 20.0);
        let jitter = JitterConfig {
            angular_deg: 0.0,
            axial_mm: 0.0,
        };
        let s = simulate_deployment(&spec, &PLACEMENTS, &jitter, &RigidTransform::identity(), None, 1).unwrap();
        let y = s.y_p_g.unwrap();
        for (m, [t, h]) in PLACEMENTS.iter().enumerate() {
            let r = 15.0 + (8.0 - 15.0) * h / 20.0;
            let expected = Vector3::new(r * t.to_radians().cos(), r * t.to_radians().sin(), *h);
            assert!((y.point(m) - expected).norm() <= 1e-12);
        }
        assert!(s.y_f_l.centroid().norm() <= 1e-9);
        s.validate().unwrap();
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let spec = StentSegmentSpec::new(15.0, 4.0, 2.0, 20.0);
        let obs = ObservationConfig {
            camera: CameraProjection::pinhole(1000.0),
            noise_sigma: 0.65,
        };
        let a = simulate_deployment(&spec, &PLACEMENTS, &JitterConfig::default(), &pose(), Some(&obs), 4).unwrap();
        let b = simulate_deployment(&spec, &PLACEMENTS, &JitterConfig::default(), &pose(), Some(&obs), 4).unwrap();
        let c = simulate_deployment(&spec, &PLACEMENTS, &JitterConfig::default(), &pose(), Some(&obs), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y_p_l, c.y_p_l);
        let ideal = project(&obs.camera, &a.y_p_g.unwrap()).unwrap();
        let noise = mde(&ideal.0, &a.x_g.unwrap().0).unwrap();
        assert!(noise > 0.0 && noise < 4.0);
    }

    #[test]
    fn deployment_regimes() {
        let jitter = JitterConfig::default();
        let iliac = StentSegmentSpec::new(5.0, 4.0, 0.5, 10.0);
        let fen = StentSegmentSpec::new(15.0, 4.0, 2.0, 20.0);
        let p_iliac = PLACEMENTS.map(|[t, h]| [t, h / 2.0]);
        let mut iliac_var = 0.0;
        let mut fen_var = 0.0;
        for seed in 0..20 {
            iliac_var += simulate_deployment(&iliac, &p_iliac, &jitter, &pose(), None, seed).unwrap().initial_variation();
            fen_var += simulate_deployment(&fen, &PLACEMENTS, &jitter, &pose(), None, seed).unwrap().initial_variation();
        }
        assert!(iliac_var / 20.0 < 1.0, "iliac {iliac_var}");
        assert!(fen_var / 20.0 > 2.0, "fenestrated {fen_var}");
    }

    #[test]
    fn coplanar_placement_is_rejected() {
        let spec = StentSegmentSpec::new(15.0, 4.0, 2.0, 20.0);
        let flat = PLACEMENTS.map(|[t, _]| [t, 5.0]);
        let err = simulate_deployment(&spec, &flat, &JitterConfig::default(), &pose(), None, 0).unwrap_err();
        assert!(matches!(err, DatasetError::CoplanarPlacement { .. }));
    }

    fn config() -> SimulationConfig {
        let family = |name: &str, r_fd: f64| FamilyConfig {
            name: name.into(),
            segments: 3,
            r_fd: Range { min: r_fd - 1.0, max: r_fd + 1.0 },
            r_fc: Range::fixed(4.0),
            w_g: Range { min: 1.5, max: 2.0 },
            height: Range { min: 15.0, max: 20.0 },
            placement_theta: default_theta(),
            placement_height: default_height_fraction(),
            theta_spread_deg: default_theta_spread(),
            height_spread: default_height_spread(),
            fenestrations: vec![],
        };
        SimulationConfig {
            seed: Some(99),
            camera: CameraConfig::default(),
            jitter: JitterConfig::default(),
            families: vec![family("A", 14.0), family("B", 15.0), family("C", 16.0)],
        }
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let cfg = config();
        let a = generate_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(a, generate_dataset(&cfg).unwrap());
        assert_eq!(a[4].id(), "B/2");
        for s in &a {
            s.validate().unwrap();
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = config();
        let back = SimulationConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let mut bad = cfg.clone();
        bad.families[1].r_fc = Range::fixed(20.0);
        match bad.validate() {
            Err(DatasetError::InvalidConfig { field, .. }) => assert_eq!(field, "family[1].r_fc"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SimulationConfig::from_toml("seed = 1\n[[family]]\nname = \"A\"\nsegments = 1\nr_fd = [5, 4]\nr_fc = [1, 1]\nw_g = [0, 0]\nheight = [5, 5]\n").is_err());
    }
}
