use serde::{Deserialize, Serialize};

use super::MeshError;

/// Rectangular cutout in the (θ, h) parameter space of a segment surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fenestration {
    /// Center angle, degrees.
    pub theta_center: f64,
    /// Center height, mm.
    pub h_center: f64,
    /// Half angular width, degrees.
    pub theta_halfwidth: f64,
    /// Half height, mm.
    pub h_halfheight: f64,
}

impl Fenestration {
    pub fn is_empty(&self) -> bool {
        self.theta_halfwidth <= 0.0 || self.h_halfheight <= 0.0
    }

    /// Whether `(theta, h)` lies inside the closed rectangle, with θ taken
    /// modulo 360°.
    pub fn contains(&self, theta: f64, h: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        const EPS: f64 = 1e-9;
        let dtheta = wrapped_angle_difference(theta, self.theta_center);
        dtheta <= self.theta_halfwidth + EPS && (h - self.h_center).abs() <= self.h_halfheight + EPS
    }
}

/// `min(|a − b|, 360 − |a − b|)` after reducing both angles modulo 360°.
pub fn wrapped_angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn default_h_resolution() -> f64 {
    0.1
}

fn default_theta_resolution() -> f64 {
    1.0
}

/// Geometry of a single stent segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StentSegmentSpec {
    /// Fully-deployed radius, mm.
    pub r_fd: f64,
    /// Fully-compressed radius, mm.
    pub r_fc: f64,
    /// Graft gap width, mm.
    pub w_g: f64,
    /// Segment height, mm.
    pub height: f64,
    #[serde(default)]
    pub fenestrations: Vec<Fenestration>,
    #[serde(default = "default_h_resolution")]
    pub h_resolution: f64,
    #[serde(default = "default_theta_resolution")]
    pub theta_resolution: f64,
}

impl StentSegmentSpec {
    pub fn new(r_fd: f64, r_fc: f64, w_g: f64, height: f64) -> Self {
        Self {
            r_fd,
            r_fc,
            w_g,
            height,
            fenestrations: Vec::new(),
            h_resolution: default_h_resolution(),
            theta_resolution: default_theta_resolution(),
        }
    }

    pub fn with_fenestration(mut self, f: Fenestration) -> Self {
        self.fenestrations.push(f);
        self
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let check = |ok: bool, field: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(MeshError::InvalidSpec {
                    field,
                    reason: reason.to_string(),
                })
            }
        };
        let finite = [self.r_fd, self.r_fc, self.w_g, self.height, self.h_resolution, self.theta_resolution]
            .iter()
            .all(|v| v.is_finite());
        check(finite, "spec", "all values must be finite")?;
        check(self.r_fc > 0.0, "r_fc", "must be positive")?;
        check(
            self.r_fc <= self.r_fd,
            "r_fc",
            &format!("compressed radius {} exceeds deployed radius {}", self.r_fc, self.r_fd),
        )?;
        check(self.w_g >= 0.0, "w_g", "must be non-negative")?;
        check(self.height > 0.0, "height", "must be positive")?;
        check(self.h_resolution > 0.0, "h_resolution", "must be positive")?;
        check(self.theta_resolution > 0.0, "theta_resolution", "must be positive")?;
        let steps = 360.0 / self.theta_resolution;
        check(
            (steps - steps.round()).abs() < 1e-9,
            "theta_resolution",
            "must divide 360 degrees evenly",
        )?;
        Ok(())
    }

    /// `(r_pd, r_pc)` for this segment.
    pub fn partial_radii(&self) -> (f64, f64) {
        partial_diameters_unchecked(self.r_fd, self.r_fc, self.w_g)
    }

    /// Radius of the surface at height `h` for the given state. The
    /// partially-deployed cone runs from `r_pd` at `h = 0` to `r_pc` at
    /// `h = height`.
    pub fn radius_at(&self, h: f64, state: DeploymentState) -> f64 {
        match state {
            DeploymentState::FullyDeployed => self.r_fd,
            DeploymentState::PartiallyDeployed => {
                let (r_pd, r_pc) = self.partial_radii();
                r_pd + (r_pc - r_pd) * (h / self.height)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeploymentState {
    FullyDeployed,
    PartiallyDeployed,
}

fn partial_diameters_unchecked(r_fd: f64, r_fc: f64, w_g: f64) -> (f64, f64) {
    (r_fd, (r_fc + 2.0 * w_g).min(r_fd))
}

/// Deployed- and compressed-side sizes of a partially-deployed segment:
/// `r_pd = r_fd`, `r_pc = min(r_fc + 2 w_g, r_fd)`.
pub fn partial_diameters(r_fd: f64, r_fc: f64, w_g: f64) -> Result<(f64, f64), MeshError> {
    StentSegmentSpec::new(r_fd, r_fc, w_g, 1.0).validate()?;
    Ok(partial_diameters_unchecked(r_fd, r_fc, w_g))
}
