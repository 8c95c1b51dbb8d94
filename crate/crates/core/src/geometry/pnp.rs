//! Perspective-n-point pose recovery for a known projection matrix.
//!
//! A camera `P = [A | b]` with invertible `A` back-projects each image point
//! to a ray from the source `c = −A⁻¹b` with direction `d = A⁻¹(u, v, 1)ᵀ`.
//! The pose `(R, t)` must place every reference marker on its ray:
//! `d × (R y + t − c) = 0`, which is linear in the nine entries of `R` and
//! in `t`. With five markers the system leaves a two-dimensional null space;
//! the combination closest to a scaled rotation gives the initial pose,
//! which is then refined by Levenberg–Marquardt on the reprojection error
//! using left-multiplied rotation increments `exp([δ]×) R`. A fixed grid of
//! orientations is refined as well and the lowest-cost pose wins.

use nalgebra::{DMatrix, Matrix3, Rotation3, SMatrix, SVector, Vector3, SVD};

use super::{CameraProjection, GeometryError, MarkerSet2D, MarkerSet3D, RigidTransform};

/// Centered reference sets flatter than this (mm) are rejected.
pub const MIN_REFERENCE_THICKNESS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions {
    pub max_iterations: usize,
    /// Relative change of the squared residual at which refinement stops.
    pub tolerance: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

type Jacobian = SMatrix<f64, 10, 6>;
type Residual = SVector<f64, 10>;

struct Problem<'a> {
    reference: &'a MarkerSet3D,
    observed: &'a MarkerSet2D,
    camera: &'a CameraProjection,
}

impl Problem<'_> {
    fn residual(&self, pose: &RigidTransform) -> Option<Residual> {
        let mut r = Residual::zeros();
        for i in 0..5 {
            let x = pose.apply_point(&self.reference.point(i));
            // a mirror image behind the source projects identically
            if self.camera.depth(&x) <= 0.0 {
                return None;
            }
            let proj = self.camera.project_point(&x)?;
            r[2 * i] = proj.x - self.observed.0[(0, i)];
            r[2 * i + 1] = proj.y - self.observed.0[(1, i)];
        }
        Some(r)
    }

    fn jacobian(&self, pose: &RigidTransform) -> Jacobian {
        let a = self.camera.linear_part();
        let b = self.camera.offset();
        let mut j = Jacobian::zeros();
        for i in 0..5 {
            let ry = pose.rotation * self.reference.point(i);
            let x = ry + pose.translation;
            let h = a * x + b;
            let (u, v) = (h.x / h.z, h.y / h.z);
            let du = (a.row(0) - a.row(2) * u) / h.z;
            let dv = (a.row(1) - a.row(2) * v) / h.z;
            // dX/dδ = −[R y]×, dX/dt = I
            let skew = -ry.cross_matrix();
            j.fixed_view_mut::<1, 3>(2 * i, 0).copy_from(&(du * skew));
            j.fixed_view_mut::<1, 3>(2 * i, 3).copy_from(&du);
            j.fixed_view_mut::<1, 3>(2 * i + 1, 0).copy_from(&(dv * skew));
            j.fixed_view_mut::<1, 3>(2 * i + 1, 3).copy_from(&dv);
        }
        j
    }
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let sv = svd.singular_values;
        let weakest = sv.imin();
        let mut u = u;
        u.column_mut(weakest).neg_mut();
        r = u * v_t;
    }
    r
}

/// Translation minimizing the algebraic ray residual for a fixed rotation.
fn translation_for_rotation(rotation: &Matrix3<f64>, reference: &MarkerSet3D, rays: &[Vector3<f64>; 5], center: &Vector3<f64>) -> Vector3<f64> {
    // Σ [d]×ᵀ[d]× t' = −Σ [d]×ᵀ[d]× R y,  t = t' + c
    let mut lhs = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (i, d) in rays.iter().enumerate() {
        let s = d.cross_matrix();
        let sts = s.transpose() * s;
        lhs += sts;
        rhs -= sts * (rotation * reference.point(i));
    }
    let t = lhs.try_inverse().map(|inv| inv * rhs).unwrap_or_else(Vector3::zeros);
    t + center
}

fn linear_initialization(problem: &Problem<'_>) -> Option<RigidTransform> {
    let a = problem.camera.linear_part();
    let a_inv = a.try_inverse()?;
    let center = -(a_inv * problem.camera.offset());
    let rays: [Vector3<f64>; 5] = std::array::from_fn(|i| {
        (a_inv * Vector3::new(problem.observed.0[(0, i)], problem.observed.0[(1, i)], 1.0)).normalize()
    });

    // Centered, unit-spread reference keeps the system well scaled.
    let centered = problem.reference.centered();
    let spread = (centered.norm_squared() / 5.0).sqrt().max(f64::MIN_POSITIVE);

    // Unknowns: R row-major (9), t' (3). Three rows per marker, rank two.
    let mut m = DMatrix::<f64>::zeros(15, 12);
    for (i, d) in rays.iter().enumerate() {
        let y = centered.column(i) / spread;
        let s = d.cross_matrix();
        for row in 0..3 {
            for a_idx in 0..3 {
                for b_idx in 0..3 {
                    m[(3 * i + row, 3 * a_idx + b_idx)] = s[(row, a_idx)] * y[b_idx];
                }
                m[(3 * i + row, 9 + a_idx)] = s[(row, a_idx)];
            }
        }
    }
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let v1 = v_t.row(order[0]).transpose();
    let v2 = v_t.row(order[1]).transpose();
    let r1 = Matrix3::from_row_slice(&v1.as_slice()[..9]);
    let r2 = Matrix3::from_row_slice(&v2.as_slice()[..9]);

    // R = a R1 + b R2 with R Rᵀ ∝ I: linear in (a², ab, b²).
    let p11 = r1 * r1.transpose();
    let p12 = r1 * r2.transpose() + r2 * r1.transpose();
    let p22 = r2 * r2.transpose();
    let mut c = SMatrix::<f64, 5, 3>::zeros();
    for (col, p) in [p11, p12, p22].iter().enumerate() {
        c[(0, col)] = p[(0, 1)];
        c[(1, col)] = p[(0, 2)];
        c[(2, col)] = p[(1, 2)];
        c[(3, col)] = p[(0, 0)] - p[(1, 1)];
        c[(4, col)] = p[(0, 0)] - p[(2, 2)];
    }
    let csvd = SVD::new(c.transpose() * c, true, false);
    let q = csvd.u?.column(csvd.singular_values.imin()).into_owned();
    let (wa, wb) = if q[0].abs() >= q[2].abs() {
        (1.0, q[1] / q[0])
    } else {
        (q[1] / q[2], 1.0)
    };
    let mut raw = r1 * wa + r2 * wb;
    if raw.determinant() < 0.0 {
        raw = -raw;
    }
    if !raw.iter().all(|v| v.is_finite()) {
        return None;
    }
    let rotation = nearest_rotation(&raw);
    let translation = translation_for_rotation(&rotation, problem.reference, &rays, &center);
    Some(RigidTransform::new(rotation, translation))
}

struct Refined {
    pose: RigidTransform,
    cost: f64,
    converged: bool,
    iterations: usize,
}

fn refine(problem: &Problem<'_>, start: RigidTransform, opts: &PnpOptions) -> Option<Refined> {
    let mut pose = start;
    let mut r = problem.residual(&pose)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let j = problem.jacobian(&pose);
        let jtj = j.transpose() * j;
        let g = j.transpose() * r;

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for k in 0..6 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| -ch.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let delta_r = Vector3::new(step[0], step[1], step[2]);
            let delta_t = Vector3::new(step[3], step[4], step[5]);
            let rotation = Rotation3::new(delta_r).matrix() * pose.rotation;
            let candidate = RigidTransform::new(rotation, pose.translation + delta_t);
            match problem.residual(&candidate) {
                Some(r_new) if r_new.norm_squared() < cost => {
                    let new_cost = r_new.norm_squared();
                    let change = cost - new_cost;
                    pose = candidate;
                    r = r_new;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if change <= opts.tolerance * (cost + change) {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    pose.rotation = nearest_rotation(&pose.rotation);
    Some(Refined {
        pose,
        cost,
        converged,
        iterations,
    })
}

/// Recovers `(R̂, t̂)` such that `project(P, R̂·Y + t̂)` best matches the
/// observed markers in the least-squares sense. Markers correspond by number.
pub fn solve_pnp(reference: &MarkerSet3D, observed: &MarkerSet2D, camera: &CameraProjection) -> Result<RigidTransform, GeometryError> {
    solve_pnp_with(reference, observed, camera, &PnpOptions::default())
}

pub fn solve_pnp_with(
    reference: &MarkerSet3D,
    observed: &MarkerSet2D,
    camera: &CameraProjection,
    opts: &PnpOptions,
) -> Result<RigidTransform, GeometryError> {
    if !reference.is_finite() {
        return Err(GeometryError::NonFinite("reference markers"));
    }
    if !observed.is_finite() {
        return Err(GeometryError::NonFinite("observed markers"));
    }
    let smallest = reference.planarity();
    if smallest <= MIN_REFERENCE_THICKNESS {
        return Err(GeometryError::DegenerateReference { smallest });
    }
    if camera.linear_part().try_inverse().is_none() {
        return Err(GeometryError::InvalidProjection("left 3x3 block is singular (affine camera)".into()));
    }
    let problem = Problem {
        reference,
        observed,
        camera,
    };

    let mut best: Option<Refined> = None;
    if let Some(init) = linear_initialization(&problem) {
        best = refine(&problem, init, opts);
    }
    // Noisy observations leave several local minima; keep the lowest.
    for start in fallback_starts(&problem) {
        if let Some(candidate) = refine(&problem, start, opts) {
            let better = best.as_ref().is_none_or(|b| {
                (candidate.converged && !b.converged) || (candidate.converged == b.converged && candidate.cost < b.cost)
            });
            if better {
                best = Some(candidate);
            }
        }
    }

    match best {
        Some(b) if b.converged && b.cost.is_finite() => Ok(b.pose),
        Some(b) => Err(GeometryError::NoConvergence {
            residual: (b.cost / 10.0).sqrt(),
            iterations: b.iterations,
        }),
        None => Err(GeometryError::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        }),
    }
}

fn fallback_starts(problem: &Problem<'_>) -> Vec<RigidTransform> {
    let a = problem.camera.linear_part();
    let Some(a_inv) = a.try_inverse() else {
        return Vec::new();
    };
    let center = -(a_inv * problem.camera.offset());
    let rays: [Vector3<f64>; 5] = std::array::from_fn(|i| {
        (a_inv * Vector3::new(problem.observed.0[(0, i)], problem.observed.0[(1, i)], 1.0)).normalize()
    });
    let mut starts = Vec::new();
    let angles = [0.0, 0.5, 1.0, 1.5];
    for &ax in &angles {
        for &ay in &angles {
            for &az in &angles {
                let r = *Rotation3::from_euler_angles(ax * std::f64::consts::PI, ay * std::f64::consts::PI, az * std::f64::consts::PI).matrix();
                let t = translation_for_rotation(&r, problem.reference, &rays, &center);
                starts.push(RigidTransform::new(r, t));
            }
        }
    }
    starts
}
