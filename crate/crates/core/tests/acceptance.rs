//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Built with `harness = false` so the lines are always shown. Every
//! tolerance is pinned below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stentshape::dataset::{generate_dataset, mde, write_dataset, SegmentSample, SimulationConfig};
use stentshape::gcn::{forward, gradients, loss, markers_to_features, save_checkpoint, Checkpoint, GcnConfig, GcnModel};
use stentshape::geometry::{instantiate_markers, procrustes_align, project, solve_pnp, CameraProjection, MarkerSet3D, RigidTransform};
use stentshape::graph::{build_marker_graph, chebyshev_apply, spectral_conv_direct, MarkerGraph, NodeFeatures};
use stentshape::mesh::{brute_force_distance, generate_segment_mesh, surface_point, DeploymentState, Fenestration, StentSegmentSpec, TriangleBvh};
use stentshape::pipeline::{crossval, evaluate, fit, CrossvalReport, EvalOptions, FitConfig, SegmentModel};

const AORTIC: &str = include_str!("../../../configs/aortic.toml");
const ILIAC: &str = include_str!("../../../configs/iliac.toml");
const TRAIN: &str = include_str!("../../../configs/train.toml");

// 1
const FILTER_TOL: f64 = 1e-10;
const FILTER_CASES: usize = 100;
const FILTER_BUDGET_S: f64 = 1.0;
// 2
const GRAD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;
const GRAD_CASES: u64 = 24;
const GRAD_BUDGET_S: f64 = 30.0;
// 3
const LAPLACIAN_TOL: f64 = 1e-9;
// 4
const ALIGN_TOL: f64 = 1e-9;
const ALIGN_TRIALS: usize = 1000;
// 5
const PNP_REPROJECTION_TOL: f64 = 1e-6;
const PNP_MARKER_TOL: f64 = 1e-5;
const PNP_TRIALS: usize = 500;
// 6
const INITIAL_VARIATION_RANGE: (f64, f64) = (4.5, 5.5);
const LEARNING_RATIO_MAX: f64 = 0.5;
const CROSSVAL_BUDGET_S: f64 = 15.0 * 60.0;
// 7
const ILIAC_RATIO_RANGE: (f64, f64) = (0.7, 1.5);
// 8
const OBSERVATION_SIGMA: f64 = 0.65;
const ROBUSTNESS_MAX: f64 = 0.30;
// 9
const MARKER_3D_RANGE: (f64, f64) = (0.5, 4.0);
const MESH_DISTANCE_RANGE: (f64, f64) = (0.5, 4.0);
const ANGULAR_MAX_DEG: f64 = 15.0;
// 10
const STAGE_BUDGET_MS: f64 = 10.0;
const FORWARD_REPEATS: usize = 2000;
// 11
const MESH_ORACLE_TOL: f64 = 1e-9;
const MESH_QUERIES: usize = 1000;

const CROSSVAL_SEED: u64 = 7;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    *UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)).to_rotation_matrix().matrix()
}

fn random_markers(rng: &mut impl Rng, half: f64) -> MarkerSet3D {
    MarkerSet3D::from_columns(&std::array::from_fn(|_| Vector3::from_fn(|_, _| rng.random_range(-half..half))))
}

fn spectral_filter() -> Verdict {
    let graph = build_marker_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..FILTER_CASES {
        let k = 1 + case % 4;
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let channels = rng.random_range(1..=6);
        let x = NodeFeatures(DMatrix::from_fn(5, channels, |_, _| rng.random_range(-10.0..10.0)));
        let a = chebyshev_apply(&graph, &theta, &x).unwrap();
        let b = spectral_conv_direct(&graph, &theta, &x).unwrap();
        worst = worst.max((a.values() - b.values()).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= FILTER_TOL && secs < FILTER_BUDGET_S,
        format!("Chebyshev vs eigenbasis filter over {FILTER_CASES} cases: max |diff| {worst:.2e} (tol {FILTER_TOL:.0e}), {secs:.3} s (budget {FILTER_BUDGET_S} s)"),
    )
}

fn loss_at(model: &GcnModel, graph: &MarkerGraph, x: &NodeFeatures, target: &DMatrix<f64>, alpha: f64) -> f64 {
    let (out, _) = forward(model, graph, x).unwrap();
    loss(out.values(), target, &model.params, alpha).unwrap()
}

fn gradient_check() -> Verdict {
    let graph = build_marker_graph();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..GRAD_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + case);
        let cfg = GcnConfig {
            hidden_layers: rng.random_range(1..=2),
            channels: rng.random_range(2..=4),
            k: rng.random_range(1..=3),
            leaky_slope: rng.random_range(0.05..1.0),
            ..GcnConfig::default()
        };
        let mut model = GcnModel::initialized(cfg, &mut rng).unwrap();
        let flat: Vec<f64> = model.params.to_flat().iter().map(|_| rng.random_range(-0.8..0.8)).collect();
        model.params.set_flat(&flat);
        let x = NodeFeatures(DMatrix::from_fn(5, 3, |_, _| rng.random_range(-3.0..3.0)));
        let target = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-3.0..3.0));
        let alpha = if case % 2 == 0 { 0.0 } else { 0.05 };
        let analytic = gradients(&model, &graph, &x, &target, alpha).unwrap().to_flat();
        let mut probe = model.clone();
        for (i, g) in analytic.iter().enumerate() {
            let mut p = flat.clone();
            p[i] += GRAD_STEP;
            probe.params.set_flat(&p);
            let up = loss_at(&probe, &graph, &x, &target, alpha);
            p[i] -= 2.0 * GRAD_STEP;
            probe.params.set_flat(&p);
            let down = loss_at(&probe, &graph, &x, &target, alpha);
            let fd = (up - down) / (2.0 * GRAD_STEP);
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-3));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= GRAD_TOL && secs < GRAD_BUDGET_S,
        format!("analytic vs central differences over {GRAD_CASES} networks: max relative error {worst:.2e} (tol {GRAD_TOL:.0e}), {secs:.2} s (budget {GRAD_BUDGET_S} s)"),
    )
}

fn laplacian_suite() -> Verdict {
    let graph = build_marker_graph();
    let l = graph.laplacian();
    let asym = (l - l.transpose()).amax();
    let eig = l.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let null = l * graph.degree().map(f64::sqrt);
    let mut ours: Vec<f64> = graph.eigenvalues().iter().copied().collect();
    let mut oracle: Vec<f64> = eig.iter().copied().collect();
    ours.sort_by(f64::total_cmp);
    oracle.sort_by(f64::total_cmp);
    let eig_diff = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(
        asym <= LAPLACIAN_TOL && lo >= -LAPLACIAN_TOL && hi <= 2.0 + LAPLACIAN_TOL && null.norm() <= LAPLACIAN_TOL && eig_diff <= LAPLACIAN_TOL,
        format!(
            "asymmetry {asym:.1e}, eigenvalues in [{lo:.3e}, {hi:.6}], |L D^1/2 1| {:.1e}, Jacobi vs nalgebra eigenvalues {eig_diff:.1e} (tol {LAPLACIAN_TOL:.0e})",
            null.norm()
        ),
    )
}

fn procrustes_recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut failures = 0;
    for trial in 0..ALIGN_TRIALS {
        let mut reference = random_markers(&mut rng, 20.0);
        // planar and nearly planar sets are where an unguarded SVD returns a reflection
        let flatten = match trial % 4 {
            0 => Some(0.0),
            1 => Some(1e-7),
            2 => Some(1e-3),
            _ => None,
        };
        if let Some(thickness) = flatten {
            let tilt = random_rotation(&mut rng);
            for j in 0..5 {
                reference.0[(2, j)] = thickness * rng.random_range(-1.0..1.0);
            }
            reference = RigidTransform::new(tilt, Vector3::zeros()).apply(&reference);
        }
        let motion = RigidTransform::new(random_rotation(&mut rng), Vector3::from_fn(|_, _| rng.random_range(-500.0..500.0)));
        let source = motion.apply(&reference);
        match procrustes_align(&source, &reference) {
            Ok((t, aligned)) => {
                worst = worst.max(mde(&aligned.0, &reference.0).unwrap());
                worst_det = worst_det.max((t.rotation.determinant() - 1.0).abs());
            }
            Err(_) => failures += 1,
        }
    }
    verdict(
        failures == 0 && worst <= ALIGN_TOL && worst_det <= 1e-12,
        format!("{ALIGN_TRIALS} motions, half of them planar or nearly planar: max MDE {worst:.2e} mm (tol {ALIGN_TOL:.0e}), max |det R - 1| {worst_det:.1e}, {failures} failures"),
    )
}

fn pnp_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let camera = CameraProjection::pinhole(1000.0);
    let mut worst_2d = 0.0f64;
    let mut worst_3d = 0.0f64;
    let mut failures = 0;
    for trial in 0..PNP_TRIALS {
        // alternate between random clouds and markers on a partially deployed cone
        let reference = if trial % 2 == 0 {
            random_markers(&mut rng, 15.0)
        } else {
            let spec = StentSegmentSpec::new(rng.random_range(10.0..16.0), rng.random_range(3.0..5.0), 0.5, rng.random_range(12.0..20.0));
            let points = std::array::from_fn(|i| {
                let theta = 72.0 * i as f64 + rng.random_range(-20.0..20.0);
                let h = spec.height * rng.random_range(0.1..0.9);
                surface_point(&spec, DeploymentState::PartiallyDeployed, theta, h)
            });
            MarkerSet3D::from_columns(&points)
        };
        let pose = RigidTransform::new(
            random_rotation(&mut rng),
            Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(150.0..700.0)),
        );
        let truth = pose.apply(&reference);
        let observed = project(&camera, &truth).unwrap();
        match solve_pnp(&reference, &observed, &camera) {
            Ok(est) => {
                let recovered = est.apply(&reference);
                worst_2d = worst_2d.max(mde(&project(&camera, &recovered).unwrap().0, &observed.0).unwrap());
                worst_3d = worst_3d.max(mde(&recovered.0, &truth.0).unwrap());
            }
            Err(_) => failures += 1,
        }
    }
    verdict(
        failures == 0 && worst_2d <= PNP_REPROJECTION_TOL && worst_3d <= PNP_MARKER_TOL,
        format!(
            "{PNP_TRIALS} noiseless poses: max reprojection MDE {worst_2d:.2e} mm (tol {PNP_REPROJECTION_TOL:.0e}), max 3D MDE {worst_3d:.2e} mm (tol {PNP_MARKER_TOL:.0e}), {failures} failures"
        ),
    )
}

fn mean_of(stats: Option<stentshape::pipeline::MetricStats>) -> f64 {
    stats.map_or(f64::NAN, |s| s.mean)
}

struct CrossvalRun {
    report: CrossvalReport,
    seconds: f64,
}

fn run_crossval(config: &str, mesh_metrics: bool) -> CrossvalRun {
    let data = generate_dataset(&SimulationConfig::from_toml(config).unwrap()).unwrap();
    let cfg = FitConfig::from_toml(TRAIN).unwrap();
    let start = Instant::now();
    let (report, _) = crossval(&data, &build_marker_graph(), &cfg, &EvalOptions { mesh_metrics }, CROSSVAL_SEED).unwrap();
    CrossvalRun {
        report,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn deformation_learning(run: &CrossvalRun) -> Verdict {
    let o = &run.report.overall;
    let iv = mean_of(o.initial_variation);
    let pred = mean_of(o.prediction_mde);
    let ratio = pred / iv;
    let per_fold: Vec<String> = run
        .report
        .folds
        .iter()
        .map(|f| format!("{} {:.3}", f.test_families.join("+"), mean_of(f.report.overall.prediction_mde) / mean_of(f.report.overall.initial_variation)))
        .collect();
    verdict(
        within(iv, INITIAL_VARIATION_RANGE) && ratio <= LEARNING_RATIO_MAX && run.seconds <= CROSSVAL_BUDGET_S,
        format!(
            "initial variation {iv:.3} mm (target {:?}), held-out prediction MDE {pred:.3} mm, ratio {ratio:.3} (max {LEARNING_RATIO_MAX}; folds {}), 3 folds in {:.0} s (budget {CROSSVAL_BUDGET_S} s)",
            INITIAL_VARIATION_RANGE,
            per_fold.join(", "),
            run.seconds
        ),
    )
}

fn iliac_regime(run: &CrossvalRun) -> Verdict {
    let o = &run.report.overall;
    let iv = mean_of(o.initial_variation);
    let pred = mean_of(o.prediction_mde);
    let ratio = pred / iv;
    verdict(
        within(ratio, ILIAC_RATIO_RANGE),
        format!("initial variation {iv:.3} mm, prediction MDE {pred:.3} mm, ratio {ratio:.3} (range {ILIAC_RATIO_RANGE:?}), {:.0} s", run.seconds),
    )
}

fn robustness(run: &CrossvalRun, sigma: f64) -> Verdict {
    let o = &run.report.overall;
    let ideal = mean_of(o.ideal.marker_3d_mde);
    let practical = mean_of(o.practical.marker_3d_mde);
    let change = (practical - ideal).abs() / ideal;
    verdict(
        sigma == OBSERVATION_SIGMA && change < ROBUSTNESS_MAX,
        format!("3D marker MDE ideal {ideal:.3} mm, practical (sigma {sigma} mm) {practical:.3} mm, relative change {change:.3} (max {ROBUSTNESS_MAX})"),
    )
}

fn magnitudes(run: &CrossvalRun) -> Verdict {
    let o = &run.report.overall;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, col) in [("ideal", &o.ideal), ("practical", &o.practical)] {
        let m3 = mean_of(col.marker_3d_mde);
        let md = mean_of(col.mesh_distance);
        let ang = mean_of(col.angular_error);
        pass &= within(m3, MARKER_3D_RANGE) && within(md, MESH_DISTANCE_RANGE) && ang <= ANGULAR_MAX_DEG;
        parts.push(format!("{name}: 3D {m3:.3} mm, mesh {md:.3} mm, angle {ang:.2} deg"));
    }
    verdict(
        pass,
        format!(
            "{} (3D and mesh in {MARKER_3D_RANGE:?} mm, angle <= {ANGULAR_MAX_DEG} deg)",
            parts.join("; ")
        ),
    )
}

fn timing(samples: &[SegmentSample]) -> Verdict {
    let graph = build_marker_graph();
    let mut per_segment = Vec::new();
    for s in samples {
        let model = SegmentModel::new(s).unwrap().unwrap();
        let (x_g, camera) = (s.x_g.unwrap(), s.projection.unwrap());
        let start = Instant::now();
        let inst = instantiate_markers(&s.y_p_l, &s.y_f_l, &x_g, &camera).unwrap();
        let mesh = model.posed_mesh(&inst).unwrap();
        per_segment.push(start.elapsed().as_secs_f64() * 1e3);
        assert!(!mesh.is_empty());
    }
    let stage = per_segment.iter().sum::<f64>() / per_segment.len() as f64;
    let stage_max = per_segment.iter().copied().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = GcnModel::initialized(GcnConfig::default(), &mut rng).unwrap();
    let x = NodeFeatures(markers_to_features(&samples[0].y_f_l));
    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..FORWARD_REPEATS {
        sink += forward(&model, &graph, &x).unwrap().0.values()[(0, 0)];
    }
    let fwd = start.elapsed().as_secs_f64() * 1e3 / FORWARD_REPEATS as f64;
    verdict(
        sink.is_finite() && stage <= STAGE_BUDGET_MS && fwd <= STAGE_BUDGET_MS,
        format!(
            "align + PnP + mesh pose {stage:.3} ms mean, {stage_max:.3} ms max over {} segments; GCN forward {fwd:.4} ms (budget {STAGE_BUDGET_MS} ms each)",
            per_segment.len()
        ),
    )
}

fn mesh_oracle() -> Verdict {
    let spec = StentSegmentSpec::new(14.0, 4.0, 0.5, 17.0).with_fenestration(Fenestration {
        theta_center: 200.0,
        h_center: 8.0,
        theta_halfwidth: 15.0,
        h_halfheight: 3.0,
    });
    let mesh = generate_segment_mesh(&spec, DeploymentState::PartiallyDeployed).unwrap();
    let bvh = TriangleBvh::new(&mesh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for q in 0..MESH_QUERIES {
        let p = if q % 2 == 0 {
            Vector3::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), rng.random_range(-8.0..25.0))
        } else {
            // close to the surface, including inside the fenestration
            let v = mesh.vertices[rng.random_range(0..mesh.vertex_count())];
            let theta = if q % 6 == 1 { rng.random_range(186.0..214.0) } else { rng.random_range(0.0..360.0) };
            let h = rng.random_range(0.0..spec.height);
            let s = surface_point(&spec, DeploymentState::PartiallyDeployed, theta, h);
            let pick = if q % 4 == 1 { v } else { s };
            pick + Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5))
        };
        let fast = bvh.distance(&p);
        let slow = brute_force_distance(&p, &mesh).unwrap();
        worst = worst.max((fast - slow).abs());
    }
    verdict(
        worst <= MESH_ORACLE_TOL,
        format!(
            "BVH vs all-triangle scan on {MESH_QUERIES} queries against a fenestrated cone ({} triangles): max |diff| {worst:.1e} mm (tol {MESH_ORACLE_TOL:.0e}), {:.2} s",
            mesh.face_count(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn determinism() -> Verdict {
    let cfg = SimulationConfig::from_toml(AORTIC).unwrap();
    let bytes = |data: &[SegmentSample]| {
        let mut out = Vec::new();
        write_dataset(data, &mut out).unwrap();
        out
    };
    let a = generate_dataset(&cfg).unwrap();
    let same_data = bytes(&a) == bytes(&generate_dataset(&cfg).unwrap());

    let subset: Vec<SegmentSample> = a.iter().filter(|s| s.segment_index < 4).cloned().collect();
    let mut fit_cfg = FitConfig::from_toml(TRAIN).unwrap();
    fit_cfg.train.epochs = 2;
    if let Some(aug) = fit_cfg.augment.as_mut() {
        aug.max_variants = Some(10);
    }
    let graph = build_marker_graph();
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = |name: &str| {
        let fitted = fit(&subset, &graph, &fit_cfg, 3).unwrap();
        let path = dir.path().join(name);
        save_checkpoint(&Checkpoint::from_model(&fitted.model, Some(fit_cfg.train), fitted.outcome.loss_history), &path).unwrap();
        (std::fs::read(path).unwrap(), fitted.model)
    };
    let (c1, model) = checkpoint("a.json");
    let (c2, _) = checkpoint("b.json");
    let same_ckpt = c1 == c2;

    let report = || serde_json::to_string(&evaluate(&model, &graph, &subset, &EvalOptions::default()).unwrap().0).unwrap();
    let same_report = report() == report();
    let cv = || {
        let (r, _) = crossval(&subset, &graph, &fit_cfg, &EvalOptions { mesh_metrics: false }, 9).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    let same_cv = cv() == cv();
    verdict(
        same_data && same_ckpt && same_report && same_cv,
        format!(
            "identical bytes on repeat: dataset {same_data} ({} bytes), checkpoint {same_ckpt} ({} bytes), evaluation report {same_report}, cross-validation report {same_cv}",
            bytes(&a).len(),
            c1.len()
        ),
    )
}

fn caught<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        format!("panicked: {}", msg.unwrap_or_default())
    })
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    caught(f).unwrap_or_else(|msg| verdict(false, msg))
}

fn report(number: usize, title: &str, v: &Verdict) {
    println!("criterion {number:>2} {} {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments through; this suite has a
    // single entry point, so a filter that names something else skips it.
    if let Some(filter) = std::env::args().skip(1).find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }
    // panics become FAIL lines carrying the message
    std::panic::set_hook(Box::new(|_| {}));
    let mut verdicts = Vec::new();
    let mut record = |n: usize, title: &str, v: Verdict| {
        report(n, title, &v);
        verdicts.push(v.pass);
    };

    record(1, "spectral filter oracle", guarded(spectral_filter));
    record(2, "gradient correctness", guarded(gradient_check));
    record(3, "Laplacian suite", guarded(laplacian_suite));
    record(4, "rigid alignment recovery", guarded(procrustes_recovery));
    record(5, "PnP round trip", guarded(pnp_round_trip));

    let aortic = caught(|| run_crossval(AORTIC, true));
    let sigma = SimulationConfig::from_toml(AORTIC).map(|c| c.camera.observation_sigma).unwrap_or(f64::NAN);
    match &aortic {
        Ok(run) => {
            record(6, "deformation learning", guarded(|| deformation_learning(run)));
        }
        Err(e) => record(6, "deformation learning", verdict(false, format!("aortic cross-validation {e}"))),
    }
    let iliac = caught(|| run_crossval(ILIAC, false));
    match &iliac {
        Ok(run) => record(7, "iliac regime", guarded(|| iliac_regime(run))),
        Err(e) => record(7, "iliac regime", verdict(false, format!("iliac cross-validation {e}"))),
    }
    match &aortic {
        Ok(run) => {
            record(8, "robustness to noisy 2D references", guarded(|| robustness(run, sigma)));
            record(9, "end-to-end magnitudes", guarded(|| magnitudes(run)));
            println!("\n{}\n", run.report.table());
        }
        Err(e) => {
            record(8, "robustness to noisy 2D references", verdict(false, format!("aortic cross-validation {e}")));
            record(9, "end-to-end magnitudes", verdict(false, format!("aortic cross-validation {e}")));
        }
    }
    record(
        10,
        "timing",
        guarded(|| timing(&generate_dataset(&SimulationConfig::from_toml(AORTIC).unwrap()).unwrap())),
    );
    record(11, "mesh distance oracle", guarded(mesh_oracle));
    record(12, "determinism", guarded(determinism));

    let passed = verdicts.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
