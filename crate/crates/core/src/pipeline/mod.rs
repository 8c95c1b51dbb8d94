//! End-to-end evaluation: reference prediction, marker instantiation from
//! ideal and practical 2D references, mesh posing and the metric reports,
//! plus model fitting and family-wise cross-validation.

mod report;

pub use report::{ColumnSummary, InstantiationMetrics, MetricStats, ReportSummary, RunReport, SegmentRow, TimingReport};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{augment, crossval_split, mde, AugmentConfig, DatasetError, SegmentSample};
use crate::gcn::{predict_references, train, GcnConfig, GcnError, GcnModel, TrainConfig, TrainOutcome};
use crate::geometry::{
    instantiate_markers, procrustes_align, project, rigid_fit, CameraProjection, GeometryError, Instantiation, MarkerSet2D, MarkerSet3D,
};
use crate::graph::MarkerGraph;
use crate::mesh::{angular_error, generate_segment_mesh, mesh_distance_error, pose_mesh, surface_point, DeploymentState, MeshError, SegmentMesh};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("segment {segment}: {source}")]
    Segment {
        segment: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// The innermost error, past any segment context.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Segment { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Compute angular and mesh-distance errors (needs marker placements).
    pub mesh_metrics: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { mesh_metrics: true }
    }
}

/// Cone model of a segment: partially-deployed mesh and markers at the
/// nominal placements, both in the segment model frame.
pub struct SegmentModel {
    pub mesh: SegmentMesh,
    pub markers: MarkerSet3D,
}

impl SegmentModel {
    pub fn new(sample: &SegmentSample) -> Result<Option<Self>, PipelineError> {
        let Some(placements) = sample.placements else {
            return Ok(None);
        };
        let state = DeploymentState::PartiallyDeployed;
        let markers = MarkerSet3D::from_columns(&placements.map(|[t, h]| surface_point(&sample.spec, state, t, h)));
        Ok(Some(Self {
            mesh: generate_segment_mesh(&sample.spec, state)?,
            markers,
        }))
    }

    /// Places the model mesh on instantiated markers: register the model
    /// markers onto the aligned reference, compose with the recovered pose
    /// and apply the central-point correction.
    pub fn posed_mesh(&self, inst: &Instantiation) -> Result<SegmentMesh, PipelineError> {
        let to_reference = rigid_fit(&points(&self.markers), &points(&inst.aligned_reference))?;
        Ok(pose_mesh(&self.mesh, &self.markers, &inst.pose.compose(&to_reference), &inst.markers))
    }

    /// Ground-truth surface: the recorded pose when present, otherwise a
    /// rigid fit of the model markers onto the global ground truth.
    pub fn ground_truth_mesh(&self, sample: &SegmentSample, y_p_g: &MarkerSet3D) -> Result<SegmentMesh, PipelineError> {
        let pose = match sample.pose_g {
            Some(p) => p,
            None => rigid_fit(&points(&self.markers), &points(y_p_g))?,
        };
        Ok(self.mesh.map_vertices(|v| pose.apply_point(v)))
    }
}

fn points(m: &MarkerSet3D) -> Vec<nalgebra::Vector3<f64>> {
    m.points().collect()
}

/// Predicted partially-deployed references, aligned onto `Y_f^l`.
pub fn predict_aligned(model: &GcnModel, graph: &MarkerGraph, sample: &SegmentSample) -> Result<MarkerSet3D, PipelineError> {
    let predicted = predict_references(model, graph, &sample.y_f_l)?;
    let (_, aligned) = procrustes_align(&predicted, &sample.y_f_l)?;
    Ok(aligned)
}

#[derive(Default)]
struct Durations {
    predict: f64,
    instantiate: Vec<f64>,
    mesh_pose: Vec<f64>,
    metrics: f64,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct GroundTruth<'a> {
    y_p_g: &'a MarkerSet3D,
    model: Option<&'a SegmentModel>,
    mesh: Option<&'a SegmentMesh>,
}

fn instantiation_metrics(
    predicted: &MarkerSet3D,
    deployed: &MarkerSet3D,
    observed: &MarkerSet2D,
    camera: &CameraProjection,
    truth: &GroundTruth<'_>,
    timing: &mut Durations,
) -> Result<InstantiationMetrics, PipelineError> {
    let t = Instant::now();
    let inst = instantiate_markers(predicted, deployed, observed, camera)?;
    timing.instantiate.push(ms(t));
    let marker_3d_mde = mde(&inst.markers.0, &truth.y_p_g.0)?;
    let reprojection_2d_mde = mde(&project(camera, &inst.markers)?.0, &observed.0)?;
    let (angular, distance) = match (truth.model, truth.mesh) {
        (Some(model), Some(gt)) => {
            let t = Instant::now();
            let posed = model.posed_mesh(&inst)?;
            timing.mesh_pose.push(ms(t));
            (Some(angular_error(&inst.markers, truth.y_p_g, gt)?), Some(mesh_distance_error(&posed, gt)?))
        }
        _ => (None, None),
    };
    Ok(InstantiationMetrics {
        marker_3d_mde,
        reprojection_2d_mde,
        angular_error: angular,
        mesh_distance: distance,
    })
}

fn evaluate_sample(
    model: &GcnModel,
    graph: &MarkerGraph,
    sample: &SegmentSample,
    opts: &EvalOptions,
) -> Result<(SegmentRow, Durations), PipelineError> {
    let mut timing = Durations::default();
    let t = Instant::now();
    let predicted = predict_references(model, graph, &sample.y_f_l)?;
    timing.predict = ms(t);
    let (_, aligned) = procrustes_align(&predicted, &sample.y_f_l)?;
    let prediction_mde = mde(&aligned.0, &sample.y_p_l.0)?;

    let t = Instant::now();
    let (mut ideal, mut practical) = (None, None);
    if let (Some(y_p_g), Some(camera)) = (&sample.y_p_g, &sample.projection) {
        let segment_model = if opts.mesh_metrics { SegmentModel::new(sample)? } else { None };
        let gt_mesh = match &segment_model {
            Some(m) => Some(m.ground_truth_mesh(sample, y_p_g)?),
            None => None,
        };
        let truth = GroundTruth {
            y_p_g,
            model: segment_model.as_ref(),
            mesh: gt_mesh.as_ref(),
        };
        let clean = project(camera, y_p_g)?;
        ideal = Some(instantiation_metrics(&predicted, &sample.y_f_l, &clean, camera, &truth, &mut timing)?);
        if let Some(x_g) = &sample.x_g {
            practical = Some(instantiation_metrics(&predicted, &sample.y_f_l, x_g, camera, &truth, &mut timing)?);
        }
    }
    timing.metrics = ms(t) - timing.instantiate.iter().sum::<f64>() - timing.mesh_pose.iter().sum::<f64>();

    Ok((
        SegmentRow {
            segment_id: sample.id(),
            graft_id: sample.graft_id.clone(),
            initial_variation: sample.initial_variation(),
            prediction_mde,
            ideal,
            practical,
        },
        timing,
    ))
}

/// Evaluates every sample (in parallel) and assembles the report in input
/// order. The report carries no seed or configuration echo; callers fill
/// those in.
pub fn evaluate(
    model: &GcnModel,
    graph: &MarkerGraph,
    samples: &[SegmentSample],
    opts: &EvalOptions,
) -> Result<(RunReport, TimingReport), PipelineError> {
    let start = Instant::now();
    let results: Vec<(SegmentRow, Durations)> = samples
        .par_iter()
        .map(|s| {
            evaluate_sample(model, graph, s, opts).map_err(|e| PipelineError::Segment {
                segment: s.id(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;
    let stats = |f: &dyn Fn(&Durations) -> Vec<f64>| MetricStats::from_values(&results.iter().flat_map(|(_, d)| f(d)).collect::<Vec<_>>());
    let timing = TimingReport {
        predict_ms: stats(&|d| vec![d.predict]),
        instantiate_ms: stats(&|d| d.instantiate.clone()),
        mesh_pose_ms: stats(&|d| d.mesh_pose.clone()),
        metrics_ms: stats(&|d| vec![d.metrics]),
        total_ms: ms(start),
    };
    let rows = results.into_iter().map(|(r, _)| r).collect();
    Ok((RunReport::from_rows(rows), timing))
}

/// Everything that shapes a fitted model apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub gcn: GcnConfig,
    pub train: TrainConfig,
    /// Augment the training samples before fitting.
    pub augment: Option<AugmentConfig>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gcn: GcnConfig::default(),
            train: TrainConfig::default(),
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl FitConfig {
    /// Reads `[gcn]`, `[train]` and `[augment]` tables; missing tables and
    /// keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DatasetError::InvalidConfig {
            field: "config".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.gcn.validate()?;
        self.train.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: GcnModel,
    pub outcome: TrainOutcome,
    pub training_pairs: usize,
}

/// Initializes a model from `seed`, augments the training samples and trains.
/// The seed also drives shuffling, input noise and augmentation subsampling.
pub fn fit(samples: &[SegmentSample], graph: &MarkerGraph, cfg: &FitConfig, seed: u64) -> Result<Fitted, PipelineError> {
    let training = match &cfg.augment {
        Some(a) => augment(samples, &AugmentConfig { rng_seed: seed, ..a.clone() })?,
        None => samples.to_vec(),
    };
    let pairs: Vec<(MarkerSet3D, MarkerSet3D)> = training.iter().map(|s| (s.y_f_l, s.y_p_l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = GcnModel::initialized(cfg.gcn, &mut rng)?;
    let train_cfg = TrainConfig { rng_seed: seed, ..cfg.train };
    let outcome = train(&model, graph, &pairs, &train_cfg)?;
    let model = GcnModel::new(cfg.gcn, outcome.params.clone())?;
    Ok(Fitted {
        model,
        outcome,
        training_pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub test_families: Vec<String>,
    pub train_segments: usize,
    pub training_pairs: usize,
    pub final_loss: Option<f64>,
    pub loss_history: Vec<f64>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub seed: u64,
    pub config: FitConfig,
    pub folds: Vec<FoldReport>,
    /// Every held-out row across folds.
    pub overall: ReportSummary,
}

impl CrossvalReport {
    /// One column per held-out family set, then all segments.
    pub fn table(&self) -> String {
        let names: Vec<String> = self.folds.iter().map(|f| f.test_families.join("+")).collect();
        let mut columns: Vec<(&str, &ReportSummary)> = names.iter().zip(&self.folds).map(|(n, f)| (n.as_str(), &f.report.overall)).collect();
        columns.push(("all", &self.overall));
        report::summary_table(&columns)
    }
}

/// Fold `i` uses seed `seed + i`. Folds run concurrently.
pub fn crossval(
    samples: &[SegmentSample],
    graph: &MarkerGraph,
    cfg: &FitConfig,
    opts: &EvalOptions,
    seed: u64,
) -> Result<(CrossvalReport, Vec<TimingReport>), PipelineError> {
    let folds = crossval_split(samples)?;
    let results: Vec<(FoldReport, TimingReport)> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let fold_seed = seed.wrapping_add(i as u64);
            let train_set: Vec<SegmentSample> = fold.train.iter().map(|&j| samples[j].clone()).collect();
            let test_set: Vec<SegmentSample> = fold.test.iter().map(|&j| samples[j].clone()).collect();
            let fitted = fit(&train_set, graph, cfg, fold_seed)?;
            let (mut report, timing) = evaluate(&fitted.model, graph, &test_set, opts)?;
            report.seed = Some(fold_seed);
            Ok((
                FoldReport {
                    fold: i,
                    seed: fold_seed,
                    test_families: fold.test_families.clone(),
                    train_segments: train_set.len(),
                    training_pairs: fitted.training_pairs,
                    final_loss: fitted.outcome.loss_history.last().copied(),
                    loss_history: fitted.outcome.loss_history,
                    report,
                },
                timing,
            ))
        })
        .collect::<Result<_, PipelineError>>()?;
    let (folds, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let overall = ReportSummary::from_rows(folds.iter().flat_map(|f| f.report.rows.iter()));
    Ok((
        CrossvalReport {
            seed,
            config: cfg.clone(),
            folds,
            overall,
        },
        timings,
    ))
}

/// Predicts the references of `sample` and instantiates them against an
/// observation.
pub fn instantiate_sample(
    model: &GcnModel,
    graph: &MarkerGraph,
    sample: &SegmentSample,
    observed: &MarkerSet2D,
    camera: &CameraProjection,
) -> Result<Instantiation, PipelineError> {
    let predicted = predict_references(model, graph, &sample.y_f_l)?;
    Ok(instantiate_markers(&predicted, &sample.y_f_l, observed, camera)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, CameraConfig, FamilyConfig, JitterConfig, Range, SimulationConfig};
    use crate::gcn::{GcnParams, Layer};
    use crate::graph::build_marker_graph;
    use nalgebra::{DMatrix, DVector};

    fn config(families: &[&str], segments: usize) -> SimulationConfig {
        SimulationConfig {
            seed: Some(5),
            camera: CameraConfig::default(),
            jitter: JitterConfig::default(),
            families: families
                .iter()
                .map(|name| FamilyConfig {
                    name: name.to_string(),
                    segments,
                    r_fd: Range { min: 13.0, max: 15.0 },
                    r_fc: Range { min: 3.5, max: 4.0 },
                    w_g: Range { min: 1.0, max: 1.5 },
                    height: Range { min: 14.0, max: 16.0 },
                    placement_theta: [0.0, 80.0, 160.0, 240.0, 310.0],
                    placement_height: [0.15, 0.85, 0.3, 0.7, 0.5],
                    theta_spread_deg: 8.0,
                    height_spread: 0.05,
                    fenestrations: vec![],
                })
                .collect(),
        }
    }

    /// Linear identity network: one hidden layer, `K = 1`, `Θ = I`, no bias.
    fn identity_model() -> GcnModel {
        let cfg = GcnConfig {
            hidden_layers: 1,
            channels: 3,
            k: 1,
            leaky_slope: 1.0,
            in_channels: 3,
            out_channels: 3,
        };
        let layer = || Layer {
            theta: vec![DMatrix::identity(3, 3)],
            bias: DVector::zeros(3),
        };
        GcnModel::new(cfg, GcnParams { layers: vec![layer(), layer()] }).unwrap()
    }

    #[test]
    fn perfect_prediction_gives_exact_instantiation() {
        let mut data = generate_dataset(&config(&["a"], 3)).unwrap();
        // make the no-op predictor perfect
        for s in &mut data {
            s.y_p_l = s.y_f_l;
            let (_, frame) = crate::geometry::local_frame(s.y_p_g.as_ref().unwrap()).unwrap();
            s.y_f_l = frame;
            s.y_p_l = frame;
            s.placements = None;
        }
        let (report, timing) = evaluate(&identity_model(), &build_marker_graph(), &data, &EvalOptions::default()).unwrap();
        for row in &report.rows {
            assert!(row.prediction_mde <= 1e-6);
            let ideal = row.ideal.unwrap();
            assert!(ideal.marker_3d_mde <= 1e-5, "{ideal:?}");
            assert!(ideal.reprojection_2d_mde <= 1e-6);
            assert!(ideal.mesh_distance.is_none());
            assert!(row.practical.is_some());
        }
        assert_eq!(timing.instantiate_ms.unwrap().count, 6);
    }

    #[test]
    fn mesh_metrics_and_family_columns() {
        let data = generate_dataset(&config(&["a", "b"], 2)).unwrap();
        let (report, _) = evaluate(&identity_model(), &build_marker_graph(), &data, &EvalOptions::default()).unwrap();
        assert_eq!(report.families.len(), 2);
        for row in &report.rows {
            assert!((row.prediction_mde - row.initial_variation).abs() <= 1e-9);
            let m = row.ideal.unwrap();
            assert!(m.mesh_distance.unwrap() > 0.0 && m.angular_error.unwrap() >= 0.0);
        }
        let n = report.rows.len() as f64;
        let mean = report.rows.iter().map(|r| r.ideal.unwrap().mesh_distance.unwrap()).sum::<f64>() / n;
        assert!((report.overall.ideal.mesh_distance.unwrap().mean - mean).abs() <= 1e-12);
    }

    #[test]
    fn ground_truth_mesh_passes_through_markers() {
        let data = generate_dataset(&config(&["a"], 1)).unwrap();
        let s = &data[0];
        let model = SegmentModel::new(s).unwrap().unwrap();
        let gt = model.ground_truth_mesh(s, s.y_p_g.as_ref().unwrap()).unwrap();
        // jittered markers still sit on the true cone
        for p in s.y_p_g.unwrap().points() {
            assert!(crate::mesh::point_to_mesh_distance(&p, &gt).unwrap() < 0.05);
        }
    }

    #[test]
    fn errors_name_the_segment() {
        let mut data = generate_dataset(&config(&["a"], 2)).unwrap();
        data[1].y_p_g = Some(MarkerSet3D::zeros());
        data[1].x_g = None;
        data[1].placements = None;
        let err = evaluate(&identity_model(), &build_marker_graph(), &data, &EvalOptions::default()).unwrap_err();
        assert!(err.to_string().starts_with("segment a/2"), "{err}");
    }

    #[test]
    fn crossval_is_deterministic_and_held_out() {
        let data = generate_dataset(&config(&["a", "b", "c"], 2)).unwrap();
        let cfg = FitConfig {
            gcn: GcnConfig {
                hidden_layers: 1,
                channels: 4,
                ..GcnConfig::default()
            },
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            augment: Some(AugmentConfig {
                max_variants: Some(5),
                ..AugmentConfig::default()
            }),
        };
        let opts = EvalOptions { mesh_metrics: false };
        let (a, _) = crossval(&data, &build_marker_graph(), &cfg, &opts, 9).unwrap();
        let (b, _) = crossval(&data, &build_marker_graph(), &cfg, &opts, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.folds.len(), 3);
        for f in &a.folds {
            assert_eq!(f.training_pairs, 20);
            assert!(f.report.rows.iter().all(|r| f.test_families.contains(&r.graft_id)));
        }
        assert_eq!(a.overall.segments, 6);
        assert!(a.table().contains("all"));
    }

    #[test]
    fn fit_config_from_toml() {
        let cfg = FitConfig::from_toml("[train]\nepochs = 3\nlearning_rate = 0.001\n[gcn]\nchannels = 8\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.momentum, 0.9);
        assert_eq!(cfg.gcn.channels, 8);
        assert_eq!(cfg.gcn.hidden_layers, 8);
        assert_eq!(cfg.augment, Some(AugmentConfig::default()));
        assert!(FitConfig::from_toml("[train]\nmomentum = 1.5\n").is_err());
        assert!(FitConfig::from_toml("[train]\nepochs = \"many\"\n").is_err());
    }
}
