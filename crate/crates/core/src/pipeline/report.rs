use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Metrics of one instantiation run (ideal or practical 2D references).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstantiationMetrics {
    pub marker_3d_mde: f64,
    pub reprojection_2d_mde: f64,
    /// Present when the sample carries marker placements.
    pub angular_error: Option<f64>,
    pub mesh_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub segment_id: String,
    pub graft_id: String,
    pub initial_variation: f64,
    pub prediction_mde: f64,
    /// References projected from the ground truth without noise.
    pub ideal: Option<InstantiationMetrics>,
    /// The observed (noisy) references.
    pub practical: Option<InstantiationMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub marker_3d_mde: Option<MetricStats>,
    pub reprojection_2d_mde: Option<MetricStats>,
    pub angular_error: Option<MetricStats>,
    pub mesh_distance: Option<MetricStats>,
}

impl ColumnSummary {
    fn from_metrics<'a>(metrics: impl Iterator<Item = &'a InstantiationMetrics> + Clone) -> Self {
        let stats = |f: fn(&InstantiationMetrics) -> Option<f64>| MetricStats::from_values(&metrics.clone().filter_map(f).collect::<Vec<_>>());
        Self {
            marker_3d_mde: stats(|m| Some(m.marker_3d_mde)),
            reprojection_2d_mde: stats(|m| Some(m.reprojection_2d_mde)),
            angular_error: stats(|m| m.angular_error),
            mesh_distance: stats(|m| m.mesh_distance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub segments: usize,
    pub initial_variation: Option<MetricStats>,
    pub prediction_mde: Option<MetricStats>,
    pub ideal: ColumnSummary,
    pub practical: ColumnSummary,
}

impl ReportSummary {
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a SegmentRow> + Clone) -> Self {
        Self {
            segments: rows.clone().count(),
            initial_variation: MetricStats::from_values(&rows.clone().map(|r| r.initial_variation).collect::<Vec<_>>()),
            prediction_mde: MetricStats::from_values(&rows.clone().map(|r| r.prediction_mde).collect::<Vec<_>>()),
            ideal: ColumnSummary::from_metrics(rows.clone().filter_map(|r| r.ideal.as_ref())),
            practical: ColumnSummary::from_metrics(rows.filter_map(|r| r.practical.as_ref())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: Option<u64>,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub rows: Vec<SegmentRow>,
    pub overall: ReportSummary,
    pub families: BTreeMap<String, ReportSummary>,
}

impl RunReport {
    pub fn from_rows(rows: Vec<SegmentRow>) -> Self {
        let overall = ReportSummary::from_rows(rows.iter());
        let names: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.graft_id.as_str()).collect();
        let families = names
            .into_iter()
            .map(|name| (name.to_string(), ReportSummary::from_rows(rows.iter().filter(|r| r.graft_id == name))))
            .collect();
        Self {
            seed: None,
            config: serde_json::Value::Null,
            rows,
            overall,
            families,
        }
    }

    /// Metrics as rows, graft families (then all segments) as columns.
    pub fn table(&self) -> String {
        let mut columns: Vec<(&str, &ReportSummary)> = self.families.iter().map(|(k, v)| (k.as_str(), v)).collect();
        columns.push(("all", &self.overall));
        summary_table(&columns)
    }
}

/// Per-stage wall-clock timing; kept apart from [`RunReport`] so reports stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingReport {
    /// GCN forward pass per segment.
    pub predict_ms: Option<MetricStats>,
    /// Alignment plus pose recovery per instantiation.
    pub instantiate_ms: Option<MetricStats>,
    /// Mesh posing with the central-point correction per instantiation.
    pub mesh_pose_ms: Option<MetricStats>,
    pub metrics_ms: Option<MetricStats>,
    pub total_ms: f64,
}

fn cell(s: Option<&MetricStats>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4}", s.mean, s.std),
        None => "-".into(),
    }
}

pub(crate) fn summary_table(columns: &[(&str, &ReportSummary)]) -> String {
    type Getter = fn(&ReportSummary) -> Option<&MetricStats>;
    let lines: [(&str, Getter); 10] = [
        ("initial variation (mm)", |s| s.initial_variation.as_ref()),
        ("prediction MDE (mm)", |s| s.prediction_mde.as_ref()),
        ("ideal 3D marker MDE (mm)", |s| s.ideal.marker_3d_mde.as_ref()),
        ("ideal 2D reprojection MDE (mm)", |s| s.ideal.reprojection_2d_mde.as_ref()),
        ("ideal angular error (deg)", |s| s.ideal.angular_error.as_ref()),
        ("ideal mesh distance (mm)", |s| s.ideal.mesh_distance.as_ref()),
        ("practical 3D marker MDE (mm)", |s| s.practical.marker_3d_mde.as_ref()),
        ("practical 2D reprojection MDE (mm)", |s| s.practical.reprojection_2d_mde.as_ref()),
        ("practical angular error (deg)", |s| s.practical.angular_error.as_ref()),
        ("practical mesh distance (mm)", |s| s.practical.mesh_distance.as_ref()),
    ];
    let label_w = lines.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = lines.iter().map(|(_, get)| columns.iter().map(|(_, s)| cell(get(s))).collect()).collect();
    let widths: Vec<usize> = (0..columns.len())
        .map(|c| cells.iter().map(|row| row[c].chars().count()).chain([columns[c].0.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for ((name, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "segments");
    for ((_, s), w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", s.segments);
    }
    out.push('\n');
    for ((label, _), row) in lines.iter().zip(&cells) {
        let _ = write!(out, "{label:label_w$}");
        for (c, w) in row.iter().zip(&widths) {
            let pad = w.saturating_sub(c.chars().count());
            let _ = write!(out, "  {}{c}", " ".repeat(pad));
        }
        out.push('\n');
    }
    out
}
