//! Run reports and metric tables.

use serde::{Deserialize, Serialize};

use ccl_core::eval::GeometryReport;

use crate::config::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: u64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub recall: Vec<RecallEntry>,
}

/// Serializable mirror of [`GeometryReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub class_mean_cosine: Vec<Option<f64>>,
    pub mean_intra_class_cosine: f64,
    pub min_center_cosine_distance: Option<f64>,
    pub radius_mean: f64,
    pub radius_std: f64,
}

impl From<&GeometryReport> for GeometrySummary {
    fn from(g: &GeometryReport) -> Self {
        Self {
            class_mean_cosine: g.class_mean_cosine.clone(),
            mean_intra_class_cosine: g.mean_intra_class_cosine,
            min_center_cosine_distance: g.min_center_cosine_distance,
            radius_mean: g.radius_mean,
            radius_std: g.radius_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Package name and version that produced the report.
    pub version: String,
    pub config_hash: String,
    pub config: TrainConfig,
    pub initial_recall: Vec<RecallEntry>,
    pub epochs: Vec<EpochRecord>,
    pub final_geometry: GeometrySummary,
    /// The only field that differs between identical runs.
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn version_stamp() -> String {
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
    }

    pub fn final_recall(&self) -> &[RecallEntry] {
        self.epochs.last().map_or(&self.initial_recall, |e| &e.recall)
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.final_recall().iter().find(|r| r.k == k).map(|r| r.value)
    }

    /// Pretty JSON with `wall_clock_seconds` zeroed, for reproducibility checks.
    pub fn to_json_without_wall_clock(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_seconds = 0.0;
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }
}
