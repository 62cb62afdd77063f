//! The evaluation protocol: k-fold cross-validation with one shared decision
//! threshold, and hyperparameter sweeps built on it.

mod cv;
mod sweep;
mod threshold;

use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;
use crate::metrics::{MetricBundle, MetricsError};

pub use cv::{run_cross_validation, run_cross_validation_external, CvRun, FoldOutcome};
pub use sweep::{sweep, SweepAxis, SweepGrid, SweepResult, SweepRow};
pub use threshold::{
    shared_threshold_search, threshold_candidates, FoldPredictions, ThresholdChoice,
};

#[derive(Debug, thiserror::Error)]
pub enum TuningError {
    #[error("no folds given")]
    NoFolds,
    #[error("fold {0} has no predictions")]
    EmptyFold(usize),
    #[error("{probs} predictions but {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("cross-validation needs at least 3 folds, got {0}")]
    TooFewFolds(usize),
    #[error("no prediction for call {call_id} turn {turn_index}")]
    MissingPrediction { call_id: String, turn_index: u32 },
    #[error("unknown sweep axis `{0}` (expected class_weights or learning_rate)")]
    UnknownAxis(String),
    #[error("bad grid value `{0}`")]
    BadGridValue(String),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Metric columns in report order.
pub const TABLE_COLUMNS: [&str; 6] = [
    "ROC AUC",
    "Best threshold",
    "Recall",
    "Precision",
    "Balanced Accuracy",
    "F1",
];

/// Aligned text table: one labeled row per bundle, the `best` row starred.
pub fn metrics_table(
    first_column: &str,
    rows: &[(String, MetricBundle)],
    best: Option<usize>,
) -> String {
    let mut cells: Vec<Vec<String>> = vec![std::iter::once(first_column.to_string())
        .chain(TABLE_COLUMNS.iter().map(|c| c.to_string()))
        .collect()];
    for (i, (label, m)) in rows.iter().enumerate() {
        let star = if best == Some(i) { " *" } else { "" };
        cells.push(vec![
            format!("{label}{star}"),
            format!("{:.4}", m.roc_auc_macro_ovr),
            format!("{:.4}", m.threshold_used),
            format!("{:.4}", m.recall_macro),
            format!("{:.4}", m.precision_macro),
            format!("{:.4}", m.balanced_accuracy),
            format!("{:.4}", m.f1_macro),
        ]);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (r, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if r == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-|-"));
            out.push('\n');
        }
    }
    out
}

impl CvRun {
    /// Per-fold test rows followed by the mean row.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, MetricBundle)> = self
            .folds
            .iter()
            .map(|f| (format!("fold {}", f.validation_fold), f.test))
            .collect();
        rows.push(("mean".to_string(), self.mean_test));
        metrics_table("Checkpoint", &rows, None)
    }
}
