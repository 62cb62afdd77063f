use std::str::FromStr;

use serde::Serialize;

use super::{run_cross_validation, CvRun, TuningError};
use crate::classifier::{FeatureSpec, TrainConfig};
use crate::corpus::{Corpus, FoldPlan};
use crate::metrics::MetricBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ClassWeights,
    LearningRate,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::ClassWeights => "class_weights",
            SweepAxis::LearningRate => "learning_rate",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = TuningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "class_weights" | "class-weights" => Ok(SweepAxis::ClassWeights),
            "learning_rate" | "learning-rate" => Ok(SweepAxis::LearningRate),
            other => Err(TuningError::UnknownAxis(other.to_string())),
        }
    }
}

/// Grid points along one axis.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    ClassWeights(Vec<[f64; 3]>),
    LearningRate(Vec<f64>),
}

impl SweepGrid {
    /// Parses grid values for `axis`. A learning-rate value is one number. A
    /// class-weight value is either `w0,w1,w2` or a single `w0`, which stands
    /// for `[w0, 1, 1]` (down-weighting the irrelevant class only).
    pub fn parse(axis: &str, values: &[&str]) -> Result<Self, TuningError> {
        let bad = |v: &str| TuningError::BadGridValue(v.to_string());
        let number = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(v));
        match axis.parse::<SweepAxis>()? {
            SweepAxis::LearningRate => Ok(SweepGrid::LearningRate(
                values.iter().map(|v| number(v)).collect::<Result<_, _>>()?,
            )),
            SweepAxis::ClassWeights => Ok(SweepGrid::ClassWeights(
                values
                    .iter()
                    .map(|v| {
                        let parts: Vec<f64> = v.split(',').map(number).collect::<Result<_, _>>()?;
                        match parts.as_slice() {
                            [w0] => Ok([*w0, 1.0, 1.0]),
                            [w0, w1, w2] => Ok([*w0, *w1, *w2]),
                            _ => Err(bad(v)),
                        }
                    })
                    .collect::<Result<_, _>>()?,
            )),
        }
    }

    pub fn axis(&self) -> SweepAxis {
        match self {
            SweepGrid::ClassWeights(_) => SweepAxis::ClassWeights,
            SweepGrid::LearningRate(_) => SweepAxis::LearningRate,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepGrid::ClassWeights(v) => v.len(),
            SweepGrid::LearningRate(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The training configs of the grid, with a display label each.
    fn configs(&self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        match self {
            SweepGrid::ClassWeights(ws) => ws
                .iter()
                .map(|w| {
                    (
                        format!("[{}, {}, {}]", w[0], w[1], w[2]),
                        TrainConfig {
                            class_weights: *w,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            SweepGrid::LearningRate(lrs) => lrs
                .iter()
                .map(|&lr| {
                    (
                        format!("{lr:e}"),
                        TrainConfig {
                            learning_rate: lr,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    /// Mean test metrics; `threshold_used` is the shared threshold of the run.
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Row with the highest mean test F1-macro; the first such row on ties.
    pub best: usize,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<(String, MetricBundle)> = self
            .rows
            .iter()
            .map(|r| (r.value.clone(), r.metrics))
            .collect();
        super::metrics_table(self.axis.as_str(), &rows, Some(self.best))
    }
}

/// One full cross-validation per grid point, everything else held fixed.
/// Returns the summary and the individual runs.
pub fn sweep(
    corpus: &Corpus,
    plan: &FoldPlan,
    base: &TrainConfig,
    spec: &FeatureSpec,
    grid: &SweepGrid,
) -> Result<(SweepResult, Vec<CvRun>), TuningError> {
    if grid.is_empty() {
        return Err(TuningError::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut runs = Vec::with_capacity(grid.len());
    for (value, config) in grid.configs(base) {
        let run = run_cross_validation(corpus, plan, &config, spec)?;
        rows.push(SweepRow {
            value,
            metrics: run.mean_test,
        });
        runs.push(run);
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.metrics.f1_macro > rows[best].metrics.f1_macro {
            best = i;
        }
    }
    Ok((
        SweepResult {
            axis: grid.axis(),
            rows,
            best,
        },
        runs,
    ))
}
