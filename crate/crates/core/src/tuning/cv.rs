use rayon::prelude::*;
use serde::Serialize;

use super::{shared_threshold_search, FoldPredictions, TuningError};
use crate::classifier::{
    featurize, fit_normalized, select_best_checkpoint, Checkpoint, CheckpointSummary,
    ExternalProba, FeatureSpec, ProbTriple, SparseVector, TrainConfig,
};
use crate::corpus::{Corpus, FoldPlan, Label, TurnKey};
use crate::decision::DecisionRule;
use crate::metrics::{evaluate, MetricBundle};

/// Outcome for one validation fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldOutcome {
    pub validation_fold: usize,
    /// Selected checkpoint; absent when probabilities came from outside.
    pub checkpoint: Option<CheckpointSummary>,
    /// Every epoch's checkpoint, in order.
    pub curve: Vec<CheckpointSummary>,
    /// Test-fold metrics of this fold's checkpoint at the shared threshold.
    pub test: MetricBundle,
}

/// Result of the cross-validation protocol.
///
/// With `k` folds, one is the test fold and each of the other `k - 1` serves
/// once as the validation fold for a model trained on the remaining `k - 2`.
#[derive(Debug, Clone, Serialize)]
pub struct CvRun {
    #[serde(skip)]
    pub fold_plan: FoldPlan,
    pub k: usize,
    pub test_fold: usize,
    pub folds: Vec<FoldOutcome>,
    /// Validation predictions per fold, in the order of `folds`.
    #[serde(skip)]
    pub validation: Vec<FoldPredictions>,
    /// Selected checkpoints, in the order of `folds`; empty for external probabilities.
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
    pub shared_threshold: f64,
    /// Fold-averaged validation F1-macro at the shared threshold.
    pub validation_mean_f1: f64,
    pub mean_test: MetricBundle,
}

struct FoldWork {
    fold: usize,
    best: Checkpoint,
    curve: Vec<CheckpointSummary>,
    validation: FoldPredictions,
    test_probs: Vec<ProbTriple>,
}

fn check_plan(corpus: &Corpus, plan: &FoldPlan) -> Result<Vec<Label>, TuningError> {
    if plan.k < 3 {
        return Err(TuningError::TooFewFolds(plan.k));
    }
    plan.check_against(corpus)?;
    Ok(corpus.gold_labels()?)
}

fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Runs the protocol with the baseline classifier.
///
/// For each non-test fold `v`, a model is trained on the folds other than
/// `v` and the test fold with seed `config.seed + v`, one checkpoint per epoch
/// is scored on `v`, and the best (by validation ROC AUC) is kept. One
/// threshold is then chosen over all validation predictions, and the test
/// fold is scored by every kept checkpoint at that threshold. Test-fold labels
/// are only read for the final scoring.
pub fn run_cross_validation(
    corpus: &Corpus,
    plan: &FoldPlan,
    config: &TrainConfig,
    spec: &FeatureSpec,
) -> Result<CvRun, TuningError> {
    spec.validate()?;
    config.validate()?;
    let labels = check_plan(corpus, plan)?;
    let turns: Vec<_> = corpus.turns().collect();
    let features: Vec<SparseVector> = turns
        .par_iter()
        .map(|t| featurize(&t.text, spec).l2_normalized())
        .collect();
    let folds = plan.folds();
    let test_idx = plan.members(plan.test_fold);

    let work: Vec<FoldWork> = plan
        .non_test_folds()
        .into_par_iter()
        .map(|v| -> Result<FoldWork, TuningError> {
            let train: Vec<(&SparseVector, Label)> = (0..turns.len())
                .filter(|&i| folds[i] != v && folds[i] != plan.test_fold)
                .map(|i| (&features[i], labels[i]))
                .collect();
            let val_idx = plan.members(v);
            let validation: Vec<(&SparseVector, Label)> =
                val_idx.iter().map(|&i| (&features[i], labels[i])).collect();
            let fold_config = TrainConfig {
                seed: config.seed.wrapping_add(v as u64),
                ..config.clone()
            };
            let checkpoints = fit_normalized(&train, &validation, &fold_config, spec)?;
            let curve = checkpoints.iter().map(Checkpoint::summary).collect();
            let best = select_best_checkpoint(&checkpoints)?.clone();
            drop(checkpoints);
            let val_probs = val_idx
                .iter()
                .map(|&i| best.predict_normalized(&features[i]))
                .collect();
            let test_probs = test_idx
                .iter()
                .map(|&i| best.predict_normalized(&features[i]))
                .collect();
            Ok(FoldWork {
                fold: v,
                best,
                curve,
                validation: FoldPredictions::new(val_probs, gather(&labels, &val_idx))?,
                test_probs,
            })
        })
        .collect::<Result<_, _>>()?;

    let validation: Vec<FoldPredictions> = work.iter().map(|w| w.validation.clone()).collect();
    let choice = shared_threshold_search(&validation)?;
    let rule = DecisionRule {
        threshold: choice.threshold,
    };
    let test_labels = gather(&labels, &test_idx);
    let mut outcomes = Vec::with_capacity(work.len());
    let mut checkpoints = Vec::with_capacity(work.len());
    for w in work {
        outcomes.push(FoldOutcome {
            validation_fold: w.fold,
            checkpoint: Some(w.best.summary()),
            curve: w.curve,
            test: evaluate(&test_labels, &w.test_probs, &rule)?,
        });
        checkpoints.push(w.best);
    }
    finish(
        plan,
        outcomes,
        validation,
        checkpoints,
        choice.threshold,
        choice.mean_f1,
    )
}

fn finish(
    plan: &FoldPlan,
    folds: Vec<FoldOutcome>,
    validation: Vec<FoldPredictions>,
    checkpoints: Vec<Checkpoint>,
    shared_threshold: f64,
    validation_mean_f1: f64,
) -> Result<CvRun, TuningError> {
    let tests: Vec<MetricBundle> = folds.iter().map(|f| f.test).collect();
    let mean_test = MetricBundle::mean(&tests).ok_or(TuningError::NoFolds)?;
    Ok(CvRun {
        fold_plan: plan.clone(),
        k: plan.k,
        test_fold: plan.test_fold,
        folds,
        validation,
        checkpoints,
        shared_threshold,
        validation_mean_f1,
        mean_test,
    })
}

/// Runs the protocol on probabilities computed elsewhere, for example by a
/// fine-tuned transformer. Nothing is trained: the validation folds only feed
/// the threshold search, and since the test probabilities are the same for
/// every fold, all per-fold test bundles coincide.
pub fn run_cross_validation_external(
    corpus: &Corpus,
    plan: &FoldPlan,
    proba: &ExternalProba,
) -> Result<CvRun, TuningError> {
    let labels = check_plan(corpus, plan)?;
    let probs: Vec<ProbTriple> = corpus
        .turns()
        .map(|t| {
            proba
                .get(&TurnKey::of(t))
                .copied()
                .ok_or_else(|| TuningError::MissingPrediction {
                    call_id: t.call_id.clone(),
                    turn_index: t.turn_index,
                })
        })
        .collect::<Result<_, _>>()?;

    let validation: Vec<FoldPredictions> = plan
        .non_test_folds()
        .into_iter()
        .map(|v| {
            let idx = plan.members(v);
            FoldPredictions::new(gather(&probs, &idx), gather(&labels, &idx))
        })
        .collect::<Result<_, _>>()?;
    let choice = shared_threshold_search(&validation)?;
    let test_idx = plan.members(plan.test_fold);
    let test = evaluate(
        &gather(&labels, &test_idx),
        &gather(&probs, &test_idx),
        &DecisionRule {
            threshold: choice.threshold,
        },
    )?;
    let outcomes = plan
        .non_test_folds()
        .into_iter()
        .map(|v| FoldOutcome {
            validation_fold: v,
            checkpoint: None,
            curve: Vec::new(),
            test,
        })
        .collect();
    finish(
        plan,
        outcomes,
        validation,
        Vec::new(),
        choice.threshold,
        choice.mean_f1,
    )
}
