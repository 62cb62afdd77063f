use serde::{Deserialize, Serialize};

use super::TuningError;
use crate::classifier::ProbTriple;
use crate::corpus::Label;
use crate::decision::{script_mass, DecisionRule};
use crate::metrics::{f1_macro, ConfusionMatrix};

/// Validation predictions of one fold with their gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub probs: Vec<ProbTriple>,
    pub labels: Vec<Label>,
}

impl FoldPredictions {
    pub fn new(probs: Vec<ProbTriple>, labels: Vec<Label>) -> Result<Self, TuningError> {
        if probs.len() != labels.len() {
            return Err(TuningError::LengthMismatch {
                probs: probs.len(),
                labels: labels.len(),
            });
        }
        Ok(FoldPredictions { probs, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// F1-macro at `threshold`, averaged over the folds.
    pub mean_f1: f64,
}

/// The thresholds worth trying: every distinct `p1 + p2` in `folds`, plus the
/// reject-all sentinel, ascending.
pub fn threshold_candidates(folds: &[FoldPredictions]) -> Vec<f64> {
    let mut c: Vec<f64> = folds
        .iter()
        .flat_map(|f| f.probs.iter().map(script_mass))
        .chain(std::iter::once(DecisionRule::reject_all().threshold))
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Picks one threshold for all folds: the candidate (see
/// [`threshold_candidates`]) maximizing the fold-averaged F1-macro. Ties go to
/// the smallest threshold.
///
/// Runs in `O(n log n + c * folds)`: candidates are visited from the largest
/// down, and each turn switches from irrelevant to its script class exactly
/// once, when the threshold drops to its script mass.
pub fn shared_threshold_search(folds: &[FoldPredictions]) -> Result<ThresholdChoice, TuningError> {
    if folds.is_empty() {
        return Err(TuningError::NoFolds);
    }
    for (i, f) in folds.iter().enumerate() {
        if f.probs.is_empty() {
            return Err(TuningError::EmptyFold(i));
        }
        if f.probs.len() != f.labels.len() {
            return Err(TuningError::LengthMismatch {
                probs: f.probs.len(),
                labels: f.labels.len(),
            });
        }
    }

    // (mass, fold, script class, gold class), largest mass first.
    let mut events: Vec<(f64, usize, Label, Label)> = Vec::new();
    let mut matrices = vec![ConfusionMatrix::default(); folds.len()];
    for (fi, f) in folds.iter().enumerate() {
        for (p, &truth) in f.probs.iter().zip(&f.labels) {
            matrices[fi].add(truth, Label::Irrelevant);
            let class = if p.p1() >= p.p2() {
                Label::Opening
            } else {
                Label::Closing
            };
            events.push((script_mass(p), fi, class, truth));
        }
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut candidates = threshold_candidates(folds);
    candidates.reverse();
    let n = folds.len() as f64;
    let mut next = 0;
    let mut best = ThresholdChoice {
        threshold: f64::NAN,
        mean_f1: f64::NEG_INFINITY,
    };
    for &tau in &candidates {
        while next < events.len() && events[next].0 >= tau {
            let (_, fi, class, truth) = events[next];
            let m = &mut matrices[fi].0[truth.index()];
            m[Label::Irrelevant.index()] -= 1;
            m[class.index()] += 1;
            next += 1;
        }
        let mean = matrices.iter().map(f1_macro).sum::<f64>() / n;
        if mean >= best.mean_f1 {
            best = ThresholdChoice {
                threshold: tau,
                mean_f1: mean,
            };
        }
    }
    Ok(best)
}
