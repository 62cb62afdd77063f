//! Macro-averaged multiclass metrics.
//!
//! Every metric is an unweighted mean over the three classes, so the two
//! minority script classes count as much as the irrelevant majority.
//! Precision and recall are 0 for a class with a zero denominator.

use serde::{Deserialize, Serialize};

use crate::classifier::ProbTriple;
use crate::corpus::{Label, NUM_CLASSES};
use crate::decision::{decide_batch, DecisionRule};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("ROC AUC needs at least two distinct classes")]
    SingleClassOnly,
}

/// Counts of (true class, predicted class) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.0[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.0[class][class]
    }

    /// Predicted as `class`.
    pub fn predicted(&self, class: usize) -> u64 {
        (0..NUM_CLASSES).map(|t| self.0[t][class]).sum()
    }

    /// Truly `class`.
    pub fn actual(&self, class: usize) -> u64 {
        self.0[class].iter().sum()
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.add(t, p);
    }
    Ok(cm)
}

/// Macro precision, recall, F1 and balanced accuracy (equal to macro recall),
/// plus plain accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn macro_prf(cm: &ConfusionMatrix) -> Result<MacroScores, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for c in 0..NUM_CLASSES {
        let tp = cm.true_positives(c);
        let p = ratio(tp, cm.predicted(c));
        let r = ratio(tp, cm.actual(c));
        precision += p;
        recall += r;
        f1 += if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
    }
    let n = NUM_CLASSES as f64;
    let correct: u64 = (0..NUM_CLASSES).map(|c| cm.true_positives(c)).sum();
    Ok(MacroScores {
        precision: precision / n,
        recall: recall / n,
        f1: f1 / n,
        balanced_accuracy: recall / n,
        accuracy: ratio(correct, total),
    })
}

/// Macro F1 only; the hot path of threshold search.
pub fn f1_macro(cm: &ConfusionMatrix) -> f64 {
    macro_prf(cm).map(|s| s.f1).unwrap_or(0.0)
}

/// Binary ROC AUC: the probability that a random positive outscores a random
/// negative, ties counting one half. Computed from mid-ranks (Mann-Whitney U),
/// which equals counting all positive-negative pairs. `None` when either side
/// is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based) mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let positives_in_run = order[i..=j].iter().filter(|&&k| positive[k]).count();
        rank_sum += mid_rank * positives_in_run as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest ROC AUC averaged over the classes present in `y_true`.
pub fn roc_auc_ovr_macro(y_true: &[Label], probs: &[ProbTriple]) -> Result<f64, MetricsError> {
    if y_true.len() != probs.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: probs.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut aucs = Vec::with_capacity(NUM_CLASSES);
    for class in Label::ALL {
        let positive: Vec<bool> = y_true.iter().map(|&l| l == class).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p.get(class)).collect();
        if let Some(auc) = binary_auc(&scores, &positive) {
            aucs.push(auc);
        } else if positive.iter().all(|&p| p) {
            return Err(MetricsError::SingleClassOnly);
        }
    }
    if aucs.is_empty() {
        return Err(MetricsError::SingleClassOnly);
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// The metric columns reported for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub roc_auc_macro_ovr: f64,
    pub recall_macro: f64,
    pub precision_macro: f64,
    pub balanced_accuracy: f64,
    pub f1_macro: f64,
    pub accuracy: f64,
    pub threshold_used: f64,
}

impl MetricBundle {
    /// Field-wise arithmetic mean.
    pub fn mean(bundles: &[MetricBundle]) -> Option<MetricBundle> {
        if bundles.is_empty() {
            return None;
        }
        let n = bundles.len() as f64;
        let avg = |f: fn(&MetricBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
        Some(MetricBundle {
            roc_auc_macro_ovr: avg(|b| b.roc_auc_macro_ovr),
            recall_macro: avg(|b| b.recall_macro),
            precision_macro: avg(|b| b.precision_macro),
            balanced_accuracy: avg(|b| b.balanced_accuracy),
            f1_macro: avg(|b| b.f1_macro),
            accuracy: avg(|b| b.accuracy),
            threshold_used: avg(|b| b.threshold_used),
        })
    }
}

/// Scores probabilities against gold labels under `rule`.
pub fn evaluate(
    y_true: &[Label],
    probs: &[ProbTriple],
    rule: &DecisionRule,
) -> Result<MetricBundle, MetricsError> {
    let auc = roc_auc_ovr_macro(y_true, probs)?;
    let cm = confusion(y_true, &decide_batch(probs, rule))?;
    let s = macro_prf(&cm)?;
    Ok(MetricBundle {
        roc_auc_macro_ovr: auc,
        recall_macro: s.recall,
        precision_macro: s.precision,
        balanced_accuracy: s.balanced_accuracy,
        f1_macro: s.f1,
        accuracy: s.accuracy,
        threshold_used: rule.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use Label::{Closing as C, Irrelevant as I, Opening as O};

    #[test]
    fn confusion_cases() {
        let cm = confusion(&[I, O, C], &[I, O, C]).unwrap();
        assert_eq!(cm.0, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let cm = confusion(&[I, I], &[O, C]).unwrap();
        assert_eq!(cm.0[0], [0, 1, 1]);
        assert_eq!(
            confusion(&[I], &[]),
            Err(MetricsError::LengthMismatch {
                truth: 1,
                predicted: 0
            })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn hand_computed_macro_scores() {
        // Class 0: P=1, R=0.5; class 1: P=0.5, R=1; class 2: P=R=1.
        let cm = confusion(&[I, I, O, C], &[I, O, O, C]).unwrap();
        let s = macro_prf(&cm).unwrap();
        assert_abs_diff_eq!(s.precision, 2.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.recall, 2.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1, (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0, epsilon = 1e-12);
        assert_eq!(s.balanced_accuracy, s.recall);
        assert_abs_diff_eq!(s.accuracy, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let y = [I, O, C, I];
        let s = macro_prf(&confusion(&y, &y).unwrap()).unwrap();
        assert_eq!(
            (s.precision, s.recall, s.f1, s.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn empty_matrix() {
        assert_eq!(
            macro_prf(&ConfusionMatrix::default()),
            Err(MetricsError::Empty)
        );
    }

    #[test]
    fn binary_auc_cases() {
        // Pairs (0.9 vs 0.4) correct, (0.35 vs 0.4) inverted.
        assert_eq!(
            binary_auc(&[0.9, 0.35, 0.4], &[true, true, false]),
            Some(0.5)
        );
        assert_eq!(
            binary_auc(&[0.9, 0.8, 0.1], &[true, true, false]),
            Some(1.0)
        );
        assert_eq!(
            binary_auc(&[0.3, 0.3, 0.3], &[true, false, false]),
            Some(0.5)
        );
        assert_eq!(binary_auc(&[0.3], &[true]), None);
    }

    #[test]
    fn ovr_auc_skips_absent_classes() {
        let p = |a, b, c| ProbTriple::new(a, b, c).unwrap();
        let probs = [p(0.8, 0.1, 0.1), p(0.2, 0.7, 0.1)];
        assert_eq!(roc_auc_ovr_macro(&[I, O], &probs), Ok(1.0));
        assert_eq!(
            roc_auc_ovr_macro(&[I, I], &probs),
            Err(MetricsError::SingleClassOnly)
        );
    }

    #[test]
    fn identical_scores_give_one_half() {
        let u = ProbTriple::uniform();
        assert_abs_diff_eq!(
            roc_auc_ovr_macro(&[I, O, C, I], &[u; 4]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec((0usize..3).prop_map(|i| Label::from_index(i).unwrap()), n)
    }

    proptest! {
        #[test]
        fn scores_in_unit_interval_and_order_free((t, p) in (1usize..60).prop_flat_map(|n| (labels(n), labels(n)))) {
            let s = macro_prf(&confusion(&t, &p).unwrap()).unwrap();
            for m in [s.precision, s.recall, s.f1, s.accuracy] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
            prop_assert_eq!(s.balanced_accuracy, s.recall);
            let mut rt = t.clone();
            let mut rp = p.clone();
            rt.reverse();
            rp.reverse();
            prop_assert_eq!(macro_prf(&confusion(&rt, &rp).unwrap()).unwrap(), s);
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let positive: Vec<bool> = data.iter().map(|d| d.1).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(binary_auc(&scores, &positive), binary_auc(&transformed, &positive));
            if let Some(auc) = binary_auc(&scores, &positive) {
                prop_assert!((0.0..=1.0).contains(&auc));
            }
        }
    }
}
