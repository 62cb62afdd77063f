#![allow(clippy::needless_range_loop)]

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Label, TurnKey, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each labeled turn is stratified on its own.
    #[default]
    Row,
    /// All turns of a call land in the same fold.
    CallGrouped,
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" => Ok(SplitMode::Row),
            "call_grouped" | "call-grouped" => Ok(SplitMode::CallGrouped),
            other => Err(format!(
                "unknown split mode {other:?} (expected row or call_grouped)"
            )),
        }
    }
}

/// Fold assignment for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAssignment {
    pub call_id: String,
    pub turn_index: u32,
    pub fold: usize,
}

/// Assignment of every turn of a corpus to one of `k` folds, with one fold
/// held out for testing. Entries follow [`Corpus::turns`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub test_fold: usize,
    pub mode: SplitMode,
    pub seed: u64,
    pub assignment: Vec<TurnAssignment>,
}

impl FoldPlan {
    pub fn with_test_fold(mut self, test_fold: usize) -> Result<Self, CorpusError> {
        if test_fold >= self.k {
            return Err(CorpusError::InvalidFolds(format!(
                "test fold {test_fold} outside [0, {})",
                self.k
            )));
        }
        self.test_fold = test_fold;
        Ok(self)
    }

    /// Fold index of each turn, in corpus order.
    pub fn folds(&self) -> Vec<usize> {
        self.assignment.iter().map(|a| a.fold).collect()
    }

    /// Positions (in corpus order) of the turns assigned to `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| a.fold == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Folds other than the test fold, ascending.
    pub fn non_test_folds(&self) -> Vec<usize> {
        (0..self.k).filter(|&f| f != self.test_fold).collect()
    }

    /// Per-fold class counts (rows = folds).
    pub fn class_counts(&self, labels: &[Label]) -> Vec<[usize; NUM_CLASSES]> {
        let mut counts = vec![[0; NUM_CLASSES]; self.k];
        for (a, label) in self.assignment.iter().zip(labels) {
            counts[a.fold][label.index()] += 1;
        }
        counts
    }

    /// Verifies the plan describes exactly the turns of `corpus`, in order,
    /// and that it satisfies the fold invariants.
    pub fn check_against(&self, corpus: &Corpus) -> Result<(), CorpusError> {
        if self.k == 0 || self.test_fold >= self.k {
            return Err(CorpusError::InvalidFolds(format!(
                "k = {}, test fold = {}",
                self.k, self.test_fold
            )));
        }
        if self.assignment.len() != corpus.num_turns() {
            return Err(CorpusError::InvalidFolds(format!(
                "plan covers {} turns, corpus has {}",
                self.assignment.len(),
                corpus.num_turns()
            )));
        }
        for (a, turn) in self.assignment.iter().zip(corpus.turns()) {
            if a.call_id != turn.call_id || a.turn_index != turn.turn_index {
                return Err(CorpusError::InvalidFolds(format!(
                    "plan entry ({}, {}) does not match corpus turn ({}, {})",
                    a.call_id, a.turn_index, turn.call_id, turn.turn_index
                )));
            }
            if a.fold >= self.k {
                return Err(CorpusError::InvalidFolds(format!(
                    "fold {} outside [0, {})",
                    a.fold, self.k
                )));
            }
        }
        let labels = corpus.gold_labels()?;
        check_every_fold_has_every_class(&self.class_counts(&labels))
    }
}

fn check_every_fold_has_every_class(counts: &[[usize; NUM_CLASSES]]) -> Result<(), CorpusError> {
    for (fold, row) in counts.iter().enumerate() {
        for class in Label::ALL {
            if row[class.index()] == 0 {
                return Err(CorpusError::FoldMissingClass { fold, class });
            }
        }
    }
    Ok(())
}

/// Splits the labeled turns of `corpus` into `k` stratified folds. The test
/// fold defaults to 0.
///
/// In row mode each class is shuffled and dealt round-robin, continuing the
/// rotation from where the previous class stopped, so every class count per
/// fold is the floor or ceiling of `total / k`. In call-grouped mode whole
/// calls are placed greedily (rarest class mix first) into the fold that keeps
/// per-class fold shares most even.
pub fn stratified_split(
    corpus: &Corpus,
    k: usize,
    seed: u64,
    mode: SplitMode,
) -> Result<FoldPlan, CorpusError> {
    if k == 0 {
        return Err(CorpusError::InvalidFolds("k must be at least 1".into()));
    }
    let labels = corpus.gold_labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let folds = match mode {
        SplitMode::Row => split_rows(&labels, k, &mut rng)?,
        SplitMode::CallGrouped => split_calls(corpus, &labels, k, &mut rng)?,
    };

    let assignment = corpus
        .turns()
        .zip(folds)
        .map(|(turn, fold)| {
            let TurnKey {
                call_id,
                turn_index,
            } = TurnKey::of(turn);
            TurnAssignment {
                call_id,
                turn_index,
                fold,
            }
        })
        .collect();
    let plan = FoldPlan {
        k,
        test_fold: 0,
        mode,
        seed,
        assignment,
    };
    check_every_fold_has_every_class(&plan.class_counts(&labels))?;
    Ok(plan)
}

fn split_rows(labels: &[Label], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, CorpusError> {
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(CorpusError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

fn split_calls(
    corpus: &Corpus,
    labels: &[Label],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, CorpusError> {
    let mut per_call = Vec::with_capacity(corpus.calls.len());
    let mut cursor = 0;
    for call in &corpus.calls {
        let mut counts = [0usize; NUM_CLASSES];
        for label in &labels[cursor..cursor + call.turns.len()] {
            counts[label.index()] += 1;
        }
        per_call.push((cursor, call.turns.len(), counts));
        cursor += call.turns.len();
    }

    let mut totals = [0usize; NUM_CLASSES];
    for class in Label::ALL {
        let calls_with = per_call
            .iter()
            .filter(|(_, _, c)| c[class.index()] > 0)
            .count();
        if calls_with < k {
            return Err(CorpusError::ClassTooSmall {
                class,
                count: calls_with,
                k,
            });
        }
        totals[class.index()] = per_call.iter().map(|(_, _, c)| c[class.index()]).sum();
    }
    let share = |counts: &[usize; NUM_CLASSES], c: usize| counts[c] as f64 / totals[c] as f64;

    per_call.shuffle(rng);
    let spread = |counts: &[usize; NUM_CLASSES]| {
        let shares: Vec<f64> = (0..NUM_CLASSES).map(|c| share(counts, c)).collect();
        let mean = shares.iter().sum::<f64>() / NUM_CLASSES as f64;
        shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
    };
    // Stable sort keeps the shuffled order among equally mixed calls.
    per_call.sort_by(|a, b| spread(&b.2).total_cmp(&spread(&a.2)));

    let mut fold_counts = vec![[0usize; NUM_CLASSES]; k];
    let mut fold_sizes = vec![0usize; k];
    let mut folds = vec![0; labels.len()];
    for (start, len, counts) in per_call {
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..k {
            let mut cost = 0.0;
            for c in 0..NUM_CLASSES {
                let values: Vec<f64> = (0..k)
                    .map(|g| {
                        let extra = if g == f { counts[c] } else { 0 };
                        (fold_counts[g][c] + extra) as f64 / totals[c] as f64
                    })
                    .collect();
                let mean = values.iter().sum::<f64>() / k as f64;
                cost += values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            let candidate = (cost, fold_sizes[f], f);
            let better = match best {
                None => true,
                Some((bc, bs, _)) => {
                    cost < bc - 1e-15 || ((cost - bc).abs() <= 1e-15 && fold_sizes[f] < bs)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        let (_, _, f) = best.expect("k >= 1");
        for c in 0..NUM_CLASSES {
            fold_counts[f][c] += counts[c];
        }
        fold_sizes[f] += len;
        folds[start..start + len].fill(f);
    }
    Ok(folds)
}
