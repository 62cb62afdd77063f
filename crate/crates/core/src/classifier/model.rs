#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{featurize, ClassifierError, FeatureSpec, ProbTriple, SparseVector, TrainConfig};
use crate::corpus::{Label, PhraseTurn, NUM_CLASSES};
use crate::metrics::roc_auc_ovr_macro;

/// Multinomial logistic regression over sparse inputs. Inputs are scaled to
/// unit L2 norm before scoring, so text length does not inflate logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub dim: usize,
    /// Row-major: `weights[i * 3 + c]` is the weight of feature `i` for class `c`.
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            dim,
            weights: vec![0.0; dim * NUM_CLASSES],
            bias: [0.0; NUM_CLASSES],
        }
    }

    /// Logits for an already normalized input.
    fn raw_logits(&self, x: &SparseVector, scale: f64) -> [f64; NUM_CLASSES] {
        let mut z = [0.0; NUM_CLASSES];
        for (i, v) in x.iter() {
            let row = &self.weights[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            for c in 0..NUM_CLASSES {
                z[c] += row[c] * v;
            }
        }
        for c in 0..NUM_CLASSES {
            z[c] = z[c] * scale + self.bias[c];
        }
        z
    }

    pub fn logits(&self, x: &SparseVector) -> [f64; NUM_CLASSES] {
        self.raw_logits(&x.l2_normalized(), 1.0)
    }

    pub fn predict(&self, x: &SparseVector) -> ProbTriple {
        ProbTriple::from_logits(self.logits(x))
    }
}

/// Gradient of `weight * -ln softmax(z)[label]` with respect to the logits.
fn logit_gradient(z: [f64; NUM_CLASSES], label: Label, weight: f64) -> [f64; NUM_CLASSES] {
    let p = ProbTriple::from_logits(z).to_array();
    let mut g = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let target = if c == label.index() { 1.0 } else { 0.0 };
        g[c] = weight * (p[c] - target);
    }
    g
}

fn example_loss(z: [f64; NUM_CLASSES], label: Label, weight: f64) -> f64 {
    let m = z[0].max(z[1]).max(z[2]);
    let log_sum = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    weight * (log_sum - z[label.index()])
}

/// Class-weighted cross-entropy of `model` on a batch, averaged over the batch
/// size (not over the weights, so scaling all class weights scales the loss),
/// together with its gradient in the same layout as the model.
pub fn weighted_cross_entropy(
    model: &LinearModel,
    batch: &[(&SparseVector, Label)],
    class_weights: &[f64; NUM_CLASSES],
) -> (f64, LinearModel) {
    let mut grad = LinearModel::zeros(model.dim);
    let mut loss = 0.0;
    let n = batch.len().max(1) as f64;
    for &(x, label) in batch {
        let x = x.l2_normalized();
        let z = model.raw_logits(&x, 1.0);
        let w = class_weights[label.index()];
        loss += example_loss(z, label, w);
        let g = logit_gradient(z, label, w);
        for c in 0..NUM_CLASSES {
            grad.bias[c] += g[c] / n;
        }
        for (i, v) in x.iter() {
            for c in 0..NUM_CLASSES {
                grad.weights[i * NUM_CLASSES + c] += g[c] * v / n;
            }
        }
    }
    (loss / n, grad)
}

/// Model snapshot at the end of an epoch, scored on the validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub spec: FeatureSpec,
    pub model: LinearModel,
    /// Macro one-vs-rest ROC AUC on the validation set.
    pub validation_auc: f64,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
}

/// The lightweight part of a checkpoint, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub epoch: usize,
    pub validation_auc: f64,
    pub train_loss: f64,
}

impl Checkpoint {
    pub fn summary(&self) -> CheckpointSummary {
        CheckpointSummary {
            epoch: self.epoch,
            validation_auc: self.validation_auc,
            train_loss: self.train_loss,
        }
    }

    pub fn predict_features(&self, x: &SparseVector) -> ProbTriple {
        self.model.predict(x)
    }

    /// Prediction for an input that is already unit-normalized.
    pub(crate) fn predict_normalized(&self, x: &SparseVector) -> ProbTriple {
        ProbTriple::from_logits(self.model.raw_logits(x, 1.0))
    }
}

/// Optimizer state. Weights are kept as `scale * stored` so that decoupled
/// weight decay costs one multiplication per step instead of a pass over every
/// parameter. Step sizes are per coordinate (AdaGrad): each parameter's step
/// is divided by the root of its accumulated squared gradients, so rare
/// n-grams that identify script turns move as fast as frequent ones.
struct Optimizer {
    stored: LinearModel,
    scale: f64,
    accum: Vec<f64>,
    bias_accum: [f64; NUM_CLASSES],
    /// Scratch space for the batch gradient: (feature, per-class gradient).
    entries: Vec<(usize, [f64; NUM_CLASSES])>,
}

const ADAGRAD_EPS: f64 = 1e-10;

impl Optimizer {
    fn new(start: LinearModel) -> Self {
        let n = start.weights.len();
        Optimizer {
            stored: start,
            scale: 1.0,
            accum: vec![0.0; n],
            bias_accum: [0.0; NUM_CLASSES],
            entries: Vec::new(),
        }
    }

    fn materialize(&self) -> LinearModel {
        let mut model = self.stored.clone();
        model.weights.iter_mut().for_each(|w| *w *= self.scale);
        model
    }

    fn rescale(&mut self) {
        let s = self.scale;
        self.stored.weights.iter_mut().for_each(|w| *w *= s);
        self.scale = 1.0;
    }

    /// One step on a batch of normalized inputs; returns the batch loss.
    fn step(&mut self, batch: &[(&SparseVector, Label)], config: &TrainConfig, lr: f64) -> f64 {
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut bias_grad = [0.0; NUM_CLASSES];
        self.entries.clear();
        for &(x, label) in batch {
            let z = self.stored.raw_logits(x, self.scale);
            let w = config.class_weights[label.index()];
            loss += example_loss(z, label, w);
            let g = logit_gradient(z, label, w).map(|v| v / n);
            for c in 0..NUM_CLASSES {
                bias_grad[c] += g[c];
            }
            self.entries
                .extend(x.iter().map(|(i, v)| (i, g.map(|gc| gc * v))));
        }
        self.entries.sort_by_key(|e| e.0);

        self.scale *= 1.0 - lr * config.weight_decay;
        if self.scale < 1e-6 {
            self.rescale();
        }
        let mut k = 0;
        while k < self.entries.len() {
            let i = self.entries[k].0;
            let mut g = [0.0; NUM_CLASSES];
            while k < self.entries.len() && self.entries[k].0 == i {
                for c in 0..NUM_CLASSES {
                    g[c] += self.entries[k].1[c];
                }
                k += 1;
            }
            for c in 0..NUM_CLASSES {
                let j = i * NUM_CLASSES + c;
                self.accum[j] += g[c] * g[c];
                self.stored.weights[j] -=
                    lr * g[c] / (self.accum[j].sqrt() + ADAGRAD_EPS) / self.scale;
            }
        }
        for c in 0..NUM_CLASSES {
            self.bias_accum[c] += bias_grad[c] * bias_grad[c];
            self.stored.bias[c] -= lr * bias_grad[c] / (self.bias_accum[c].sqrt() + ADAGRAD_EPS);
        }
        loss / n
    }
}

/// Step size at `step` of `total`: constant for the first `constant_fraction`
/// of the steps, then linear decay towards zero.
fn learning_rate_at(config: &TrainConfig, step: usize, total: usize) -> f64 {
    let constant = (config.constant_fraction * total as f64).floor() as usize;
    if step < constant {
        config.learning_rate
    } else {
        config.learning_rate * (total - step) as f64 / (total - constant) as f64
    }
}

/// Trains on pre-computed features. See [`train`].
pub fn fit(
    train: &[(SparseVector, Label)],
    validation: &[(SparseVector, Label)],
    config: &TrainConfig,
    spec: &FeatureSpec,
) -> Result<Vec<Checkpoint>, ClassifierError> {
    let normalize = |set: &[(SparseVector, Label)]| -> Vec<(SparseVector, Label)> {
        set.iter().map(|(x, l)| (x.l2_normalized(), *l)).collect()
    };
    let (train, validation) = (normalize(train), normalize(validation));
    let train: Vec<(&SparseVector, Label)> = train.iter().map(|(x, l)| (x, *l)).collect();
    let validation: Vec<(&SparseVector, Label)> = validation.iter().map(|(x, l)| (x, *l)).collect();
    fit_normalized(&train, &validation, config, spec)
}

/// [`fit`] on inputs that are already unit-normalized.
pub(crate) fn fit_normalized(
    train: &[(&SparseVector, Label)],
    validation: &[(&SparseVector, Label)],
    config: &TrainConfig,
    spec: &FeatureSpec,
) -> Result<Vec<Checkpoint>, ClassifierError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if validation.is_empty() {
        return Err(ClassifierError::EmptyValidationSet);
    }
    let dim = train[0].0.dim;
    let validation_labels: Vec<Label> = validation.iter().map(|(_, l)| *l).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut state = Optimizer::new(LinearModel::zeros(dim));

    let mut checkpoints = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            epoch_loss += state.step(&batch, config, learning_rate_at(config, step, total_steps));
            step += 1;
        }
        let model = state.materialize();
        let probs: Vec<ProbTriple> = validation
            .iter()
            .map(|(x, _)| ProbTriple::from_logits(model.raw_logits(x, 1.0)))
            .collect();
        let validation_auc = roc_auc_ovr_macro(&validation_labels, &probs)?;
        checkpoints.push(Checkpoint {
            epoch,
            spec: spec.clone(),
            model,
            validation_auc,
            train_loss: epoch_loss / steps_per_epoch as f64,
        });
    }
    Ok(checkpoints)
}

fn labeled_features(
    turns: &[&PhraseTurn],
    spec: &FeatureSpec,
) -> Result<Vec<(SparseVector, Label)>, ClassifierError> {
    turns
        .par_iter()
        .map(|t| {
            let label = t.label.ok_or_else(|| ClassifierError::UnlabeledExample {
                call_id: t.call_id.clone(),
                turn_index: t.turn_index,
            })?;
            Ok((featurize(&t.text, spec), label))
        })
        .collect()
}

/// Trains the baseline by mini-batch gradient descent (AdaGrad step sizes) on
/// class-weighted cross-entropy with decoupled weight decay, reshuffling each epoch from
/// `config.seed`. Returns one checkpoint per epoch, each scored by macro
/// one-vs-rest ROC AUC on `validation`.
pub fn train(
    turns: &[&PhraseTurn],
    config: &TrainConfig,
    spec: &FeatureSpec,
    validation: &[&PhraseTurn],
) -> Result<Vec<Checkpoint>, ClassifierError> {
    spec.validate()?;
    if turns.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let train_set = labeled_features(turns, spec)?;
    let validation_set = labeled_features(validation, spec)?;
    fit(&train_set, &validation_set, config, spec)
}

/// Highest validation AUC; the earliest epoch wins ties.
pub fn select_best_checkpoint(checkpoints: &[Checkpoint]) -> Result<&Checkpoint, ClassifierError> {
    let mut best: Option<&Checkpoint> = None;
    for cp in checkpoints {
        if best.is_none_or(|b| cp.validation_auc > b.validation_auc) {
            best = Some(cp);
        }
    }
    best.ok_or(ClassifierError::EmptyList)
}

pub fn predict_proba(
    model: &Checkpoint,
    turns: &[&PhraseTurn],
    spec: &FeatureSpec,
) -> Result<Vec<ProbTriple>, ClassifierError> {
    if &model.spec != spec {
        return Err(ClassifierError::SpecMismatch);
    }
    Ok(turns
        .par_iter()
        .map(|t| model.predict_features(&featurize(&t.text, spec)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DIM: usize = 1 << 10;

    fn one_hot(i: u32) -> SparseVector {
        SparseVector::from_pairs(DIM, vec![(i, 1.0)])
    }

    fn spec() -> FeatureSpec {
        FeatureSpec {
            hash_dim: DIM,
            ..FeatureSpec::default()
        }
    }

    fn checkpoint(epoch: usize, auc: f64) -> Checkpoint {
        Checkpoint {
            epoch,
            spec: spec(),
            model: LinearModel::zeros(DIM),
            validation_auc: auc,
            train_loss: 0.0,
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data: Vec<(SparseVector, Label)> = (0..100)
            .map(|i| {
                if i % 2 == 0 {
                    (one_hot(1), Label::Irrelevant)
                } else {
                    (one_hot(2), Label::Opening)
                }
            })
            .collect();
        let config = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let cps = fit(&data, &data, &config, &spec()).unwrap();
        assert_eq!(
            cps.iter().map(|c| c.epoch).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        let last = cps.last().unwrap();
        assert!(data
            .iter()
            .all(|(x, l)| last.model.predict(x).argmax() == *l));
        assert_eq!(last.validation_auc, 1.0);
    }

    #[test]
    fn scaling_class_weights_scales_loss() {
        let model = LinearModel {
            dim: DIM,
            weights: (0..DIM * 3)
                .map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5)
                .collect(),
            bias: [0.1, -0.2, 0.05],
        };
        let (a, b) = (one_hot(3), one_hot(5));
        let batch = [(&a, Label::Opening), (&b, Label::Closing)];
        let (l1, _) = weighted_cross_entropy(&model, &batch, &[1.0, 1.0, 1.0]);
        let (l2, _) = weighted_cross_entropy(&model, &batch, &[2.0, 2.0, 2.0]);
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn optimizer_step_follows_the_gradient() {
        let (a, b) = (
            one_hot(3),
            SparseVector::from_pairs(DIM, vec![(3, 1.0), (9, 2.0)]),
        );
        let batch = [(&a, Label::Opening), (&b, Label::Closing)];
        let weights = [0.2, 1.0, 3.0];
        let mut start = LinearModel::zeros(DIM);
        start.weights[9 * 3 + 1] = 0.4;
        start.bias = [0.3, 0.0, -0.1];

        let config = TrainConfig {
            weight_decay: 0.0,
            class_weights: weights,
            ..TrainConfig::default()
        };
        let normalized: Vec<SparseVector> = [&a, &b].iter().map(|x| x.l2_normalized()).collect();
        let nbatch: Vec<(&SparseVector, Label)> = normalized
            .iter()
            .zip([Label::Opening, Label::Closing])
            .collect();
        let mut state = Optimizer::new(start.clone());
        state.step(&nbatch, &config, 0.5);

        // First AdaGrad step from empty accumulators: lr * g / |g| per coordinate.
        let (_, grad) = weighted_cross_entropy(&start, &batch, &weights);
        let expected = |w: f64, g: f64| {
            if g == 0.0 {
                w
            } else {
                w - 0.5 * g / (g.abs() + ADAGRAD_EPS)
            }
        };
        for (k, w) in state.stored.weights.iter().enumerate() {
            assert!((w - expected(start.weights[k], grad.weights[k])).abs() < 1e-12);
        }
        for c in 0..3 {
            assert!((state.stored.bias[c] - expected(start.bias[c], grad.bias[c])).abs() < 1e-12);
        }
        // Second step: the accumulator now holds g1^2 + g2^2.
        let after_one = state.materialize();
        state.step(&nbatch, &config, 0.5);
        let (_, grad2) = weighted_cross_entropy(&after_one, &batch, &weights);
        for k in [3 * 3, 3 * 3 + 1, 9 * 3 + 2] {
            let (g1, g2) = (grad.weights[k], grad2.weights[k]);
            let want = after_one.weights[k] - 0.5 * g2 / ((g1 * g1 + g2 * g2).sqrt() + ADAGRAD_EPS);
            assert!((state.stored.weights[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_decay_shrinks_weights() {
        let x = one_hot(4);
        let batch = [(&x, Label::Opening)];
        let mut start = LinearModel::zeros(DIM);
        start.weights[100] = 1.0;
        let mut state = Optimizer::new(start);
        let config = TrainConfig {
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        state.step(&batch, &config, 0.1);
        assert!((state.materialize().weights[100] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn schedule_decays_linearly() {
        let config = TrainConfig {
            learning_rate: 1.0,
            constant_fraction: 0.5,
            ..TrainConfig::default()
        };
        assert_eq!(learning_rate_at(&config, 0, 10), 1.0);
        assert_eq!(learning_rate_at(&config, 4, 10), 1.0);
        assert_eq!(learning_rate_at(&config, 5, 10), 1.0);
        assert!((learning_rate_at(&config, 9, 10) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<(SparseVector, Label)> = (0..60u32)
            .map(|i| {
                (
                    SparseVector::from_pairs(DIM, vec![(i % 7, 1.0), (i % 11 + 20, 1.0)]),
                    Label::from_index((i % 3) as usize).unwrap(),
                )
            })
            .collect();
        let config = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        let a = fit(&data, &data, &config, &spec()).unwrap();
        let b = fit(&data, &data, &config, &spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn more_weight_on_class_one_never_fewer_class_one_predictions() {
        // Features 0..4 are shared between classes 0 and 1 with varying odds.
        let mut data = Vec::new();
        for f in 0..5u32 {
            for k in 0..10u32 {
                let label = if k < 2 + f {
                    Label::Opening
                } else {
                    Label::Irrelevant
                };
                data.push((one_hot(f), label));
            }
            data.push((one_hot(10 + f), Label::Closing));
        }
        let count = |w1: f64| {
            let config = TrainConfig {
                epochs: 60,
                learning_rate: 0.5,
                class_weights: [1.0, w1, 1.0],
                ..TrainConfig::default()
            };
            let cps = fit(&data, &data, &config, &spec()).unwrap();
            let model = &cps.last().unwrap().model;
            data.iter()
                .filter(|(x, _)| model.predict(x).argmax() == Label::Opening)
                .count()
        };
        let mut previous = 0;
        for w1 in [0.5, 1.0, 2.0, 4.0] {
            let n = count(w1);
            assert!(n >= previous, "w1 = {w1}: {n} < {previous}");
            previous = n;
        }
    }

    #[test]
    fn checkpoint_selection() {
        let cps: Vec<Checkpoint> = [0.7, 0.9, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &a)| checkpoint(i + 1, a))
            .collect();
        assert_eq!(select_best_checkpoint(&cps).unwrap().epoch, 2);
        let tied = vec![checkpoint(1, 0.9), checkpoint(2, 0.9)];
        assert_eq!(select_best_checkpoint(&tied).unwrap().epoch, 1);
        assert_eq!(select_best_checkpoint(&cps[..1]).unwrap().epoch, 1);
        assert!(matches!(
            select_best_checkpoint(&[]),
            Err(ClassifierError::EmptyList)
        ));
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let cp = checkpoint(1, 0.5);
        let turn = PhraseTurn {
            call_id: "c".into(),
            turn_index: 0,
            channel: crate::corpus::Channel::Agent,
            start_ms: 0,
            end_ms: 1,
            text: "please hold".into(),
            label: None,
        };
        let probs = predict_proba(&cp, &[&turn], &spec()).unwrap();
        assert_eq!(probs[0].to_array(), [1.0 / 3.0; 3]);
        let other = FeatureSpec::default();
        assert!(matches!(
            predict_proba(&cp, &[&turn], &other),
            Err(ClassifierError::SpecMismatch)
        ));
    }

    #[test]
    fn empty_and_unlabeled_inputs() {
        let turn = PhraseTurn {
            call_id: "c".into(),
            turn_index: 0,
            channel: crate::corpus::Channel::Agent,
            start_ms: 0,
            end_ms: 1,
            text: "x".into(),
            label: None,
        };
        let config = TrainConfig::default();
        assert!(matches!(
            train(&[], &config, &spec(), &[&turn]),
            Err(ClassifierError::EmptyTrainingSet)
        ));
        assert!(matches!(
            train(&[&turn], &config, &spec(), &[&turn]),
            Err(ClassifierError::UnlabeledExample { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn predictions_are_valid_triples(text in ".{0,60}", seed in 0u64..1000) {
            let mut model = LinearModel::zeros(DIM);
            let mut state = seed;
            for w in model.weights.iter_mut() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *w = ((state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 20.0;
            }
            let p = model.predict(&featurize(&text, &spec()));
            let sum: f64 = p.to_array().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(p.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
