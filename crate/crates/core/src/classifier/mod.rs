//! Turn scorers.
//!
//! Anything that maps turns to [`ProbTriple`]s can drive the rest of the
//! pipeline. This module provides a hashed n-gram linear softmax baseline
//! trained with class-weighted cross-entropy, a model file format for it, and
//! a reader for probabilities produced by an external model.

mod external;
mod features;
mod model;
mod model_file;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::metrics::MetricsError;

pub use external::{load_external_proba, read_external_proba, write_predictions, ExternalProba};
pub use features::{featurize, SparseVector};
pub(crate) use model::fit_normalized;
pub use model::{
    fit, predict_proba, select_best_checkpoint, train, weighted_cross_entropy, Checkpoint,
    CheckpointSummary, LinearModel,
};
pub use model_file::{read_model, write_model, MODEL_FORMAT_VERSION};

/// Probabilities of (irrelevant, opening, closing) for one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    p0: f64,
    p1: f64,
    p2: f64,
}

/// Allowed deviation of a triple's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

impl ProbTriple {
    /// Validates components in [0, 1] summing to 1 within [`SUM_TOLERANCE`].
    pub fn new(p0: f64, p1: f64, p2: f64) -> Result<Self, ClassifierError> {
        let invalid =
            || ClassifierError::ProbabilityInvariantViolation(format!("({p0}, {p1}, {p2})"));
        if ![p0, p1, p2]
            .iter()
            .all(|p| p.is_finite() && (0.0..=1.0).contains(p))
        {
            return Err(invalid());
        }
        if ((p0 + p1 + p2) - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid());
        }
        Ok(ProbTriple { p0, p1, p2 })
    }

    /// Divides non-negative scores by their sum.
    pub fn normalized(a: f64, b: f64, c: f64) -> Result<Self, ClassifierError> {
        let sum = a + b + c;
        if ![a, b, c].iter().all(|v| v.is_finite() && *v >= 0.0) || sum <= 0.0 {
            return Err(ClassifierError::ProbabilityInvariantViolation(format!(
                "({a}, {b}, {c})"
            )));
        }
        Ok(ProbTriple {
            p0: a / sum,
            p1: b / sum,
            p2: c / sum,
        })
    }

    /// Numerically stable softmax.
    pub fn from_logits(z: [f64; 3]) -> Self {
        let m = z[0].max(z[1]).max(z[2]);
        let e = z.map(|v| (v - m).exp());
        let sum = e[0] + e[1] + e[2];
        ProbTriple {
            p0: e[0] / sum,
            p1: e[1] / sum,
            p2: e[2] / sum,
        }
    }

    pub fn uniform() -> Self {
        ProbTriple::from_logits([0.0; 3])
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Irrelevant => self.p0,
            Label::Opening => self.p1,
            Label::Closing => self.p2,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }

    /// Plain argmax, ties to the lower class.
    pub fn argmax(&self) -> Label {
        let mut best = Label::Irrelevant;
        for label in [Label::Opening, Label::Closing] {
            if self.get(label) > self.get(best) {
                best = label;
            }
        }
        best
    }
}

/// Hashed bag-of-n-grams feature layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of hash buckets; a power of two, at least 1024.
    pub hash_dim: usize,
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
    pub word_unigrams: bool,
    pub lowercase: bool,
    /// Text is cut to this many whitespace tokens before extraction.
    pub max_tokens: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            hash_dim: 1 << 18,
            char_ngram_min: 2,
            char_ngram_max: 4,
            word_unigrams: true,
            lowercase: true,
            max_tokens: 128,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::InvalidConfig(m));
        if !self.hash_dim.is_power_of_two() || self.hash_dim < 1 << 10 {
            return bad(format!(
                "hash_dim must be a power of two >= 1024, got {}",
                self.hash_dim
            ));
        }
        if self.char_ngram_min == 0 || self.char_ngram_min > self.char_ngram_max {
            return bad(format!(
                "char n-gram range {}..{} is empty",
                self.char_ngram_min, self.char_ngram_max
            ));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled: each step shrinks weights by `learning_rate * weight_decay`.
    pub weight_decay: f64,
    /// Multiplier on the loss of examples of each class.
    pub class_weights: [f64; 3],
    pub seed: u64,
    /// Fraction of steps at full learning rate before linear decay to zero.
    pub constant_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.1,
            weight_decay: 0.01,
            class_weights: [1.0, 1.0, 1.0],
            seed: 0,
            constant_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !self.class_weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return bad("class weights must be positive");
        }
        if !(0.0..=1.0).contains(&self.constant_fraction) {
            return bad("constant_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("call {call_id}: turn {turn_index} has no label")]
    UnlabeledExample { call_id: String, turn_index: u32 },
    #[error("no checkpoints to choose from")]
    EmptyList,
    #[error("model was trained with a different feature spec")]
    SpecMismatch,
    #[error("invalid probability triple {0}")]
    ProbabilityInvariantViolation(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate prediction for call {call_id} turn {turn_index}")]
    DuplicateKey { call_id: String, turn_index: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_validation() {
        assert!(ProbTriple::new(0.8, 0.15, 0.05).is_ok());
        assert!(ProbTriple::new(0.5, 0.5, 0.5).is_err());
        assert!(ProbTriple::new(-0.1, 0.6, 0.5).is_err());
        assert!(ProbTriple::new(f64::NAN, 0.5, 0.5).is_err());
        assert!(ProbTriple::normalized(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let u = ProbTriple::from_logits([0.0; 3]);
        for p in u.to_array() {
            assert_eq!(p, 1.0 / 3.0);
        }
        let big = ProbTriple::from_logits([1000.0, 0.0, -1000.0]);
        assert_eq!(big.argmax(), Label::Irrelevant);
        assert!(big.p0().is_finite());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(ProbTriple::uniform().argmax(), Label::Irrelevant);
        assert_eq!(
            ProbTriple::new(0.2, 0.4, 0.4).unwrap().argmax(),
            Label::Opening
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(FeatureSpec::default().validate().is_ok());
        let bad = TrainConfig {
            class_weights: [0.0, 1.0, 1.0],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let small = FeatureSpec {
            hash_dim: 512,
            ..FeatureSpec::default()
        };
        assert!(small.validate().is_err());
        let odd = FeatureSpec {
            hash_dim: 3000,
            ..FeatureSpec::default()
        };
        assert!(odd.validate().is_err());
    }
}
