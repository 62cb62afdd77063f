//! Threshold-moving decision rule.
//!
//! Plain argmax almost never picks a minority class on imbalanced data. The
//! rule here lets the two script classes compete only when their combined
//! probability reaches the threshold: if `p1 + p2 >= threshold`, the larger of
//! `p1` and `p2` wins (ties go to opening); otherwise the turn is irrelevant.

use serde::{Deserialize, Serialize};

use crate::classifier::ProbTriple;
use crate::corpus::Label;

/// Margin above 1 for the threshold that rejects every turn.
pub const REJECT_ALL_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub threshold: f64,
}

impl DecisionRule {
    pub fn new(threshold: f64) -> Result<Self, InvalidThreshold> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(InvalidThreshold(threshold));
        }
        Ok(DecisionRule { threshold })
    }

    /// Threshold `1 + REJECT_ALL_MARGIN`: no probability triple reaches it.
    pub fn reject_all() -> Self {
        DecisionRule {
            threshold: 1.0 + REJECT_ALL_MARGIN,
        }
    }

    pub fn decide(&self, p: &ProbTriple) -> Label {
        decide(p, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("threshold must be finite and non-negative, got {0}")]
pub struct InvalidThreshold(pub f64);

/// Combined script probability the threshold is compared against.
#[inline]
pub fn script_mass(p: &ProbTriple) -> f64 {
    p.p1() + p.p2()
}

pub fn decide(p: &ProbTriple, rule: &DecisionRule) -> Label {
    if script_mass(p) >= rule.threshold {
        if p.p1() >= p.p2() {
            Label::Opening
        } else {
            Label::Closing
        }
    } else {
        Label::Irrelevant
    }
}

pub fn decide_batch(probs: &[ProbTriple], rule: &DecisionRule) -> Vec<Label> {
    probs.iter().map(|p| decide(p, rule)).collect()
}
