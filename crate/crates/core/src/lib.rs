//! Detection of on-hold scripts in per-turn call transcripts.
//!
//! A call transcript is a sequence of dialogue turns. Each turn is classified
//! into one of three mutually exclusive classes ([`Label`]): irrelevant,
//! an opening script (putting the client on hold) or a closing script
//! (returning to the client). Any scorer that emits a probability triple per
//! turn can be plugged in; the crate ships a hashed n-gram linear baseline and
//! an adapter for probabilities computed elsewhere.
//!
//! The pieces:
//!
//! - [`corpus`]: transcript data model, CSV ingestion, synthetic corpora, fold splitting
//! - [`classifier`]: feature hashing, the baseline softmax model, external probabilities
//! - [`decision`]: the threshold-moving rule turning probabilities into labels
//! - [`metrics`]: macro precision/recall/F1, balanced accuracy, one-vs-rest ROC AUC
//! - [`tuning`]: cross-validation with a shared threshold, hyperparameter sweeps
//! - [`compliance`]: matching detected scripts against registered hold intervals
//! - [`cli`]: configuration and the command implementations behind the `holdscan` binary
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod classifier;
pub mod cli;
pub mod compliance;
pub mod corpus;
pub mod decision;
pub mod metrics;
pub mod tuning;

pub use classifier::{Checkpoint, FeatureSpec, ProbTriple, TrainConfig};
pub use compliance::{AuditConfig, ComplianceReport, ViolationLedger};
pub use corpus::{Call, Channel, Corpus, FoldPlan, HoldInterval, Label, PhraseTurn};
pub use decision::DecisionRule;
pub use metrics::{ConfusionMatrix, MetricBundle};
pub use tuning::{CvRun, SweepResult};

/// Version string recorded in every file the tool writes.
pub const TOOL_VERSION: &str = concat!("holdscan ", env!("CARGO_PKG_VERSION"));
