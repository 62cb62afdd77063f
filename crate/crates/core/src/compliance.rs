//! Hold-script compliance auditing.
//!
//! Registered holds are matched against turns predicted as opening or
//! closing scripts. An opening must end shortly before the hold starts and a
//! closing must start shortly after it ends. Script turns that match no hold
//! are reported as unregistered holds: the agent asked the client to wait
//! without logging it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Call, Corpus, HoldInterval, Label};

/// Matching windows around each hold, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// How far before the hold start an opening may end.
    pub pre_window_ms: u64,
    /// How far after the hold end a closing may start.
    pub post_window_ms: u64,
    /// Allowed overrun past the hold boundary in the other direction.
    pub grace_ms: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            pre_window_ms: 15_000,
            post_window_ms: 15_000,
            grace_ms: 2_000,
        }
    }
}

impl AuditConfig {
    fn opening_window(&self, hold: &HoldInterval) -> (u64, u64) {
        (
            hold.hold_start_ms.saturating_sub(self.pre_window_ms),
            hold.hold_start_ms.saturating_add(self.grace_ms),
        )
    }

    fn closing_window(&self, hold: &HoldInterval) -> (u64, u64) {
        (
            hold.hold_end_ms.saturating_sub(self.grace_ms),
            hold.hold_end_ms.saturating_add(self.post_window_ms),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingOpening,
    MissingClosing,
    UnregisteredHold,
}

/// What a violation points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Hold(HoldInterval),
    Turn(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub call_id: String,
    pub kind: ViolationKind,
    pub anchor: Anchor,
}

/// A canonically sorted list of violations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationLedger {
    pub violations: Vec<Violation>,
}

impl ViolationLedger {
    pub fn new(mut violations: Vec<Violation>) -> Self {
        violations.sort();
        ViolationLedger { violations }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn summary(&self) -> ViolationSummary {
        let mut summary = ViolationSummary::default();
        for v in &self.violations {
            summary.add(v.kind);
        }
        summary
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub missing_opening: usize,
    pub missing_closing: usize,
    pub unregistered_hold: usize,
}

impl ViolationSummary {
    fn add(&mut self, kind: ViolationKind) {
        match kind {
            ViolationKind::MissingOpening => self.missing_opening += 1,
            ViolationKind::MissingClosing => self.missing_closing += 1,
            ViolationKind::UnregisteredHold => self.unregistered_hold += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.missing_opening + self.missing_closing + self.unregistered_hold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldVerdict {
    pub hold: HoldInterval,
    pub opening_ok: bool,
    pub opening_turn: Option<u32>,
    pub closing_ok: bool,
    pub closing_turn: Option<u32>,
}

/// A script turn with no registered hold nearby.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnregisteredFlag {
    pub turn_index: u32,
    pub class: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub call_id: String,
    pub holds: Vec<HoldVerdict>,
    pub unregistered: Vec<UnregisteredFlag>,
}

impl ComplianceReport {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let violation = |kind, anchor| Violation {
            call_id: self.call_id.clone(),
            kind,
            anchor,
        };
        for verdict in &self.holds {
            if !verdict.opening_ok {
                out.push(violation(
                    ViolationKind::MissingOpening,
                    Anchor::Hold(verdict.hold),
                ));
            }
            if !verdict.closing_ok {
                out.push(violation(
                    ViolationKind::MissingClosing,
                    Anchor::Hold(verdict.hold),
                ));
            }
        }
        for flag in &self.unregistered {
            out.push(violation(
                ViolationKind::UnregisteredHold,
                Anchor::Turn(flag.turn_index),
            ));
        }
        out
    }

    pub fn summary(&self) -> ViolationSummary {
        let mut summary = ViolationSummary::default();
        for v in self.violations() {
            summary.add(v.kind);
        }
        summary
    }

    /// Human-readable summary of one call.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "call {}", self.call_id);
        let turn = |t: Option<u32>| t.map_or_else(|| "-".to_string(), |t| format!("turn {t}"));
        for v in &self.holds {
            let _ = writeln!(
                out,
                "  hold [{}, {}] ms: opening {} ({}), closing {} ({})",
                v.hold.hold_start_ms,
                v.hold.hold_end_ms,
                if v.opening_ok { "ok" } else { "MISSING" },
                turn(v.opening_turn),
                if v.closing_ok { "ok" } else { "MISSING" },
                turn(v.closing_turn),
            );
        }
        for flag in &self.unregistered {
            let _ = writeln!(
                out,
                "  turn {}: {} script without a registered hold",
                flag.turn_index,
                flag.class.name()
            );
        }
        if self.holds.is_empty() && self.unregistered.is_empty() {
            let _ = writeln!(out, "  no holds, no scripts");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusAudit {
    pub reports: Vec<ComplianceReport>,
    pub summary: ViolationSummary,
}

impl CorpusAudit {
    pub fn ledger(&self) -> ViolationLedger {
        ViolationLedger::new(self.reports.iter().flat_map(|r| r.violations()).collect())
    }

    /// Per-call summaries of the calls with holds or flagged turns, then totals.
    pub fn to_text(&self) -> String {
        let mut out: String = self
            .reports
            .iter()
            .filter(|r| !r.holds.is_empty() || !r.unregistered.is_empty())
            .map(|r| r.to_text())
            .collect();
        let quiet = self
            .reports
            .iter()
            .filter(|r| r.holds.is_empty() && r.unregistered.is_empty())
            .count();
        let _ = writeln!(out, "{quiet} calls without holds or scripts");
        let s = &self.summary;
        let _ = writeln!(
            out,
            "summary: {} missing opening, {} missing closing, {} unregistered",
            s.missing_opening, s.missing_closing, s.unregistered_hold
        );
        out
    }
}

/// Predicted label of every turn, keyed by call id, in turn order.
pub type PredictedLabels = BTreeMap<String, Vec<Label>>;

/// Gold labels in the shape of [`PredictedLabels`], for auditing the annotation itself.
pub fn gold_predictions(corpus: &Corpus) -> Result<PredictedLabels, AuditError> {
    corpus
        .calls
        .iter()
        .map(|call| {
            call.gold_labels()
                .map(|labels| (call.call_id.clone(), labels))
                .ok_or_else(|| AuditError::MissingPredictions(call.call_id.clone()))
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("call {call_id}: {labels} predicted labels for {turns} turns")]
    LabelCountMismatch {
        call_id: String,
        labels: usize,
        turns: usize,
    },
    #[error("no predictions for call {0}")]
    MissingPredictions(String),
}

/// Greedy one-to-one matching of holds (in time order) to candidate turns.
/// Each hold takes the earliest unmatched candidate whose time falls in its
/// window. Windows move monotonically with the holds, so this also maximizes
/// the number of matches.
fn match_holds(
    holds: &[HoldInterval],
    candidates: &[(u64, u32)],
    window: impl Fn(&HoldInterval) -> (u64, u64),
) -> (Vec<Option<u32>>, Vec<bool>) {
    let mut taken = vec![false; candidates.len()];
    let matches = holds
        .iter()
        .map(|hold| {
            let (lo, hi) = window(hold);
            let pick = candidates
                .iter()
                .enumerate()
                .find(|(i, (time, _))| !taken[*i] && (lo..=hi).contains(time))
                .map(|(i, _)| i)?;
            taken[pick] = true;
            Some(candidates[pick].1)
        })
        .collect();
    (matches, taken)
}

/// Audits one call given one predicted label per turn.
pub fn audit_call(
    call: &Call,
    predicted: &[Label],
    config: &AuditConfig,
) -> Result<ComplianceReport, AuditError> {
    if predicted.len() != call.turns.len() {
        return Err(AuditError::LabelCountMismatch {
            call_id: call.call_id.clone(),
            labels: predicted.len(),
            turns: call.turns.len(),
        });
    }

    // Openings are timed by their end, closings by their start.
    let mut openings: Vec<(u64, u32)> = Vec::new();
    let mut closings: Vec<(u64, u32)> = Vec::new();
    for (turn, label) in call.turns.iter().zip(predicted) {
        match label {
            Label::Opening => openings.push((turn.end_ms, turn.turn_index)),
            Label::Closing => closings.push((turn.start_ms, turn.turn_index)),
            Label::Irrelevant => {}
        }
    }
    openings.sort();
    closings.sort();

    let mut holds = call.holds.clone();
    holds.sort();
    let (opening_matches, opening_taken) =
        match_holds(&holds, &openings, |h| config.opening_window(h));
    let (closing_matches, closing_taken) =
        match_holds(&holds, &closings, |h| config.closing_window(h));

    let verdicts = holds
        .iter()
        .zip(opening_matches.iter().zip(&closing_matches))
        .map(|(&hold, (&opening_turn, &closing_turn))| HoldVerdict {
            hold,
            opening_ok: opening_turn.is_some(),
            opening_turn,
            closing_ok: closing_turn.is_some(),
            closing_turn,
        })
        .collect();

    let mut unregistered: Vec<UnregisteredFlag> = openings
        .iter()
        .zip(&opening_taken)
        .filter(|(_, &taken)| !taken)
        .map(|(&(_, turn_index), _)| UnregisteredFlag {
            turn_index,
            class: Label::Opening,
        })
        .chain(
            closings
                .iter()
                .zip(&closing_taken)
                .filter(|(_, &taken)| !taken)
                .map(|(&(_, turn_index), _)| UnregisteredFlag {
                    turn_index,
                    class: Label::Closing,
                }),
        )
        .collect();
    unregistered.sort_by_key(|f| f.turn_index);

    Ok(ComplianceReport {
        call_id: call.call_id.clone(),
        holds: verdicts,
        unregistered,
    })
}

/// Audits every call; reports come back sorted by call id.
pub fn audit_corpus(
    corpus: &Corpus,
    predictions: &PredictedLabels,
    config: &AuditConfig,
) -> Result<CorpusAudit, AuditError> {
    let mut reports = corpus
        .calls
        .par_iter()
        .map(|call| {
            let labels = predictions
                .get(&call.call_id)
                .ok_or_else(|| AuditError::MissingPredictions(call.call_id.clone()))?;
            audit_call(call, labels, config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    reports.sort_by(|a, b| a.call_id.cmp(&b.call_id));

    let mut summary = ViolationSummary::default();
    for report in &reports {
        let s = report.summary();
        summary.missing_opening += s.missing_opening;
        summary.missing_closing += s.missing_closing;
        summary.unregistered_hold += s.unregistered_hold;
    }
    Ok(CorpusAudit { reports, summary })
}
