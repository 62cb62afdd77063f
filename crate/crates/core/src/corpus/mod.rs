//! Transcript data model, ingestion, synthetic generation and fold splitting.

mod ingest;
mod split;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ingest::{
    ingest_holds, ingest_transcripts, read_holds, read_transcripts, validate_transcripts,
    write_holds, write_transcripts, ColumnMapping, Diagnostic,
};
pub use split::{stratified_split, FoldPlan, SplitMode};
pub use synthetic::{generate_synthetic, GeneratorProfile, ProfileSettings, JOINT_SCRIPT_COUNTS};

/// Number of classes in the labeling scheme.
pub const NUM_CLASSES: usize = 3;

/// Class of a dialogue turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    /// The turn contains no hold script.
    Irrelevant = 0,
    /// The turn contains a script putting the client on hold.
    Opening = 1,
    /// The turn contains a script returning to the client.
    Closing = 2,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Irrelevant, Label::Opening, Label::Closing];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    /// Opening or closing.
    pub fn is_script(self) -> bool {
        self != Label::Irrelevant
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Irrelevant => "irrelevant",
            Label::Opening => "opening",
            Label::Closing => "closing",
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Label::from_index(value as usize)
            .ok_or_else(|| format!("label {value} is not one of 0, 1, 2"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Audio channel a turn was recognized on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Agent,
    Client,
    #[default]
    Unknown,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Agent => "agent",
            Channel::Client => "client",
            Channel::Unknown => "unknown",
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "agent" => Ok(Channel::Agent),
            "client" => Ok(Channel::Client),
            "unknown" | "" => Ok(Channel::Unknown),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

/// One row of recognizer output: a continuous-speech interval with its text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseTurn {
    pub call_id: String,
    pub turn_index: u32,
    pub channel: Channel,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
    pub label: Option<Label>,
}

impl PhraseTurn {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// A hold registered in the telephony system, in milliseconds from call start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HoldInterval {
    pub hold_start_ms: u64,
    pub hold_end_ms: u64,
}

impl HoldInterval {
    pub fn new(hold_start_ms: u64, hold_end_ms: u64) -> Result<Self, CorpusError> {
        if hold_end_ms <= hold_start_ms {
            return Err(CorpusError::InvalidHold {
                start_ms: hold_start_ms,
                end_ms: hold_end_ms,
            });
        }
        Ok(HoldInterval {
            hold_start_ms,
            hold_end_ms,
        })
    }
}

/// A transcribed call: its turns ordered by `turn_index` plus registered holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Call {
    pub call_id: String,
    pub turns: Vec<PhraseTurn>,
    pub holds: Vec<HoldInterval>,
}

impl Call {
    /// Checks the per-call invariants: shared call id, unique turn indices,
    /// monotone start times, valid holds that do not overlap.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut previous: Option<&PhraseTurn> = None;
        for turn in &self.turns {
            if turn.call_id != self.call_id {
                return Err(CorpusError::ForeignTurn {
                    call_id: self.call_id.clone(),
                    turn_call_id: turn.call_id.clone(),
                });
            }
            if turn.end_ms < turn.start_ms {
                return Err(CorpusError::NegativeDuration {
                    call_id: self.call_id.clone(),
                    turn_index: turn.turn_index,
                });
            }
            if let Some(prev) = previous {
                if prev.turn_index == turn.turn_index {
                    return Err(CorpusError::DuplicateTurnIndex {
                        call_id: self.call_id.clone(),
                        turn_index: turn.turn_index,
                    });
                }
                if prev.turn_index > turn.turn_index {
                    return Err(CorpusError::UnorderedTurns(self.call_id.clone()));
                }
                if prev.start_ms > turn.start_ms {
                    return Err(CorpusError::NonMonotonicTimestamps(self.call_id.clone()));
                }
            }
            previous = Some(turn);
        }
        for pair in self.holds.windows(2) {
            if pair[1].hold_start_ms < pair[0].hold_end_ms {
                return Err(CorpusError::OverlappingHolds(self.call_id.clone()));
            }
        }
        for hold in &self.holds {
            HoldInterval::new(hold.hold_start_ms, hold.hold_end_ms)?;
        }
        Ok(())
    }

    pub fn find_turn(&self, turn_index: u32) -> Option<&PhraseTurn> {
        self.turns
            .binary_search_by_key(&turn_index, |t| t.turn_index)
            .ok()
            .map(|i| &self.turns[i])
    }

    /// Gold labels of every turn, or `None` if any turn is unlabeled.
    pub fn gold_labels(&self) -> Option<Vec<Label>> {
        self.turns.iter().map(|t| t.label).collect()
    }
}

/// Where a corpus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Synthetic,
}

/// A collection of calls with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub calls: Vec<Call>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Corpus {
    pub fn new(
        calls: Vec<Call>,
        provenance: Provenance,
        seed: Option<u64>,
    ) -> Result<Self, CorpusError> {
        let corpus = Corpus {
            calls,
            provenance,
            seed,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for call in &self.calls {
            if !seen.insert(call.call_id.as_str()) {
                return Err(CorpusError::DuplicateCallId(call.call_id.clone()));
            }
            call.validate()?;
        }
        Ok(())
    }

    /// All turns, call by call, in turn order. Fold plans index into this order.
    pub fn turns(&self) -> impl Iterator<Item = &PhraseTurn> {
        self.calls.iter().flat_map(|c| c.turns.iter())
    }

    pub fn num_turns(&self) -> usize {
        self.calls.iter().map(|c| c.turns.len()).sum()
    }

    pub fn call(&self, call_id: &str) -> Option<&Call> {
        self.calls.iter().find(|c| c.call_id == call_id)
    }

    /// Per-class counts of labeled turns.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for label in self.turns().filter_map(|t| t.label) {
            counts[label.index()] += 1;
        }
        counts
    }

    /// Gold labels of every turn in [`Corpus::turns`] order.
    pub fn gold_labels(&self) -> Result<Vec<Label>, CorpusError> {
        self.turns()
            .map(|t| {
                t.label.ok_or_else(|| CorpusError::Unlabeled {
                    call_id: t.call_id.clone(),
                    turn_index: t.turn_index,
                })
            })
            .collect()
    }
}

/// Key identifying a turn across files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TurnKey {
    pub call_id: String,
    pub turn_index: u32,
}

impl TurnKey {
    pub fn of(turn: &PhraseTurn) -> Self {
        TurnKey {
            call_id: turn.call_id.clone(),
            turn_index: turn.turn_index,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("call {0}: start times decrease along turn order")]
    NonMonotonicTimestamps(String),
    #[error("call {call_id}: turn index {turn_index} appears more than once")]
    DuplicateTurnIndex { call_id: String, turn_index: u32 },
    #[error("call {0}: turns not sorted by turn index")]
    UnorderedTurns(String),
    #[error("call {call_id}: turn {turn_index} ends before it starts")]
    NegativeDuration { call_id: String, turn_index: u32 },
    #[error("call {call_id} holds a turn of call {turn_call_id}")]
    ForeignTurn {
        call_id: String,
        turn_call_id: String,
    },
    #[error("call id {0} appears in more than one call")]
    DuplicateCallId(String),
    #[error("hold [{start_ms}, {end_ms}] must end after it starts")]
    InvalidHold { start_ms: u64, end_ms: u64 },
    #[error("call {0}: hold intervals overlap")]
    OverlappingHolds(String),
    #[error("hold refers to unknown call {0}")]
    UnknownCall(String),
    #[error("call {call_id}: turn {turn_index} has no label")]
    Unlabeled { call_id: String, turn_index: u32 },
    #[error("class {class} has {count} members, fewer than the {k} folds requested")]
    ClassTooSmall {
        class: Label,
        count: usize,
        k: usize,
    },
    #[error("fold {fold} has no member of class {class}")]
    FoldMissingClass { fold: usize, class: Label },
    #[error("invalid fold setup: {0}")]
    InvalidFolds(String),
    #[error("template pool for {0} is empty")]
    EmptyTemplatePool(&'static str),
    #[error("invalid generator profile: {0}")]
    InvalidProfile(String),
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

    fn turn(call: &str, idx: u32, start: u64, end: u64) -> PhraseTurn {
        PhraseTurn {
            call_id: call.into(),
            turn_index: idx,
            channel: Channel::Unknown,
            start_ms: start,
            end_ms: end,
            text: "hello".into(),
            label: Some(Label::Irrelevant),
        }
    }

    #[test]
    fn label_round_trips_through_index() {
        for label in Label::ALL {
            assert_eq!(Label::from_index(label.index()), Some(label));
        }
        assert_eq!(Label::from_index(3), None);
        assert!(Label::try_from(7u8).is_err());
    }

    #[test]
    fn call_rejects_decreasing_start_times() {
        let call = Call {
            call_id: "c".into(),
            turns: vec![turn("c", 0, 500, 900), turn("c", 1, 100, 200)],
            holds: vec![],
        };
        assert!(matches!(
            call.validate(),
            Err(CorpusError::NonMonotonicTimestamps(_))
        ));
    }

    #[test]
    fn call_rejects_overlapping_holds() {
        let call = Call {
            call_id: "c".into(),
            turns: vec![],
            holds: vec![
                HoldInterval::new(0, 100).unwrap(),
                HoldInterval::new(50, 150).unwrap(),
            ],
        };
        assert!(matches!(
            call.validate(),
            Err(CorpusError::OverlappingHolds(_))
        ));
    }

    #[test]
    fn corpus_rejects_duplicate_call_ids() {
        let call = Call {
            call_id: "c".into(),
            turns: vec![turn("c", 0, 0, 10)],
            holds: vec![],
        };
        let err = Corpus::new(vec![call.clone(), call], Provenance::Ingested, None).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateCallId(_)));
    }

    #[test]
    fn hold_must_have_positive_length() {
        assert!(HoldInterval::new(10, 10).is_err());
        assert!(HoldInterval::new(10, 11).is_ok());
    }
}
