use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Call, Channel, Corpus, CorpusError, HoldInterval, Label, PhraseTurn, Provenance};

/// Header names of the transcript columns. `channel` and `label` are optional
/// in the file; the rest are required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub call_id: String,
    pub turn_index: String,
    pub channel: String,
    pub start_ms: String,
    pub end_ms: String,
    pub text: String,
    pub label: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            call_id: "call_id".into(),
            turn_index: "turn_index".into(),
            channel: "channel".into(),
            start_ms: "start_ms".into(),
            end_ms: "end_ms".into(),
            text: "text".into(),
            label: "label".into(),
        }
    }
}

/// A located problem found while validating a transcript file.
#[derive(Debug)]
pub struct Diagnostic {
    pub line: Option<u64>,
    pub error: CorpusError,
}

impl Diagnostic {
    fn from_error(error: CorpusError) -> Self {
        let line = match &error {
            CorpusError::MalformedRow { line, .. } => Some(*line),
            _ => None,
        };
        Diagnostic { line, error }
    }
}

struct Columns {
    call_id: usize,
    turn_index: usize,
    channel: Option<usize>,
    start_ms: usize,
    end_ms: usize,
    text: usize,
    label: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Self, CorpusError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require =
            |name: &str| find(name).ok_or_else(|| CorpusError::MissingColumn(name.to_string()));
        Ok(Columns {
            call_id: require(&mapping.call_id)?,
            turn_index: require(&mapping.turn_index)?,
            channel: find(&mapping.channel),
            start_ms: require(&mapping.start_ms)?,
            end_ms: require(&mapping.end_ms)?,
            text: require(&mapping.text)?,
            label: find(&mapping.label),
        })
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader)
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &Columns,
    line: u64,
) -> Result<PhraseTurn, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRow { line, reason };
    let field = |idx: usize, name: &str| {
        record
            .get(idx)
            .ok_or_else(|| malformed(format!("missing field `{name}`")))
    };
    let number = |idx: usize, name: &str| -> Result<u64, CorpusError> {
        let raw = field(idx, name)?;
        raw.trim()
            .parse::<u64>()
            .map_err(|_| malformed(format!("`{name}` is not a non-negative integer: {raw:?}")))
    };

    let call_id = field(cols.call_id, "call_id")?.to_string();
    if call_id.is_empty() {
        return Err(malformed("empty call_id".into()));
    }
    let turn_index = u32::try_from(number(cols.turn_index, "turn_index")?)
        .map_err(|_| malformed("turn_index out of range".into()))?;
    let channel = match cols.channel {
        Some(idx) => field(idx, "channel")?
            .parse::<Channel>()
            .map_err(malformed)?,
        None => Channel::Unknown,
    };
    let start_ms = number(cols.start_ms, "start_ms")?;
    let end_ms = number(cols.end_ms, "end_ms")?;
    if end_ms < start_ms {
        return Err(malformed(format!(
            "end_ms {end_ms} is before start_ms {start_ms}"
        )));
    }
    let text = field(cols.text, "text")?.to_string();
    let label = match cols.label.map(|idx| field(idx, "label")).transpose()? {
        None => None,
        Some(raw) if raw.trim().is_empty() => None,
        Some(raw) => {
            let value: u8 = raw
                .trim()
                .parse()
                .map_err(|_| malformed(format!("label {raw:?} is not one of 0, 1, 2")))?;
            Some(Label::try_from(value).map_err(malformed)?)
        }
    };
    Ok(PhraseTurn {
        call_id,
        turn_index,
        channel,
        start_ms,
        end_ms,
        text,
        label,
    })
}

/// Parses every row, collecting all problems rather than stopping at the first.
fn parse_transcripts<R: Read>(reader: R, mapping: &ColumnMapping) -> (Vec<Call>, Vec<CorpusError>) {
    let mut rdr = csv_reader(reader);
    let mut errors = Vec::new();
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return (Vec::new(), vec![e.into()]),
    };
    let cols = match Columns::locate(&headers, mapping) {
        Ok(c) => c,
        Err(e) => return (Vec::new(), vec![e]),
    };

    let mut calls: Vec<Call> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(CorpusError::MalformedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, &cols, line) {
            Ok(turn) => {
                let slot = *by_id.entry(turn.call_id.clone()).or_insert_with(|| {
                    calls.push(Call {
                        call_id: turn.call_id.clone(),
                        turns: Vec::new(),
                        holds: Vec::new(),
                    });
                    calls.len() - 1
                });
                calls[slot].turns.push(turn);
            }
            Err(e) => errors.push(e),
        }
    }

    for call in &mut calls {
        call.turns.sort_by_key(|t| t.turn_index);
        if let Some(dup) = call
            .turns
            .windows(2)
            .find(|w| w[0].turn_index == w[1].turn_index)
        {
            errors.push(CorpusError::DuplicateTurnIndex {
                call_id: call.call_id.clone(),
                turn_index: dup[0].turn_index,
            });
        } else if call.turns.windows(2).any(|w| w[0].start_ms > w[1].start_ms) {
            errors.push(CorpusError::NonMonotonicTimestamps(call.call_id.clone()));
        }
    }
    (calls, errors)
}

/// Reads a transcript CSV into a corpus, failing on the first problem.
pub fn read_transcripts<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<Corpus, CorpusError> {
    let (calls, mut errors) = parse_transcripts(reader, mapping);
    if !errors.is_empty() {
        return Err(errors.swap_remove(0));
    }
    Corpus::new(calls, Provenance::Ingested, None)
}

pub fn ingest_transcripts(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
) -> Result<Corpus, CorpusError> {
    read_transcripts(open(path.as_ref())?, mapping)
}

/// Like [`read_transcripts`] but reports every problem found in the file.
pub fn validate_transcripts<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<Corpus, Vec<Diagnostic>> {
    let (calls, errors) = parse_transcripts(reader, mapping);
    if !errors.is_empty() {
        return Err(errors.into_iter().map(Diagnostic::from_error).collect());
    }
    Corpus::new(calls, Provenance::Ingested, None).map_err(|e| vec![Diagnostic::from_error(e)])
}

/// Writes the transcript CSV. Turns are written call by call in turn order,
/// so reading the output back yields an equal corpus (up to provenance).
pub fn write_transcripts<W: Write>(
    corpus: &Corpus,
    mut writer: W,
    comment: Option<&str>,
) -> Result<(), CorpusError> {
    if let Some(comment) = comment {
        writeln!(writer, "# {comment}").map_err(io_err("<output>"))?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "call_id",
        "turn_index",
        "channel",
        "start_ms",
        "end_ms",
        "text",
        "label",
    ])?;
    for turn in corpus.turns() {
        let label = turn
            .label
            .map(|l| l.index().to_string())
            .unwrap_or_default();
        wtr.write_record([
            turn.call_id.as_str(),
            &turn.turn_index.to_string(),
            turn.channel.as_str(),
            &turn.start_ms.to_string(),
            &turn.end_ms.to_string(),
            &turn.text,
            &label,
        ])?;
    }
    wtr.flush().map_err(io_err("<output>"))?;
    Ok(())
}

/// Reads a holds CSV (`call_id,hold_start_ms,hold_end_ms`) grouped by call,
/// each list sorted by start.
pub fn read_holds<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<HoldInterval>>, CorpusError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let (id_col, start_col, end_col) = (
        find("call_id")?,
        find("hold_start_ms")?,
        find("hold_end_ms")?,
    );

    let mut holds: BTreeMap<String, Vec<HoldInterval>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: String| CorpusError::MalformedRow { line, reason };
        let get = |idx: usize| {
            record
                .get(idx)
                .ok_or_else(|| malformed("missing field".into()))
        };
        let num = |idx: usize| -> Result<u64, CorpusError> {
            let raw = get(idx)?;
            raw.trim()
                .parse()
                .map_err(|_| malformed(format!("{raw:?} is not a non-negative integer")))
        };
        let hold = HoldInterval::new(num(start_col)?, num(end_col)?)
            .map_err(|e| malformed(e.to_string()))?;
        holds
            .entry(get(id_col)?.to_string())
            .or_default()
            .push(hold);
    }
    for list in holds.values_mut() {
        list.sort();
    }
    Ok(holds)
}

/// Attaches holds read from `path` to the calls of `corpus`.
pub fn ingest_holds(corpus: &mut Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let holds = read_holds(open(path.as_ref())?)?;
    attach_holds(corpus, holds)
}

pub(crate) fn attach_holds(
    corpus: &mut Corpus,
    holds: BTreeMap<String, Vec<HoldInterval>>,
) -> Result<(), CorpusError> {
    for (call_id, list) in holds {
        let call = corpus
            .calls
            .iter_mut()
            .find(|c| c.call_id == call_id)
            .ok_or_else(|| CorpusError::UnknownCall(call_id.clone()))?;
        call.holds = list;
        call.validate()?;
    }
    Ok(())
}

pub fn write_holds<W: Write>(
    corpus: &Corpus,
    mut writer: W,
    comment: Option<&str>,
) -> Result<(), CorpusError> {
    if let Some(comment) = comment {
        writeln!(writer, "# {comment}").map_err(io_err("<output>"))?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["call_id", "hold_start_ms", "hold_end_ms"])?;
    for call in &corpus.calls {
        for hold in &call.holds {
            wtr.write_record([
                call.call_id.as_str(),
                &hold.hold_start_ms.to_string(),
                &hold.hold_end_ms.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(io_err("<output>"))?;
    Ok(())
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(io_err(&path.display().to_string()))
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_string(),
        source,
    }
}
