use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ClassifierError, ProbTriple, SUM_TOLERANCE};
use crate::corpus::TurnKey;

/// Probabilities for turns, keyed by (call id, turn index).
pub type ExternalProba = BTreeMap<TurnKey, ProbTriple>;

/// Rows whose sum is off by at most this much are rescaled; others are rejected.
const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Reads a predictions CSV (`call_id,turn_index,p0,p1,p2`).
///
/// Each row must hold non-negative probabilities. A row whose sum is within
/// `1e-6` of one is rescaled to sum to one exactly (rows already within
/// `1e-9` pass through unchanged); any other row is rejected.
pub fn read_external_proba<R: Read>(reader: R) -> Result<ExternalProba, ClassifierError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| ClassifierError::MalformedRow {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let cols = [
        col("call_id")?,
        col("turn_index")?,
        col("p0")?,
        col("p1")?,
        col("p2")?,
    ];

    let mut out = ExternalProba::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: String| ClassifierError::MalformedRow { line, reason };
        let get = |i: usize| {
            record
                .get(cols[i])
                .ok_or_else(|| malformed("missing field".into()))
        };
        let call_id = get(0)?.to_string();
        let turn_index: u32 = get(1)?
            .trim()
            .parse()
            .map_err(|_| malformed("turn_index is not a non-negative integer".into()))?;
        let mut p = [0.0f64; 3];
        for (k, slot) in p.iter_mut().enumerate() {
            let raw = get(2 + k)?;
            *slot = raw
                .trim()
                .parse()
                .map_err(|_| malformed(format!("p{k} is not a number: {raw:?}")))?;
        }
        let violation = || {
            ClassifierError::ProbabilityInvariantViolation(format!(
                "line {line}: ({}, {}, {})",
                p[0], p[1], p[2]
            ))
        };
        if !p.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(violation());
        }
        let sum = p[0] + p[1] + p[2];
        let triple = if (sum - 1.0).abs() <= SUM_TOLERANCE {
            ProbTriple::new(p[0], p[1], p[2]).map_err(|_| violation())?
        } else if (sum - 1.0).abs() <= RENORMALIZE_TOLERANCE {
            ProbTriple::normalized(p[0], p[1], p[2]).map_err(|_| violation())?
        } else {
            return Err(violation());
        };
        let key = TurnKey {
            call_id,
            turn_index,
        };
        if out.contains_key(&key) {
            return Err(ClassifierError::DuplicateKey {
                call_id: key.call_id,
                turn_index: key.turn_index,
            });
        }
        out.insert(key, triple);
    }
    Ok(out)
}

pub fn load_external_proba(path: impl AsRef<Path>) -> Result<ExternalProba, ClassifierError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_external_proba(file)
}

/// Writes a predictions CSV in the format [`read_external_proba`] accepts.
pub fn write_predictions<'a, W: Write>(
    mut writer: W,
    rows: impl IntoIterator<Item = (&'a TurnKey, &'a ProbTriple)>,
    comment: Option<&str>,
) -> Result<(), ClassifierError> {
    let io = |source| ClassifierError::Io {
        path: "<predictions>".into(),
        source,
    };
    if let Some(c) = comment {
        writeln!(writer, "# {c}").map_err(io)?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["call_id", "turn_index", "p0", "p1", "p2"])?;
    for (key, p) in rows {
        wtr.write_record([
            key.call_id.clone(),
            key.turn_index.to_string(),
            p.p0().to_string(),
            p.p1().to_string(),
            p.p2().to_string(),
        ])?;
    }
    wtr.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "call_id,turn_index,p0,p1,p2\n";

    fn read(body: &str) -> Result<ExternalProba, ClassifierError> {
        read_external_proba(format!("{HEADER}{body}").as_bytes())
    }

    fn key(call: &str, turn: u32) -> TurnKey {
        TurnKey {
            call_id: call.into(),
            turn_index: turn,
        }
    }

    #[test]
    fn pass_through() {
        let map = read("c1,0,0.8,0.15,0.05\n").unwrap();
        assert_eq!(map[&key("c1", 0)].to_array(), [0.8, 0.15, 0.05]);
    }

    #[test]
    fn slightly_off_rows_are_renormalized() {
        let map = read("c1,0,0.8000003,0.15,0.05\n").unwrap();
        let p = map[&key("c1", 0)];
        assert!((p.to_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.p0() < 0.8000003);
    }

    #[test]
    fn far_off_rows_are_rejected() {
        assert!(matches!(
            read("c1,0,0.25,0.15,0.1\n"),
            Err(ClassifierError::ProbabilityInvariantViolation(_))
        ));
        assert!(matches!(
            read("c1,0,1.2,-0.1,-0.1\n"),
            Err(ClassifierError::ProbabilityInvariantViolation(_))
        ));
    }

    #[test]
    fn duplicates_and_garbage() {
        assert!(matches!(
            read("c1,0,1,0,0\nc1,0,0,1,0\n"),
            Err(ClassifierError::DuplicateKey { .. })
        ));
        assert!(matches!(
            read("c1,x,1,0,0\n"),
            Err(ClassifierError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            read("c1,0,one,0,0\n"),
            Err(ClassifierError::MalformedRow { .. })
        ));
    }

    #[test]
    fn written_predictions_read_back() {
        let mut map = ExternalProba::new();
        map.insert(key("a", 3), ProbTriple::from_logits([0.3, -1.0, 2.0]));
        map.insert(key("b", 0), ProbTriple::uniform());
        let mut buf = Vec::new();
        write_predictions(&mut buf, &map, Some("holdscan test")).unwrap();
        assert_eq!(read_external_proba(buf.as_slice()).unwrap(), map);
    }
}
