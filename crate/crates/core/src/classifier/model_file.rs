//! Plain-text model dump.
//!
//! ```text
//! holdscan-model 1
//! # holdscan 0.1.0
//! hash_dim 262144
//! char_ngrams 2 4
//! word_unigrams true
//! lowercase true
//! max_tokens 128
//! epoch 3
//! validation_auc 0.9987
//! train_loss 0.0123
//! bias 1.5 -0.7 -0.8
//! rows 2
//! 17 0.25 -0.125 -0.125
//! 4096 -0.5 1 -0.5
//! ```
//!
//! `rows` is followed by that many lines of `feature w0 w1 w2`, listing only
//! features with a nonzero weight, in ascending order. Floats use Rust's
//! shortest round-trip formatting, so reading and rewriting a file is lossless.
//! Lines starting with `#` are comments.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Checkpoint, ClassifierError, FeatureSpec, LinearModel};
use crate::corpus::NUM_CLASSES;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "holdscan-model";

pub fn write_model<W: Write>(
    cp: &Checkpoint,
    mut out: W,
    comment: Option<&str>,
) -> Result<(), ClassifierError> {
    let io = |source| ClassifierError::Io {
        path: "<model>".into(),
        source,
    };
    let spec = &cp.spec;
    let mut text = String::new();
    text.push_str(&format!("{MAGIC} {MODEL_FORMAT_VERSION}\n"));
    if let Some(c) = comment {
        text.push_str(&format!("# {c}\n"));
    }
    text.push_str(&format!("hash_dim {}\n", spec.hash_dim));
    text.push_str(&format!(
        "char_ngrams {} {}\n",
        spec.char_ngram_min, spec.char_ngram_max
    ));
    text.push_str(&format!("word_unigrams {}\n", spec.word_unigrams));
    text.push_str(&format!("lowercase {}\n", spec.lowercase));
    text.push_str(&format!("max_tokens {}\n", spec.max_tokens));
    text.push_str(&format!("epoch {}\n", cp.epoch));
    text.push_str(&format!("validation_auc {}\n", cp.validation_auc));
    text.push_str(&format!("train_loss {}\n", cp.train_loss));
    let b = cp.model.bias;
    text.push_str(&format!("bias {} {} {}\n", b[0], b[1], b[2]));
    let rows: Vec<usize> = (0..cp.model.dim)
        .filter(|&i| {
            cp.model.weights[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
                .iter()
                .any(|&w| w != 0.0)
        })
        .collect();
    text.push_str(&format!("rows {}\n", rows.len()));
    out.write_all(text.as_bytes()).map_err(io)?;
    for i in rows {
        let w = &cp.model.weights[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        writeln!(out, "{i} {} {} {}", w[0], w[1], w[2]).map_err(io)?;
    }
    out.flush().map_err(io)
}

struct Lines<R: BufRead> {
    inner: std::io::Lines<R>,
    number: u64,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<(u64, String), ClassifierError> {
        loop {
            self.number += 1;
            let line = self
                .inner
                .next()
                .ok_or_else(|| ClassifierError::ModelFormat("unexpected end of file".into()))?
                .map_err(|source| ClassifierError::Io {
                    path: "<model>".into(),
                    source,
                })?;
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Ok((self.number, trimmed.to_string()));
            }
        }
    }

    /// Reads `key v1 v2 ...` and returns the values.
    fn field(&mut self, key: &str) -> Result<Vec<String>, ClassifierError> {
        let (n, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(ClassifierError::ModelFormat(format!(
                "line {n}: expected `{key}`"
            )));
        }
        Ok(parts.map(String::from).collect())
    }
}

fn parse<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T, ClassifierError> {
    raw.parse()
        .map_err(|_| ClassifierError::ModelFormat(format!("bad {what}: {raw:?}")))
}

fn single<T: std::str::FromStr>(values: Vec<String>, what: &str) -> Result<T, ClassifierError> {
    match values.as_slice() {
        [v] => parse(v, what),
        _ => Err(ClassifierError::ModelFormat(format!(
            "`{what}` takes one value"
        ))),
    }
}

fn triple(values: &[String], what: &str) -> Result<[f64; NUM_CLASSES], ClassifierError> {
    match values {
        [a, b, c] => Ok([parse(a, what)?, parse(b, what)?, parse(c, what)?]),
        _ => Err(ClassifierError::ModelFormat(format!(
            "`{what}` takes three values"
        ))),
    }
}

pub fn read_model<R: Read>(input: R) -> Result<Checkpoint, ClassifierError> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        number: 0,
    };
    let version: u32 = single(lines.field(MAGIC)?, "format version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::ModelFormat(format!(
            "unsupported version {version}"
        )));
    }
    let hash_dim = single(lines.field("hash_dim")?, "hash_dim")?;
    let ngrams = lines.field("char_ngrams")?;
    if ngrams.len() != 2 {
        return Err(ClassifierError::ModelFormat(
            "`char_ngrams` takes two values".into(),
        ));
    }
    let spec = FeatureSpec {
        hash_dim,
        char_ngram_min: parse(&ngrams[0], "char_ngrams")?,
        char_ngram_max: parse(&ngrams[1], "char_ngrams")?,
        word_unigrams: single(lines.field("word_unigrams")?, "word_unigrams")?,
        lowercase: single(lines.field("lowercase")?, "lowercase")?,
        max_tokens: single(lines.field("max_tokens")?, "max_tokens")?,
    };
    spec.validate()
        .map_err(|e| ClassifierError::ModelFormat(e.to_string()))?;
    let epoch = single(lines.field("epoch")?, "epoch")?;
    let validation_auc = single(lines.field("validation_auc")?, "validation_auc")?;
    let train_loss = single(lines.field("train_loss")?, "train_loss")?;
    let bias = triple(&lines.field("bias")?, "bias")?;
    let rows: usize = single(lines.field("rows")?, "rows")?;

    let mut model = LinearModel::zeros(hash_dim);
    model.bias = bias;
    for _ in 0..rows {
        let (n, line) = lines.next_line()?;
        let parts: Vec<String> = line.split_whitespace().map(String::from).collect();
        let (index, weights) = parts
            .split_first()
            .ok_or_else(|| ClassifierError::ModelFormat(format!("line {n}: empty row")))?;
        let index: usize = parse(index, "feature index")?;
        if index >= hash_dim {
            return Err(ClassifierError::ModelFormat(format!(
                "line {n}: feature {index} out of range"
            )));
        }
        model.weights[index * NUM_CLASSES..(index + 1) * NUM_CLASSES]
            .copy_from_slice(&triple(weights, "weights")?);
    }
    Ok(Checkpoint {
        epoch,
        spec,
        model,
        validation_auc,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(weights: Vec<(usize, [f64; 3])>) -> Checkpoint {
        let spec = FeatureSpec {
            hash_dim: 1 << 10,
            ..FeatureSpec::default()
        };
        let mut model = LinearModel::zeros(spec.hash_dim);
        for (i, w) in weights {
            model.weights[i * 3..i * 3 + 3].copy_from_slice(&w);
        }
        model.bias = [0.1, -1e-7, 12345.678];
        Checkpoint {
            epoch: 4,
            spec,
            model,
            validation_auc: 0.987654321,
            train_loss: 0.1 + 0.2,
        }
    }

    #[test]
    fn bad_headers_are_rejected() {
        assert!(read_model("holdscan-model 2\n".as_bytes()).is_err());
        assert!(read_model("something else\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_model(&sample(vec![]), &mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("rows 0", "rows 1");
        assert!(read_model(text.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_read_is_lossless(rows in prop::collection::btree_map(0usize..1024, prop::array::uniform3(-1e6f64..1e6), 0..40)) {
            let cp = sample(rows.into_iter().collect());
            let mut first = Vec::new();
            write_model(&cp, &mut first, Some("test")).unwrap();
            let back = read_model(first.as_slice()).unwrap();
            prop_assert_eq!(&back, &cp);
            let mut second = Vec::new();
            write_model(&back, &mut second, Some("test")).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
