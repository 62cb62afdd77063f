use std::hash::Hasher;

use fnv::FnvHasher;

use super::FeatureSpec;

/// Sparse vector with sorted, distinct indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from possibly repeated (index, value) pairs, summing repeats.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            debug_assert!((i as usize) < dim);
            if indices.last() == Some(&i) {
                *values.last_mut().expect("parallel") += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        SparseVector {
            dim,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn l2_normalized(&self) -> SparseVector {
        let norm = self.norm();
        let mut out = self.clone();
        if norm > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}

fn bucket(kind: u8, gram: &str, mask: u64) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(kind);
    h.write(gram.as_bytes());
    (h.finish() & mask) as u32
}

/// Hashed counts of character n-grams (over the whole normalized text,
/// spaces included) and, optionally, word unigrams.
///
/// The text is split on whitespace, cut to `spec.max_tokens` tokens,
/// optionally lowercased and re-joined with single spaces before extraction.
pub fn featurize(text: &str, spec: &FeatureSpec) -> SparseVector {
    let mask = (spec.hash_dim - 1) as u64;
    let tokens: Vec<String> = text
        .split_whitespace()
        .take(spec.max_tokens)
        .map(|t| {
            if spec.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect();
    let joined = tokens.join(" ");
    let chars: Vec<(usize, char)> = joined.char_indices().collect();

    let mut pairs = Vec::new();
    for n in spec.char_ngram_min..=spec.char_ngram_max {
        if n > chars.len() {
            break;
        }
        for start in 0..=chars.len() - n {
            let from = chars[start].0;
            let to = chars.get(start + n).map_or(joined.len(), |c| c.0);
            pairs.push((bucket(b'c', &joined[from..to], mask), 1.0));
        }
    }
    if spec.word_unigrams {
        for token in &tokens {
            pairs.push((bucket(b'w', token, mask), 1.0));
        }
    }
    SparseVector::from_pairs(spec.hash_dim, pairs)
}
