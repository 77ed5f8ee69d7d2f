//! Letter-trigram word hashing and four-channel entity encoding.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};

const ALPHABET: usize = 38;
const BOUNDARY: u8 = b'#';
const OTHER: u8 = b'_';

/// Number of distinct letter trigrams over the 38-symbol alphabet.
pub const TRIGRAM_DIM: usize = ALPHABET * ALPHABET * ALPHABET;

fn symbol_code(symbol: u8) -> usize {
    match symbol {
        b'a'..=b'z' => (symbol - b'a') as usize,
        b'0'..=b'9' => 26 + (symbol - b'0') as usize,
        BOUNDARY => 36,
        _ => 37,
    }
}

fn code_symbol(code: usize) -> char {
    match code {
        0..=25 => (b'a' + code as u8) as char,
        26..=35 => (b'0' + (code - 26) as u8) as char,
        36 => BOUNDARY as char,
        _ => OTHER as char,
    }
}

/// Exact (collision-free) index of letter trigrams over
/// `a-z`, `0-9`, the `#` boundary mark and the `_` catch-all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrigramIndexer;

impl TrigramIndexer {
    pub fn dimension(&self) -> usize {
        TRIGRAM_DIM
    }

    /// Index of a three-symbol trigram, `None` if `trigram` is not three
    /// alphabet symbols.
    pub fn index(&self, trigram: &str) -> Option<usize> {
        let bytes = trigram.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(|b| is_alphabet_symbol(*b)) {
            return None;
        }
        Some(Self::index_bytes([bytes[0], bytes[1], bytes[2]]))
    }

    fn index_bytes(t: [u8; 3]) -> usize {
        symbol_code(t[0]) * ALPHABET * ALPHABET + symbol_code(t[1]) * ALPHABET + symbol_code(t[2])
    }

    pub fn trigram(&self, index: usize) -> Option<String> {
        if index >= TRIGRAM_DIM {
            return None;
        }
        let s0 = index / (ALPHABET * ALPHABET);
        let s1 = (index / ALPHABET) % ALPHABET;
        let s2 = index % ALPHABET;
        Some([code_symbol(s0), code_symbol(s1), code_symbol(s2)].iter().collect())
    }
}

fn is_alphabet_symbol(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == BOUNDARY || b == OTHER
}

/// `#word#` over the hashing alphabet.
fn padded_symbols(word: &str) -> Vec<u8> {
    let mut symbols = vec![BOUNDARY];
    for c in word.chars().flat_map(char::to_lowercase) {
        symbols.push(if c.is_ascii_lowercase() || c.is_ascii_digit() {
            c as u8
        } else {
            OTHER
        });
    }
    symbols.push(BOUNDARY);
    symbols
}

/// Letter trigrams of one word, e.g. `cat` gives `#ca`, `cat`, `at#`.
pub fn letter_trigrams(word: &str) -> Vec<String> {
    padded_symbols(word)
        .windows(3)
        .map(|w| String::from_utf8(w.to_vec()).expect("alphabet is ascii"))
        .collect()
}

fn trigram_indices(word: &str) -> Vec<usize> {
    padded_symbols(word)
        .windows(3)
        .map(|w| TrigramIndexer::index_bytes([w[0], w[1], w[2]]))
        .collect()
}

/// Lowercased tokens split on non-alphanumeric boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseVector {
    dimension: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dimension: usize) -> Self {
        SparseVector {
            dimension,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from (index, value) pairs; repeated indices are summed and
    /// zeros dropped.
    pub fn from_pairs<I>(dimension: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: i + 1,
                });
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Ok(SparseVector {
            dimension,
            indices,
            values,
        })
    }

    /// Dense input; zeros are skipped.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .unzip();
        SparseVector {
            dimension: dense.len(),
            indices,
            values,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit L2 norm; the zero vector is left alone.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }

    /// Appends `parts` end to end, shifting indices by the running offset.
    pub fn concat(parts: &[&SparseVector]) -> Self {
        let mut out = SparseVector::zeros(parts.iter().map(|p| p.dimension).sum());
        let mut offset = 0;
        for part in parts {
            out.indices.extend(part.indices.iter().map(|i| i + offset));
            out.values.extend_from_slice(&part.values);
            offset += part.dimension;
        }
        out
    }
}

/// Bag of letter trigrams over all tokens of `text`, L2-normalized.
pub fn hash_text(indexer: &TrigramIndexer, text: &str) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokenize(text) {
        for idx in trigram_indices(&token) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    SparseVector::from_pairs(indexer.dimension(), counts)
        .expect("trigram indices are in range")
        .normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Entities,
    Relations,
    Types,
    Description,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Entities,
        Channel::Relations,
        Channel::Types,
        Channel::Description,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Entities => "entities",
            Channel::Relations => "relations",
            Channel::Types => "types",
            Channel::Description => "description",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub entities: SparseVector,
    pub relations: SparseVector,
    pub types: SparseVector,
    pub description: SparseVector,
    pub concatenated: SparseVector,
}

impl FeatureVector {
    pub fn channel(&self, channel: Channel) -> &SparseVector {
        match channel {
            Channel::Entities => &self.entities,
            Channel::Relations => &self.relations,
            Channel::Types => &self.types,
            Channel::Description => &self.description,
        }
    }
}

/// Width of the concatenated feature vector for `kg`.
pub fn input_dimension(kg: &KnowledgeGraph) -> usize {
    2 * TRIGRAM_DIM + kg.relation_inventory().len() + kg.type_inventory().len()
}

fn multi_hot<I>(dimension: usize, indices: I) -> SparseVector
where
    I: IntoIterator<Item = usize>,
{
    let mut seen: Vec<usize> = indices.into_iter().collect();
    seen.sort_unstable();
    seen.dedup();
    SparseVector::from_pairs(dimension, seen.into_iter().map(|i| (i, 1.0)))
        .expect("inventory indices are in range")
        .normalized()
}

/// Four-channel encoding: neighbor surfaces, relation labels, type labels and
/// description. The entity's own surface form is not part of any channel.
pub fn encode_entity(
    kg: &KnowledgeGraph,
    indexer: &TrigramIndexer,
    id: &EntityId,
) -> Result<FeatureVector> {
    let record = kg.get(id)?;

    let mut neighbor_text = String::new();
    for (_, object) in &record.facts {
        neighbor_text.push_str(&kg.get(object)?.surface);
        neighbor_text.push(' ');
    }
    let entities = hash_text(indexer, &neighbor_text);

    let relations = multi_hot(
        kg.relation_inventory().len(),
        record
            .facts
            .iter()
            .map(|(r, _)| kg.relation_index(r).expect("inventory covers facts")),
    );
    let types = multi_hot(
        kg.type_inventory().len(),
        record
            .types
            .iter()
            .map(|t| kg.type_index(t).expect("inventory covers types")),
    );
    let description = hash_text(indexer, &record.description);
    let concatenated = SparseVector::concat(&[&entities, &relations, &types, &description]);

    Ok(FeatureVector {
        entities,
        relations,
        types,
        description,
        concatenated,
    })
}

#[derive(Debug, Serialize)]
pub struct ChannelDump<'a> {
    pub id: &'a str,
    pub channel: &'static str,
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

/// One JSON line per channel of `features`.
pub fn dump_features<W: std::io::Write>(
    out: &mut W,
    id: &EntityId,
    features: &FeatureVector,
) -> std::io::Result<()> {
    for channel in Channel::ALL {
        let v = features.channel(channel);
        let line = ChannelDump {
            id: id.as_str(),
            channel: channel.name(),
            indices: v.indices(),
            values: v.values(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
