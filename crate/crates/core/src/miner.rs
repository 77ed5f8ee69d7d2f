//! Mining of softmax training groups from anchor co-occurrence and KG facts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{AnchorDocument, EntityId, KnowledgeGraph, MentionDictionary};

/// One softmax group by entity id: anchor, its related entity, and sampled
/// unrelated candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub anchor: EntityId,
    pub positive: EntityId,
    pub negatives: Vec<EntityId>,
}

impl TrainingPair {
    pub fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(Error::InvalidInput(format!(
                "group ({}, {}) has no negatives",
                self.anchor, self.positive
            )));
        }
        if self.negatives.contains(&self.positive) {
            return Err(Error::InvalidInput(format!(
                "group ({}, {}) lists its positive as a negative",
                self.anchor, self.positive
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinerConfig {
    /// Maximum distance in characters between anchor start offsets.
    pub delta: usize,
    pub n_negatives: usize,
    pub seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            delta: 150,
            n_negatives: 5,
            seed: 0,
        }
    }
}

/// Stream offset separating KG-fact sampling from per-document sampling.
const KG_STREAM_BASE: u64 = 1 << 40;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn mine_document(
    doc: &AnchorDocument,
    dictionary: &MentionDictionary,
    config: &MinerConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<TrainingPair> {
    let mut out = Vec::new();
    for (i, ti) in doc.anchors.iter().enumerate() {
        let Some(ei) = &ti.gold else { continue };
        for (j, tj) in doc.anchors.iter().enumerate() {
            if i == j || ti.offset.abs_diff(tj.offset) > config.delta {
                continue;
            }
            let Some(ej) = &tj.gold else { continue };
            if ei == ej {
                continue;
            }
            let pool: Vec<&EntityId> = dictionary
                .candidates(&tj.surface)
                .iter()
                .map(|(e, _)| e)
                .filter(|e| *e != ej)
                .collect();
            if pool.is_empty() {
                continue;
            }
            let take = config.n_negatives.min(pool.len());
            if take == 0 {
                continue;
            }
            let negatives = sample(rng, pool.len(), take)
                .into_iter()
                .map(|k| pool[k].clone())
                .collect();
            out.push(TrainingPair {
                anchor: ei.clone(),
                positive: ej.clone(),
                negatives,
            });
        }
    }
    out
}

/// Positive groups for every ordered pair of gold anchors within `delta`
/// characters of each other in one document. Negatives are drawn uniformly
/// without replacement from the other dictionary candidates of the second
/// anchor's surface; groups with no such candidate are dropped, as are pairs
/// of two anchors to the same entity.
pub fn mine_pairs(
    corpus: &[AnchorDocument],
    dictionary: &MentionDictionary,
    config: &MinerConfig,
) -> Vec<TrainingPair> {
    corpus
        .par_iter()
        .enumerate()
        .map(|(idx, doc)| {
            let mut rng = stream_rng(config.seed, idx as u64);
            mine_document(doc, dictionary, config, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Both directions of every KG fact as positive groups, with negatives drawn
/// uniformly from all other entities.
pub fn mine_kg_pairs(kg: &KnowledgeGraph, n_negatives: usize, seed: u64) -> Vec<TrainingPair> {
    let ids: Vec<&EntityId> = kg.ids().collect();
    let records: Vec<_> = kg.entities().collect();
    records
        .par_iter()
        .enumerate()
        .map(|(idx, record)| {
            let mut rng = stream_rng(seed, KG_STREAM_BASE + idx as u64);
            let mut out = Vec::new();
            for (_, object) in &record.facts {
                if *object == record.id {
                    continue;
                }
                for (anchor, positive) in [(&record.id, object), (object, &record.id)] {
                    let pool: Vec<&EntityId> = ids
                        .iter()
                        .copied()
                        .filter(|e| *e != anchor && *e != positive)
                        .collect();
                    let take = n_negatives.min(pool.len());
                    if take == 0 {
                        continue;
                    }
                    let negatives = sample(&mut rng, pool.len(), take)
                        .into_iter()
                        .map(|k| pool[k].clone())
                        .collect();
                    out.push(TrainingPair {
                        anchor: anchor.clone(),
                        positive: positive.clone(),
                        negatives,
                    });
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn save_pairs(pairs: &[TrainingPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for pair in pairs {
            serde_json::to_writer(&mut *out, pair)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let pair: TrainingPair =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        pair.validate().map_err(|e| parse_err(e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{build_dictionary, Anchor};

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn doc(anchors: &[(usize, &str, &str)]) -> AnchorDocument {
        AnchorDocument {
            doc_id: "d".into(),
            text: "x".repeat(1000),
            anchors: anchors
                .iter()
                .map(|(o, s, g)| Anchor {
                    offset: *o,
                    surface: s.to_string(),
                    gold: Some(id(g)),
                })
                .collect(),
        }
    }

    /// Dictionary where `ambig` has seven candidates and `other` has two.
    fn dictionary() -> MentionDictionary {
        let mut counts = vec![
            ("other".to_string(), id("o1"), 3),
            ("other".to_string(), id("o2"), 1),
        ];
        for k in 0..7 {
            counts.push(("ambig".to_string(), id(&format!("a{k}")), 1 + k));
        }
        MentionDictionary::from_counts(counts)
    }

    #[test]
    fn window_rule() {
        let dict = dictionary();
        let cfg = MinerConfig::default();
        let near = mine_pairs(&[doc(&[(0, "other", "o1"), (100, "ambig", "a0")])], &dict, &cfg);
        assert_eq!(near.len(), 2);
        let far = mine_pairs(&[doc(&[(0, "other", "o1"), (200, "ambig", "a0")])], &dict, &cfg);
        assert!(far.is_empty());
        let edge = mine_pairs(&[doc(&[(0, "other", "o1"), (150, "ambig", "a0")])], &dict, &cfg);
        assert_eq!(edge.len(), 2);
    }

    #[test]
    fn five_negatives_from_seven_candidates() {
        let dict = dictionary();
        let pairs = mine_pairs(
            &[doc(&[(0, "other", "o1"), (40, "ambig", "a3")])],
            &dict,
            &MinerConfig::default(),
        );
        let to_ambig = pairs.iter().find(|p| p.positive == id("a3")).unwrap();
        assert_eq!(to_ambig.negatives.len(), 5);
        assert!(!to_ambig.negatives.contains(&id("a3")));
        let to_other = pairs.iter().find(|p| p.positive == id("o1")).unwrap();
        assert_eq!(to_other.negatives, vec![id("o2")]);
    }

    #[test]
    fn unambiguous_target_is_dropped() {
        let corpus = vec![doc(&[(0, "solo", "s"), (10, "ambig", "a1")])];
        let mut dict_counts: Vec<_> = vec![("solo".to_string(), id("s"), 1)];
        dict_counts.push(("ambig".to_string(), id("a1"), 1));
        dict_counts.push(("ambig".to_string(), id("a2"), 1));
        let dict = MentionDictionary::from_counts(dict_counts);
        let pairs = mine_pairs(&corpus, &dict, &MinerConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].anchor, id("s"));
    }

    #[test]
    fn deterministic_given_seed() {
        let corpus = vec![
            doc(&[(0, "other", "o1"), (30, "ambig", "a3"), (60, "ambig", "a5")]),
            doc(&[(0, "ambig", "a6"), (90, "other", "o2")]),
        ];
        let dict = build_dictionary(&corpus);
        let full = dictionary();
        let cfg = MinerConfig {
            seed: 17,
            ..MinerConfig::default()
        };
        assert_eq!(mine_pairs(&corpus, &full, &cfg), mine_pairs(&corpus, &full, &cfg));
        assert!(!dict.is_empty());
        assert!(mine_pairs(&[], &full, &cfg).is_empty());
    }

    #[test]
    fn kg_pairs_both_directions() {
        use crate::kg::EntityRecord;
        use std::collections::BTreeSet;
        let mut a = EntityRecord::new(id("a"), "A");
        a.facts.push(("r".into(), id("b")));
        let records = [a, EntityRecord::new(id("b"), "B"), EntityRecord::new(id("c"), "C")];
        let kg = KnowledgeGraph::from_records(records.into_iter().map(|r| (r, BTreeSet::new())))
            .unwrap();
        let pairs = mine_kg_pairs(&kg, 5, 1);
        assert_eq!(pairs.len(), 2);
        assert_eq!((&pairs[0].anchor, &pairs[0].positive), (&id("a"), &id("b")));
        assert_eq!((&pairs[1].anchor, &pairs[1].positive), (&id("b"), &id("a")));
        for p in &pairs {
            assert_eq!(p.negatives, vec![id("c")]);
        }
    }

    #[test]
    fn validation_rules() {
        let bad = TrainingPair {
            anchor: id("a"),
            positive: id("b"),
            negatives: vec![id("b")],
        };
        assert!(bad.validate().is_err());
        let empty = TrainingPair {
            negatives: vec![],
            ..bad
        };
        assert!(empty.validate().is_err());
    }
}
