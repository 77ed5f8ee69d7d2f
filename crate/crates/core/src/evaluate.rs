//! Ranking (nDCG, MAP) and disambiguation (P@1) metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disambiguator::LinkRecord;
use crate::error::{Error, Result};
use crate::kg::{AnchorDocument, EntityId};
use crate::relatedness::Relatedness;

/// Candidates of one query in ranked order with their graded gains.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn new(query: impl Into<String>, items: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (item, gain) in &items {
            if !seen.insert(item.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate candidate `{item}`")));
            }
            if !(*gain >= 0.0) || !gain.is_finite() {
                return Err(Error::InvalidInput(format!("gain of `{item}` must be >= 0")));
            }
        }
        Ok(RankedList {
            query: query.into(),
            items,
        })
    }

    /// Gains in ranked order.
    pub fn gains(&self) -> Vec<f64> {
        self.items.iter().map(|(_, g)| *g).collect()
    }
}

fn dcg(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(p, g)| (2f64.powf(*g) - 1.0) / ((p + 2) as f64).log2())
        .sum()
}

/// Exponential-gain nDCG with a `log2(p + 1)` discount; 0 when no item has
/// positive gain.
pub fn ndcg_at_k(list: &RankedList, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let gains = list.gains();
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&gains, k) / idcg)
}

/// Average precision with `gain > 0` as relevant.
pub fn average_precision(list: &RankedList) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, (_, gain)) in list.items.iter().enumerate() {
        if *gain > 0.0 {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(lists: &[RankedList]) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    Ok(lists.iter().map(average_precision).sum::<f64>() / lists.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Over all non-NIL mentions.
    Micro,
    /// Mean of per-document precision.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionKey {
    pub doc_id: String,
    pub offset: usize,
}

/// Precision of the top decision over non-NIL gold mentions. Mentions absent
/// from `decisions` count as wrong; documents without non-NIL mentions are
/// left out of the macro mean.
pub fn precision_at_1(
    decisions: &BTreeMap<MentionKey, Option<EntityId>>,
    gold: &[(MentionKey, Option<EntityId>)],
    mode: Averaging,
) -> Result<f64> {
    let mut per_doc: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (key, truth) in gold {
        let Some(truth) = truth else { continue };
        let entry = per_doc.entry(key.doc_id.as_str()).or_default();
        entry.1 += 1;
        if matches!(decisions.get(key), Some(Some(chosen)) if chosen == truth) {
            entry.0 += 1;
        }
    }
    if per_doc.is_empty() {
        return Err(Error::InvalidInput("no non-NIL gold mentions".into()));
    }
    Ok(match mode {
        Averaging::Micro => {
            let (correct, total) = per_doc
                .values()
                .fold((0, 0), |(c, t), (dc, dt)| (c + dc, t + dt));
            correct as f64 / total as f64
        }
        Averaging::Macro => {
            per_doc
                .values()
                .map(|(c, t)| *c as f64 / *t as f64)
                .sum::<f64>()
                / per_doc.len() as f64
        }
    })
}

pub fn gold_mentions(corpus: &[AnchorDocument]) -> Vec<(MentionKey, Option<EntityId>)> {
    corpus
        .iter()
        .flat_map(|doc| {
            doc.anchors.iter().map(|a| {
                (
                    MentionKey {
                        doc_id: doc.doc_id.clone(),
                        offset: a.offset,
                    },
                    a.gold.clone(),
                )
            })
        })
        .collect()
}

pub fn decisions_of(links: &[LinkRecord]) -> BTreeMap<MentionKey, Option<EntityId>> {
    links
        .iter()
        .map(|l| {
            (
                MentionKey {
                    doc_id: l.doc_id.clone(),
                    offset: l.offset,
                },
                l.chosen.clone(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationReport {
    pub documents: usize,
    pub mentions: usize,
    pub non_nil_mentions: usize,
    pub micro_p_at_1: f64,
    pub macro_p_at_1: f64,
}

pub fn disambiguation_report(links: &[LinkRecord], corpus: &[AnchorDocument]) -> Result<DisambiguationReport> {
    let gold = gold_mentions(corpus);
    let decisions = decisions_of(links);
    Ok(DisambiguationReport {
        documents: corpus.len(),
        mentions: gold.len(),
        non_nil_mentions: gold.iter().filter(|(_, g)| g.is_some()).count(),
        micro_p_at_1: precision_at_1(&decisions, &gold, Averaging::Micro)?,
        macro_p_at_1: precision_at_1(&decisions, &gold, Averaging::Macro)?,
    })
}

/// Benchmark rows `query \t candidate \t gain` grouped by query, in file
/// order.
pub fn read_benchmark<R: BufRead>(reader: R, origin: &Path) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    let mut out: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
        }
        let gain: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad gain `{}`: {e}", fields[2])))?;
        out.entry(fields[0].to_string())
            .or_default()
            .push((fields[1].to_string(), gain as f64));
    }
    Ok(out)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_benchmark(BufReader::new(file), path)
}

/// Ranks benchmark candidates by relatedness to the query (score desc,
/// candidate id asc).
pub fn rank_by_relatedness(
    query: &str,
    candidates: &[(String, f64)],
    sr: &dyn Relatedness,
) -> Result<RankedList> {
    let q = EntityId::new(query)?;
    let mut scored = candidates
        .iter()
        .map(|(c, gain)| {
            let score = sr.relatedness(&q, &EntityId::new(c.as_str())?)?;
            Ok((score, c.clone(), *gain))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    RankedList::new(query, scored.into_iter().map(|(_, c, g)| (c, g)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessReport {
    pub queries: usize,
    pub ndcg_at_1: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub map: f64,
}

pub fn relatedness_report(
    benchmark: &BTreeMap<String, Vec<(String, f64)>>,
    sr: &dyn Relatedness,
) -> Result<RelatednessReport> {
    let lists = benchmark
        .iter()
        .map(|(q, c)| rank_by_relatedness(q, c, sr))
        .collect::<Result<Vec<_>>>()?;
    let mean_ndcg = |k| -> Result<f64> {
        let total: f64 = lists.iter().map(|l| ndcg_at_k(l, k)).sum::<Result<f64>>()?;
        Ok(total / lists.len().max(1) as f64)
    };
    Ok(RelatednessReport {
        queries: lists.len(),
        ndcg_at_1: mean_ndcg(1)?,
        ndcg_at_5: mean_ndcg(5)?,
        ndcg_at_10: mean_ndcg(10)?,
        map: mean_average_precision(&lists)?,
    })
}
