//! Synthetic two-topic knowledge graph with a training anchor corpus and a
//! held-out corpus whose ambiguous mentions all take their minority sense.
//!
//! Cluster 0 is about sports, cluster 1 about finance. Six aliases are shared
//! by one entity of each cluster; in the training corpus every alias links
//! to its majority sense 70% of the time. Held-out documents pair two
//! unambiguous mentions from one cluster with three aliases whose majority
//! sense lies in the other cluster, so prior-only decoding gets 2 of 5 right.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{save_corpus, save_kg, Anchor, AnchorDocument, EntityId, EntityRecord, KnowledgeGraph};

pub const LEAGUE_ID: &str = "s_league";
pub const TEAM_ID: &str = "s_team";
pub const CITY_ID: &str = "f_city";

/// Entities per cluster.
const CLUSTER_SIZE: usize = 20;
/// Regular members (everything but the two hubs/trio members).
const REGULAR: usize = 18;
const AMBIGUOUS: usize = 6;
const MAJORITY_USES: usize = 14;
const MINORITY_USES: usize = 6;

const SYLLABLES: &[&str] = &[
    "ka", "vor", "tel", "mi", "dra", "sun", "bel", "ro", "quin", "zar", "lo", "fen", "gar", "ith",
    "pal", "nor", "ves", "tra", "mon", "hal", "dex", "ul", "cor", "sab",
];
const SPORT_WORDS: &[&str] = &[
    "football", "league", "match", "season", "stadium", "goal", "coach", "striker", "trophy",
    "fixture", "derby", "keeper",
];
const FINANCE_WORDS: &[&str] = &[
    "bank", "market", "stock", "share", "investor", "fund", "trade", "bond", "equity", "dividend",
    "broker", "capital",
];
const FILLER: &[&str] = &["and", "with", "near", "then", "also", "while", "after", "today"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_docs: usize,
    pub heldout_docs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            train_docs: 200,
            heldout_docs: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthFixture {
    pub kg: KnowledgeGraph,
    pub train: Vec<AnchorDocument>,
    pub heldout: Vec<AnchorDocument>,
    /// Cluster (0 sports, 1 finance) of every entity.
    pub clusters: BTreeMap<EntityId, usize>,
}

impl SynthFixture {
    /// Distinct entity pairs split into (same cluster, different cluster).
    pub fn cluster_pairs(&self) -> (Vec<(EntityId, EntityId)>, Vec<(EntityId, EntityId)>) {
        let ids: Vec<_> = self.clusters.iter().collect();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for (i, (a, ca)) in ids.iter().enumerate() {
            for (b, cb) in &ids[i + 1..] {
                let pair = ((*a).clone(), (*b).clone());
                if ca == cb {
                    intra.push(pair);
                } else {
                    inter.push(pair);
                }
            }
        }
        (intra, inter)
    }
}

fn id(s: String) -> EntityId {
    EntityId::new(s).expect("generated ids are valid")
}

fn member_id(cluster: usize, i: usize) -> EntityId {
    id(format!("{}{i:02}", ["s", "f"][cluster]))
}

fn unique_names(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut names = Vec::with_capacity(n);
    while names.len() < n {
        let parts = rng.gen_range(2..=3);
        let mut name: String = (0..parts).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        name[..1].make_ascii_uppercase();
        if seen.insert(name.clone()) {
            names.push(name);
        }
    }
    names
}

fn pick_words(rng: &mut ChaCha8Rng, words: &[&str], n: usize) -> String {
    words.choose_multiple(rng, n).copied().collect::<Vec<_>>().join(" ")
}

struct Layout {
    /// `(cluster, i)` → (id, canonical surface).
    members: Vec<Vec<(EntityId, String)>>,
    /// Alias shared by `s{k}` and `f{k}`.
    aliases: Vec<String>,
}

fn build_kg(rng: &mut ChaCha8Rng) -> Result<(KnowledgeGraph, Layout, BTreeMap<EntityId, usize>)> {
    // REGULAR bases per cluster, the first AMBIGUOUS shared across clusters.
    let names = unique_names(rng, 2 * REGULAR - AMBIGUOUS + 3);
    let aliases: Vec<String> = names[..AMBIGUOUS].to_vec();
    let mut rest = names[AMBIGUOUS..].iter().cloned();
    let mut members: Vec<Vec<(EntityId, String)>> = vec![Vec::new(), Vec::new()];
    for cluster in 0..2 {
        let suffix = ["United", "Holdings"][cluster];
        for i in 0..REGULAR {
            let base = if i < AMBIGUOUS {
                aliases[i].clone()
            } else {
                rest.next().expect("enough names")
            };
            members[cluster].push((member_id(cluster, i), format!("{base} {suffix}")));
        }
    }
    let league_name = format!("{} League", rest.next().unwrap());
    let team_name = format!("{} Rangers", rest.next().unwrap());
    let city_name = format!("Port {}", rest.next().unwrap());
    members[0].push((id(TEAM_ID.into()), team_name));
    members[0].push((id(LEAGUE_ID.into()), league_name));
    members[1].push((id(CITY_ID.into()), city_name.clone()));
    members[1].push((id("f_exchange".into()), format!("{city_name} Exchange")));

    let league = id(LEAGUE_ID.into());
    let team = id(TEAM_ID.into());
    let city = id(CITY_ID.into());
    let exchange = id("f_exchange".into());

    let mut records = Vec::new();
    let mut clusters = BTreeMap::new();
    for cluster in 0..2 {
        let vocab = [SPORT_WORDS, FINANCE_WORDS][cluster];
        for (i, (eid, surface)) in members[cluster].iter().enumerate() {
            clusters.insert(eid.clone(), cluster);
            let mut record = EntityRecord::new(eid.clone(), surface.clone());
            record.description = pick_words(rng, vocab, 5);
            if i < REGULAR {
                let next = members[cluster][(i + 1) % REGULAR].0.clone();
                if cluster == 0 {
                    record.types = ["organization", "sports_team"].map(String::from).into();
                    record.facts.push(("member_of".into(), league.clone()));
                    record.facts.push(("rival_of".into(), next));
                } else {
                    record.types = ["organization", "company"].map(String::from).into();
                    record.facts.push(("located_in".into(), city.clone()));
                    record.facts.push(("listed_on".into(), exchange.clone()));
                    record.facts.push(("partner_of".into(), next));
                }
            } else if *eid == team {
                record.types = ["organization", "sports_team"].map(String::from).into();
                record.facts.push(("member_of".into(), league.clone()));
                record.facts.push(("rival_of".into(), members[0][0].0.clone()));
            } else if *eid == league {
                record.types = ["organization", "sports_league"].map(String::from).into();
                record.facts.push(("has_member".into(), team.clone()));
                for (m, _) in &members[0][..4] {
                    record.facts.push(("has_member".into(), m.clone()));
                }
            } else if *eid == city {
                record.types = ["location", "city"].map(String::from).into();
                record.facts.push(("hosts".into(), exchange.clone()));
            } else {
                record.types = ["organization", "exchange"].map(String::from).into();
                record.facts.push(("located_in".into(), city.clone()));
            }
            records.push(record);
        }
    }

    // Incoming links: a few same-cluster sources per entity, plus a
    // popularity overlap between the league and the city that the team does
    // not share.
    let all_members: Vec<Vec<EntityId>> = members
        .iter()
        .map(|m| m.iter().map(|(e, _)| e.clone()).collect())
        .collect();
    let mut incoming: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for record in &records {
        let cluster = clusters[&record.id];
        let pool: Vec<&EntityId> = all_members[cluster].iter().filter(|e| **e != record.id).collect();
        let links = incoming.entry(record.id.clone()).or_default();
        links.extend(pool.choose_multiple(rng, 3).map(|e| (*e).clone()));
    }
    let shared: Vec<EntityId> = all_members[0][6..10]
        .iter()
        .chain(&all_members[1][6..10])
        .cloned()
        .collect();
    incoming.insert(league.clone(), shared.iter().cloned().chain([all_members[0][10].clone()]).collect());
    incoming.insert(city.clone(), shared.iter().cloned().chain([all_members[1][10].clone()]).collect());
    incoming.insert(
        team.clone(),
        [&all_members[0][11], &all_members[0][12], &all_members[0][13], &league]
            .into_iter()
            .cloned()
            .collect(),
    );

    let kg = KnowledgeGraph::from_records(records.into_iter().map(|r| {
        let links = incoming.remove(&r.id).unwrap_or_default();
        (r, links)
    }))?;
    Ok((kg, Layout { members, aliases }, clusters))
}

/// Lays anchors out as `surface filler surface ...`; returns text and
/// anchors with character offsets.
fn render(rng: &mut ChaCha8Rng, spans: &[(String, EntityId)], vocab: &[&str]) -> (String, Vec<Anchor>) {
    let mut text = String::new();
    let mut anchors = Vec::new();
    for (k, (surface, gold)) in spans.iter().enumerate() {
        if k > 0 {
            text.push(' ');
        }
        anchors.push(Anchor {
            offset: text.chars().count(),
            surface: surface.clone(),
            gold: Some(gold.clone()),
        });
        text.push_str(surface);
        text.push(' ');
        text.push_str(vocab.choose(rng).unwrap());
    }
    (text, anchors)
}

fn majority_cluster(alias: usize) -> usize {
    // Even aliases lean to finance, odd ones to sports.
    if alias % 2 == 0 {
        1
    } else {
        0
    }
}

fn training_corpus(rng: &mut ChaCha8Rng, layout: &Layout, n_docs: usize) -> Vec<AnchorDocument> {
    // Alias occurrences per cluster: (alias, gold sense).
    let mut uses: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for k in 0..AMBIGUOUS {
        let major = majority_cluster(k);
        uses[major].extend(std::iter::repeat(k).take(MAJORITY_USES));
        uses[1 - major].extend(std::iter::repeat(k).take(MINORITY_USES));
    }
    for u in &mut uses {
        u.shuffle(rng);
    }
    let mut cursor = [0usize; 2];

    (0..n_docs)
        .map(|d| {
            let cluster = d % 2;
            let vocab = [SPORT_WORDS, FINANCE_WORDS][cluster];
            let pool = &layout.members[cluster];
            let alias = if d / 2 % 10 < 6 {
                let next = uses[cluster].get(cursor[cluster]).copied();
                cursor[cluster] += 1;
                next
            } else {
                None
            };
            let mut picks: Vec<usize> = (0..pool.len()).filter(|&i| Some(i) != alias).collect();
            picks.shuffle(rng);
            let mut spans: Vec<(String, EntityId)> =
                picks[..4].iter().map(|&i| (pool[i].1.clone(), pool[i].0.clone())).collect();
            if let Some(k) = alias {
                let at = rng.gen_range(0..=spans.len());
                spans.insert(at, (layout.aliases[k].clone(), pool[k].0.clone()));
            }
            let (text, anchors) = render(rng, &spans, vocab);
            AnchorDocument {
                doc_id: format!("train{d:03}"),
                text,
                anchors,
            }
        })
        .collect()
}

fn heldout_corpus(rng: &mut ChaCha8Rng, layout: &Layout, n_docs: usize) -> Vec<AnchorDocument> {
    (0..n_docs)
        .map(|d| {
            let cluster = d % 2;
            let pool = &layout.members[cluster];
            let minority: Vec<usize> = (0..AMBIGUOUS).filter(|&k| majority_cluster(k) != cluster).collect();
            let mut seeds: Vec<usize> = (AMBIGUOUS..pool.len()).collect();
            seeds.shuffle(rng);
            let mut spans: Vec<(String, EntityId)> = seeds[..2]
                .iter()
                .map(|&i| (pool[i].1.clone(), pool[i].0.clone()))
                .chain(minority.iter().map(|&k| (layout.aliases[k].clone(), pool[k].0.clone())))
                .collect();
            spans.shuffle(rng);
            let (text, anchors) = render(rng, &spans, FILLER);
            AnchorDocument {
                doc_id: format!("test{d:03}"),
                text,
                anchors,
            }
        })
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthFixture> {
    if config.train_docs == 0 || config.heldout_docs == 0 {
        return Err(Error::InvalidConfig("document counts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (kg, layout, clusters) = build_kg(&mut rng)?;
    debug_assert_eq!(layout.members[0].len(), CLUSTER_SIZE);
    let train = training_corpus(&mut rng, &layout, config.train_docs);
    let heldout = heldout_corpus(&mut rng, &layout, config.heldout_docs);
    Ok(SynthFixture {
        kg,
        train,
        heldout,
        clusters,
    })
}

/// Writes `kg.jsonl`, `train.jsonl`, `heldout.jsonl` and `clusters.tsv`.
pub fn write_fixture(fixture: &SynthFixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_kg(&fixture.kg, dir.join("kg.jsonl"))?;
    save_corpus(&fixture.train, dir.join("train.jsonl"))?;
    save_corpus(&fixture.heldout, dir.join("heldout.jsonl"))?;
    let clusters: String = fixture
        .clusters
        .iter()
        .map(|(e, c)| format!("{e}\t{c}\n"))
        .collect();
    let path = dir.join("clusters.tsv");
    fs::write(&path, clusters).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::build_dictionary;

    #[test]
    fn shape_and_priors() {
        let fx = generate(&SynthConfig::default()).unwrap();
        assert_eq!(fx.kg.len(), 2 * CLUSTER_SIZE);
        assert_eq!(fx.train.len(), 200);
        assert_eq!(fx.heldout.len(), 20);
        let dict = build_dictionary(&fx.train);
        let ambiguous: Vec<&str> = dict.surfaces().filter(|s| dict.candidates(s).len() > 1).collect();
        assert_eq!(ambiguous.len(), AMBIGUOUS);
        for s in ambiguous {
            let top = dict.prior(s, &dict.candidates(s)[0].0);
            assert!((top - 0.7).abs() < 1e-12, "{s}: {top}");
        }
        for doc in fx.train.iter().chain(&fx.heldout) {
            let first = doc.anchors.first().unwrap().offset;
            let last = doc.anchors.last().unwrap().offset;
            assert!(last - first <= 150, "{}", doc.doc_id);
            for a in &doc.anchors {
                let at: String = doc.text.chars().skip(a.offset).take(a.surface.chars().count()).collect();
                assert_eq!(at, a.surface);
                assert!(!dict.candidates(&a.surface).is_empty(), "{}", a.surface);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.kg, b.kg);
        assert_eq!(a.train, b.train);
        assert_eq!(a.heldout, b.heldout);
    }
}
