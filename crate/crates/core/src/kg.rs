//! Knowledge graph, anchor corpus and mention dictionary.
//!
//! Entities live in a JSONL file (one record per line) that also carries the
//! incoming anchor-link set of every entity, so link-based relatedness works
//! without the corpus. Relation and type inventories are rebuilt on every
//! construction and are always sorted, which pins one-hot indices to the label
//! set rather than to file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque entity identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidEntityId(id));
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.0.is_empty() || self.0.chars().any(char::is_whitespace) {
            return Err(Error::InvalidEntityId(self.0.clone()));
        }
        Ok(())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for EntityId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub id: EntityId,
    pub surface: String,
    pub description: String,
    pub types: BTreeSet<String>,
    pub facts: Vec<(String, EntityId)>,
}

impl EntityRecord {
    pub fn new(id: EntityId, surface: impl Into<String>) -> Self {
        EntityRecord {
            id,
            surface: surface.into(),
            description: String::new(),
            types: BTreeSet::new(),
            facts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KgStats {
    pub entities: usize,
    pub relations: usize,
    pub types: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, EntityRecord>,
    incoming: BTreeMap<EntityId, BTreeSet<EntityId>>,
    relation_inventory: Vec<String>,
    type_inventory: Vec<String>,
}

/// On-disk shape of one `kg.jsonl` line.
#[derive(Debug, Serialize, Deserialize)]
struct KgLine {
    id: EntityId,
    surface: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    types: Vec<String>,
    #[serde(default)]
    facts: Vec<(String, EntityId)>,
    #[serde(default)]
    incoming: Vec<EntityId>,
}

impl KnowledgeGraph {
    /// Builds a validated graph from records and their incoming-link sets.
    ///
    /// Fails on duplicate ids, malformed ids, and any fact object or link
    /// source that does not name an entity of the graph.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (EntityRecord, BTreeSet<EntityId>)>,
    {
        let mut entities = BTreeMap::new();
        let mut incoming = BTreeMap::new();
        for (record, links) in records {
            record.id.validate()?;
            let id = record.id.clone();
            if entities.contains_key(&id) {
                return Err(Error::DuplicateEntity(id.0));
            }
            entities.insert(id.clone(), record);
            incoming.insert(id, links);
        }

        let mut dangling = BTreeSet::new();
        for record in entities.values() {
            for (_, object) in &record.facts {
                if !entities.contains_key(object) {
                    dangling.insert(object.0.clone());
                }
            }
        }
        for links in incoming.values() {
            for source in links {
                if !entities.contains_key(source) {
                    dangling.insert(source.0.clone());
                }
            }
        }
        if !dangling.is_empty() {
            return Err(Error::DanglingReference(dangling.into_iter().collect()));
        }

        Ok(Self::assemble(entities, incoming))
    }

    fn assemble(
        entities: BTreeMap<EntityId, EntityRecord>,
        incoming: BTreeMap<EntityId, BTreeSet<EntityId>>,
    ) -> Self {
        let mut relations = BTreeSet::new();
        let mut types = BTreeSet::new();
        for record in entities.values() {
            relations.extend(record.facts.iter().map(|(r, _)| r.clone()));
            types.extend(record.types.iter().cloned());
        }
        KnowledgeGraph {
            entities,
            incoming,
            relation_inventory: relations.into_iter().collect(),
            type_inventory: types.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn get(&self, id: &EntityId) -> Result<&EntityRecord> {
        self.entities
            .get(id)
            .ok_or_else(|| Error::UnknownEntity(id.0.clone()))
    }

    /// Entities in id order.
    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.keys()
    }

    pub fn relation_inventory(&self) -> &[String] {
        &self.relation_inventory
    }

    pub fn type_inventory(&self) -> &[String] {
        &self.type_inventory
    }

    pub fn relation_index(&self, label: &str) -> Option<usize> {
        self.relation_inventory
            .binary_search_by(|probe| probe.as_str().cmp(label))
            .ok()
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.type_inventory
            .binary_search_by(|probe| probe.as_str().cmp(label))
            .ok()
    }

    /// Sources of the anchor links pointing at `id`.
    pub fn incoming_links(&self, id: &EntityId) -> Result<&BTreeSet<EntityId>> {
        self.incoming
            .get(id)
            .ok_or_else(|| Error::UnknownEntity(id.0.clone()))
    }

    pub fn stats(&self) -> KgStats {
        KgStats {
            entities: self.entities.len(),
            relations: self.relation_inventory.len(),
            types: self.type_inventory.len(),
        }
    }

    pub fn read_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: KgLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            let record = EntityRecord {
                id: parsed.id,
                surface: parsed.surface,
                description: parsed.description,
                types: parsed.types.into_iter().collect(),
                facts: parsed.facts,
            };
            records.push((record, parsed.incoming.into_iter().collect()));
        }
        Self::from_records(records)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.entities.values() {
            let line = KgLine {
                id: record.id.clone(),
                surface: record.surface.clone(),
                description: record.description.clone(),
                types: record.types.iter().cloned().collect(),
                facts: record.facts.clone(),
                incoming: self.incoming[&record.id].iter().cloned().collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    KnowledgeGraph::read_jsonl(BufReader::new(file), path)
}

pub fn save_kg(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    kg.write_jsonl(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

/// Drops every entity with fewer than `min_incoming` incoming anchor links.
///
/// Removing an entity also removes the links it was the source of, which can
/// push a survivor below the threshold. Pruning repeats until no entity falls
/// under it, so every entity of the result satisfies the threshold within the
/// result and a second pass is a no-op.
pub fn prune_entities(kg: &KnowledgeGraph, min_incoming: usize) -> KnowledgeGraph {
    let mut alive: BTreeSet<&EntityId> = kg.entities.keys().collect();
    loop {
        let next: BTreeSet<&EntityId> = alive
            .iter()
            .copied()
            .filter(|id| {
                kg.incoming[*id]
                    .iter()
                    .filter(|src| alive.contains(src))
                    .count()
                    >= min_incoming
            })
            .collect();
        if next.len() == alive.len() {
            break;
        }
        alive = next;
    }

    let mut entities = BTreeMap::new();
    let mut incoming = BTreeMap::new();
    for id in &alive {
        let mut record = kg.entities[*id].clone();
        record.facts.retain(|(_, object)| alive.contains(object));
        entities.insert((*id).clone(), record);
        let links = kg.incoming[*id]
            .iter()
            .filter(|src| alive.contains(src))
            .cloned()
            .collect();
        incoming.insert((*id).clone(), links);
    }
    KnowledgeGraph::assemble(entities, incoming)
}

pub fn incoming_links<'a>(kg: &'a KnowledgeGraph, id: &EntityId) -> Result<&'a BTreeSet<EntityId>> {
    kg.incoming_links(id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    /// Character (not byte) offset of the anchor start in the document text.
    pub offset: usize,
    pub surface: String,
    /// `None` marks a NIL anchor.
    pub gold: Option<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorDocument {
    pub doc_id: String,
    pub text: String,
    pub anchors: Vec<Anchor>,
}

impl AnchorDocument {
    fn validate(&mut self) -> std::result::Result<(), String> {
        let len = self.text.chars().count();
        for anchor in &self.anchors {
            if anchor.offset > len {
                return Err(format!(
                    "anchor `{}` offset {} exceeds text length {}",
                    anchor.surface, anchor.offset, len
                ));
            }
            if anchor.surface.is_empty() {
                return Err("anchor with empty surface".to_string());
            }
            if let Some(gold) = &anchor.gold {
                gold.validate().map_err(|e| e.to_string())?;
            }
        }
        self.anchors.sort_by_key(|a| a.offset);
        Ok(())
    }

    /// Replaces gold entities missing from `kg` with NIL; returns how many
    /// anchors were demoted.
    pub fn resolve_against(&mut self, kg: &KnowledgeGraph) -> usize {
        let mut demoted = 0;
        for anchor in &mut self.anchors {
            if matches!(&anchor.gold, Some(g) if !kg.contains(g)) {
                anchor.gold = None;
                demoted += 1;
            }
        }
        demoted
    }
}

pub fn read_corpus<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<AnchorDocument>> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message,
        };
        let mut doc: AnchorDocument =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        doc.validate().map_err(parse_err)?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<AnchorDocument>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path)
}

pub fn save_corpus(docs: &[AnchorDocument], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for doc in docs {
            serde_json::to_writer(&mut *out, doc)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Surface form to candidate entities with anchor counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentionDictionary {
    entries: BTreeMap<String, Vec<(EntityId, u64)>>,
}

impl MentionDictionary {
    /// Builds from raw `(surface, entity, count)` triples. Zero counts are
    /// dropped and repeated pairs are summed.
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (String, EntityId, u64)>,
    {
        let mut acc: BTreeMap<String, BTreeMap<EntityId, u64>> = BTreeMap::new();
        for (surface, entity, count) in counts {
            if count == 0 {
                continue;
            }
            *acc.entry(surface).or_default().entry(entity).or_insert(0) += count;
        }
        let entries = acc
            .into_iter()
            .map(|(surface, per_entity)| {
                let mut list: Vec<(EntityId, u64)> = per_entity.into_iter().collect();
                list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                (surface, list)
            })
            .collect();
        MentionDictionary { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Candidates sorted by (count desc, id asc); empty for unknown surfaces.
    pub fn candidates(&self, surface: &str) -> &[(EntityId, u64)] {
        self.entries.get(surface).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self, surface: &str) -> u64 {
        self.candidates(surface).iter().map(|(_, c)| c).sum()
    }

    /// p(e|m); zero when the pair was never observed.
    pub fn prior(&self, surface: &str, entity: &EntityId) -> f64 {
        let total = self.total(surface);
        if total == 0 {
            return 0.0;
        }
        self.candidates(surface)
            .iter()
            .find(|(e, _)| e == entity)
            .map_or(0.0, |(_, c)| *c as f64 / total as f64)
    }

    pub fn read_tsv<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut counts = Vec::new();
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
                return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let entity = EntityId::new(fields[1]).map_err(|e| parse_err(e.to_string()))?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|e| parse_err(format!("bad count `{}`: {e}", fields[2])))?;
            counts.push((fields[0].to_string(), entity, count));
        }
        Ok(Self::from_counts(counts))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (surface, list) in &self.entries {
            if surface.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidInput(format!(
                    "surface {surface:?} cannot be written to TSV"
                )));
            }
            for (entity, count) in list {
                writeln!(out, "{surface}\t{entity}\t{count}")
                    .map_err(|e| Error::io("<dictionary>", e))?;
            }
        }
        out.flush().map_err(|e| Error::io("<dictionary>", e))
    }
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<MentionDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    MentionDictionary::read_tsv(BufReader::new(file), path)
}

pub fn save_dictionary(dict: &MentionDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    dict.write_tsv(BufWriter::new(file))
}

/// Counts anchor surfaces per gold entity; NIL anchors are skipped.
pub fn build_dictionary(corpus: &[AnchorDocument]) -> MentionDictionary {
    build_dictionary_filtered(corpus, |_| true)
}

/// Like [`build_dictionary`], additionally skipping anchors whose gold entity
/// fails `keep` (e.g. entities removed by pruning).
pub fn build_dictionary_filtered<F>(corpus: &[AnchorDocument], keep: F) -> MentionDictionary
where
    F: Fn(&EntityId) -> bool,
{
    MentionDictionary::from_counts(corpus.iter().flat_map(|doc| {
        doc.anchors.iter().filter_map(|a| {
            a.gold
                .as_ref()
                .filter(|g| keep(g))
                .map(|g| (a.surface.clone(), g.clone(), 1))
        })
    }))
}
