//! In-memory knowledge graph: entities with synonyms and definitions, labelled
//! relations and directed triples, plus the outgoing-triple index and global
//! relation frequencies used by corpus synthesis.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::text::normalize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("invalid entity id {0:?}: must be non-empty and free of tabs and newlines")]
    InvalidEntityId(String),
    #[error("entity {id}: {what} must be a non-empty single-line string")]
    InvalidText { id: String, what: &'static str },
    #[error("invalid relation {0:?}: id and label must be non-empty single-line strings")]
    InvalidRelation(String),
    #[error("duplicate entity id {0}")]
    DuplicateEntityId(String),
    #[error("duplicate relation id {0}")]
    DuplicateRelationId(String),
    #[error("triple #{index} ({triple}) references missing entity {missing}")]
    DanglingEntity {
        index: usize,
        triple: String,
        missing: String,
    },
    #[error("triple #{index} ({triple}) references missing relation {missing}")]
    DanglingRelation {
        index: usize,
        triple: String,
        missing: String,
    },
}

fn single_line(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r'])
}

/// Concept identifier such as a UMLS CUI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, KgError> {
        let value = value.into();
        if single_line(&value) {
            Ok(Self(value))
        } else {
            Err(KgError::InvalidEntityId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A concept with its names. `synonyms()[0]` is always the preferred name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    id: EntityId,
    synonyms: Vec<String>,
    definition: Option<String>,
}

impl Entity {
    /// Builds an entity. Synonyms that collide with an earlier one after
    /// normalization (case-fold, whitespace collapse) are dropped; the first
    /// spelling wins.
    pub fn new<I, S>(
        id: EntityId,
        preferred_name: impl Into<String>,
        synonyms: I,
        definition: Option<String>,
    ) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let preferred_name = preferred_name.into();
        let bad = |what| KgError::InvalidText {
            id: id.to_string(),
            what,
        };
        if !single_line(&preferred_name) {
            return Err(bad("preferred name"));
        }
        if let Some(d) = &definition {
            if d.is_empty() || d.contains(['\n', '\r']) {
                return Err(bad("definition"));
            }
        }
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for syn in std::iter::once(preferred_name).chain(synonyms.into_iter().map(Into::into)) {
            if !single_line(&syn) {
                return Err(bad("synonym"));
            }
            if seen.insert(normalize(&syn)) {
                list.push(syn);
            }
        }
        Ok(Self {
            id,
            synonyms: list,
            definition,
        })
    }

    pub fn id(&self) -> &EntityId {
        &self.id
    }

    pub fn preferred_name(&self) -> &str {
        &self.synonyms[0]
    }

    pub fn synonyms(&self) -> &[String] {
        &self.synonyms
    }

    pub fn definition(&self) -> Option<&str> {
        self.definition.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    id: String,
    label: String,
}

impl Relation {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Result<Self, KgError> {
        let (id, label) = (id.into(), label.into());
        if single_line(&id) && single_line(&label) {
            Ok(Self { id, label })
        } else {
            Err(KgError::InvalidRelation(id))
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Directed edge `head --relation--> tail`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: impl Into<String>, tail: EntityId) -> Self {
        Self {
            head,
            relation: relation.into(),
            tail,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.head, self.relation, self.tail)
    }
}

/// Validated, immutable knowledge graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    // sorted by id
    entities: Vec<Entity>,
    entity_index: HashMap<EntityId, usize>,
    // sorted by id
    relations: Vec<Relation>,
    relation_index: HashMap<String, usize>,
    triples: Vec<Triple>,
    // per entity position: indices into `triples`, in input order
    outgoing: Vec<Vec<usize>>,
    // per relation position
    frequency: Vec<usize>,
}

/// Validates references and derives the outgoing index and relation frequencies.
pub fn build_kg(
    mut entities: Vec<Entity>,
    mut relations: Vec<Relation>,
    triples: Vec<Triple>,
) -> Result<KnowledgeGraph, KgError> {
    entities.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = entities.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(KgError::DuplicateEntityId(w[0].id.to_string()));
    }
    relations.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = relations.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(KgError::DuplicateRelationId(w[0].id.clone()));
    }
    let entity_index: HashMap<_, _> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i))
        .collect();
    let relation_index: HashMap<_, _> = relations
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), i))
        .collect();

    let mut outgoing = vec![Vec::new(); entities.len()];
    let mut frequency = vec![0usize; relations.len()];
    for (index, t) in triples.iter().enumerate() {
        let Some(&head) = entity_index.get(&t.head) else {
            return Err(KgError::DanglingEntity {
                index,
                triple: t.to_string(),
                missing: t.head.to_string(),
            });
        };
        if !entity_index.contains_key(&t.tail) {
            return Err(KgError::DanglingEntity {
                index,
                triple: t.to_string(),
                missing: t.tail.to_string(),
            });
        }
        let Some(&rel) = relation_index.get(&t.relation) else {
            return Err(KgError::DanglingRelation {
                index,
                triple: t.to_string(),
                missing: t.relation.clone(),
            });
        };
        outgoing[head].push(index);
        frequency[rel] += 1;
    }

    Ok(KnowledgeGraph {
        entities,
        entity_index,
        relations,
        relation_index,
        triples,
        outgoing,
        frequency,
    })
}

impl KnowledgeGraph {
    /// Entities in ascending id order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entity_index.get(id).map(|&i| &self.entities[i])
    }

    pub fn contains_entity(&self, id: &str) -> bool {
        self.entity_index.contains_key(id)
    }

    /// Relations in ascending id order.
    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, id: &str) -> Option<&Relation> {
        self.relation_index.get(id).map(|&i| &self.relations[i])
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Triples whose head is `id`, in input order.
    pub fn outgoing<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        let idx: &[usize] = match self.entity_index.get(id) {
            Some(&i) => &self.outgoing[i],
            None => &[],
        };
        idx.iter().map(move |&t| &self.triples[t])
    }

    pub fn out_degree(&self, id: &str) -> usize {
        self.entity_index
            .get(id)
            .map_or(0, |&i| self.outgoing[i].len())
    }

    /// Global count of triples carrying `relation`; 0 for unknown relations.
    pub fn relation_frequency(&self, relation: &str) -> usize {
        self.relation_index
            .get(relation)
            .map_or(0, |&i| self.frequency[i])
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Summary counts over a knowledge graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub concepts: usize,
    pub with_definitions: usize,
    pub with_multiple_synonyms: usize,
    /// Concepts with at least one outgoing triple.
    pub with_triples: usize,
    pub triples: usize,
    /// Mean outgoing triples over concepts that have any; 0 when none do.
    pub mean_triples: f64,
    pub relation_frequencies: BTreeMap<String, usize>,
}

pub fn kg_stats(kg: &KnowledgeGraph) -> StatsReport {
    let with_definitions = kg
        .entities
        .iter()
        .filter(|e| e.definition.is_some())
        .count();
    let with_multiple_synonyms = kg.entities.iter().filter(|e| e.synonyms.len() >= 2).count();
    let connected: Vec<usize> = kg
        .outgoing
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .collect();
    let mean_triples = if connected.is_empty() {
        0.0
    } else {
        connected.iter().sum::<usize>() as f64 / connected.len() as f64
    };
    StatsReport {
        concepts: kg.entities.len(),
        with_definitions,
        with_multiple_synonyms,
        with_triples: connected.len(),
        triples: kg.triples.len(),
        mean_triples,
        relation_frequencies: kg
            .relations
            .iter()
            .zip(&kg.frequency)
            .map(|(r, &f)| (r.id.clone(), f))
            .collect(),
    }
}
