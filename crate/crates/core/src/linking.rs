//! Mention to entity linking: condition the scorer on the mention, decode a
//! surface form inside the trie, and map it back to an entity id.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::decode::{constrained_beam_search, MentionScorer, Scorer, SearchConfig, SearchError};
use crate::ingest::Document;
use crate::kg::{EntityId, KnowledgeGraph};
use crate::scalar::Scalar;
use crate::similarity::best_synonym;
use crate::text::{normalize, Normalizer};
use crate::trie::{build_trie, TokenTrie, TrieError};

pub const DEFAULT_BEAM_WIDTH: usize = 5;
pub const DEFAULT_TOP_K: usize = 10;

/// Normalized surface form to the sorted ids of every entity carrying it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupTable {
    owners: BTreeMap<String, Vec<EntityId>>,
}

impl LookupTable {
    pub fn get(&self, surface: &str) -> Option<&[EntityId]> {
        self.owners.get(&normalize(surface)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    /// Surfaces owned by more than one entity.
    pub fn ambiguous_count(&self) -> usize {
        self.owners.values().filter(|v| v.len() > 1).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[EntityId])> {
        self.owners
            .iter()
            .map(|(s, ids)| (s.as_str(), ids.as_slice()))
    }
}

pub fn build_lookup(kg: &KnowledgeGraph) -> LookupTable {
    let mut owners: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    // entities come in id order, so each owner list is already sorted
    for e in kg.entities() {
        for s in e.synonyms() {
            owners.entry(normalize(s)).or_default().push(e.id().clone());
        }
    }
    for ids in owners.values_mut() {
        ids.dedup();
    }
    LookupTable { owners }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub surface: String,
    pub entity: String,
    pub score: f64,
}

/// Ranked candidates for one mention. Field order is the predictions-file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkedPrediction {
    pub doc_id: String,
    pub mention_index: usize,
    pub gold: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkConfig {
    pub search: SearchConfig,
    /// Candidates kept per mention.
    pub top_k: usize,
}

impl LinkConfig {
    /// Linking defaults for `trie`: scored `[EOS]` completion, mean length
    /// normalization, and a length cap equal to the trie depth.
    pub fn new(trie: &TokenTrie, beam_width: usize, top_k: usize) -> Self {
        Self {
            search: SearchConfig::for_linking(beam_width, trie.depth().max(1)),
            top_k,
        }
    }
}

/// Trie and lookup table built from one knowledge graph.
#[derive(Debug)]
pub struct Linker<'k> {
    kg: &'k KnowledgeGraph,
    trie: TokenTrie,
    table: LookupTable,
    normalizer: Normalizer,
}

impl<'k> Linker<'k> {
    pub fn new(kg: &'k KnowledgeGraph) -> Result<Self, TrieError> {
        Ok(Self {
            kg,
            trie: build_trie(kg)?,
            table: build_lookup(kg),
            normalizer: Normalizer::default(),
        })
    }

    pub fn trie(&self) -> &TokenTrie {
        &self.trie
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    /// Picks one owner for a decoded surface: the entity whose closest synonym
    /// is most similar to the mention, then the smallest id.
    pub fn resolve(&self, mention: &str, surface: &str) -> Option<&EntityId> {
        let owners = self.table.get(surface)?;
        if owners.len() == 1 {
            return owners.first();
        }
        owners
            .iter()
            .map(|id| {
                let e = self
                    .kg
                    .entity(id.as_str())
                    .expect("lookup built from this graph");
                (id, best_synonym(mention, e, &self.normalizer).1)
            })
            .min_by(|(ia, a), (ib, b)| b.total_cmp(a).then_with(|| ia.cmp(ib)))
            .map(|(id, _)| id)
    }

    /// Decodes with an already-conditioned scorer and returns up to `top_k`
    /// distinct entities in decoder rank order.
    pub fn link_mention<F, S>(
        &self,
        scorer: &S,
        mention: &str,
        cfg: &LinkConfig,
    ) -> Result<Vec<Candidate>, SearchError>
    where
        F: Scalar,
        S: Scorer<F> + ?Sized,
    {
        let hyps = constrained_beam_search(&self.trie, scorer, &cfg.search)?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for h in hyps {
            if out.len() == cfg.top_k {
                break;
            }
            let surface = h.surface();
            let entity = self
                .resolve(mention, &surface)
                .expect("decoded surfaces are registered");
            if seen.insert(entity.clone()) {
                out.push(Candidate {
                    surface,
                    entity: entity.to_string(),
                    score: h.score.as_f64(),
                });
            }
        }
        Ok(out)
    }

    /// Links every mention of every document, in (document, mention) order.
    /// Mentions that cannot be decoded get an empty candidate list.
    pub fn link_dataset<F, M>(
        &self,
        docs: &[Document],
        scorer: &M,
        cfg: &LinkConfig,
        threads: usize,
    ) -> Vec<LinkedPrediction>
    where
        F: Scalar,
        M: MentionScorer<F> + ?Sized,
    {
        use rayon::prelude::*;

        let jobs: Vec<(&Document, usize)> = docs
            .iter()
            .flat_map(|d| (0..d.mentions.len()).map(move |i| (d, i)))
            .collect();
        let run = |&(doc, i): &(&Document, usize)| {
            let m = &doc.mentions[i];
            let conditioned = scorer.condition(&m.surface);
            LinkedPrediction {
                doc_id: doc.doc_id.clone(),
                mention_index: i,
                gold: m.gold.clone(),
                candidates: self
                    .link_mention(&conditioned, &m.surface, cfg)
                    .unwrap_or_default(),
            }
        };
        if threads <= 1 {
            return jobs.iter().map(run).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            Err(_) => jobs.iter().map(run).collect(),
        }
    }
}
