//! Pre-training corpus synthesis from a knowledge graph.
//!
//! Three linearizations are produced, all sharing the same encoder source:
//!
//! ```text
//! source       [BOS][ST]{a}[ET] is defined as {definition}[EOS]   ([BOS][ST]{a}[ET][EOS] without a definition)
//! synonym      [BOS] {a} is {b} [EOS]
//! triple_line  [BOS] {a} {label} {tail synonym} [EOS]
//! triple_all   [BOS] {a} {label_1} {tail_1} ... {label_n} {tail_n} [EOS]
//! ```
//!
//! Triples are drawn per concept by first choosing a relation group with
//! probability inversely proportional to the relation's global frequency, then
//! a triple uniformly inside the group, without replacement.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kg::{Entity, EntityId, KnowledgeGraph, Triple};
use crate::scalar::Scalar;
use crate::text::{find_reserved, BOS, EOS, ET, ST};

pub const DEFAULT_TRIPLES_PER_CONCEPT: usize = 8;
pub const DEFAULT_SYNONYM_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("entity {entity}: {synonym:?} is not one of its synonyms")]
    UnknownSynonym { entity: String, synonym: String },
    #[error("entity {entity}: text {text:?} contains reserved marker {token}")]
    ReservedToken {
        entity: String,
        text: String,
        token: &'static str,
    },
    #[error("entity {0} has no outgoing triples")]
    NoTriples(String),
    #[error("corpus sink: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Synonym,
    TripleLine,
    TripleAll,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Synonym => "synonym",
            SampleKind::TripleLine => "triple_line",
            SampleKind::TripleAll => "triple_all",
        }
    }
}

/// One (encoder source, decoder target) pair. Field order is the JSON-lines
/// record layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainingSample {
    pub source: String,
    pub target: String,
    pub kind: SampleKind,
    pub concept: EntityId,
}

/// Which samples `synthesize_corpus` emits per concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synonym,
    TripleLine,
    TripleAll,
    /// Synonym samples, then line-by-line triple samples.
    Combined,
    /// Synonym samples, then the all-in-one triple sample.
    CombinedAll,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "synonym" => Mode::Synonym,
            "triple_line" => Mode::TripleLine,
            "triple_all" => Mode::TripleAll,
            "combined" => Mode::Combined,
            "combined_all" => Mode::CombinedAll,
            other => return Err(format!("unknown synthesis mode {other:?}")),
        })
    }
}

/// Stable 64-bit mix of a seed and a key (FNV-1a followed by a splitmix64
/// finalizer). Used to give every concept its own seed independent of
/// iteration or thread order.
pub fn hash64(seed: u64, key: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().into_iter().chain(key.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_text(entity: &EntityId, text: &str) -> Result<(), SynthesisError> {
    match find_reserved(text) {
        Some(token) => Err(SynthesisError::ReservedToken {
            entity: entity.to_string(),
            text: text.to_owned(),
            token,
        }),
        None => Ok(()),
    }
}

/// Encoder input naming `entity` through `synonym`.
pub fn make_source(entity: &Entity, synonym: &str) -> Result<String, SynthesisError> {
    if !entity.synonyms().iter().any(|s| s == synonym) {
        return Err(SynthesisError::UnknownSynonym {
            entity: entity.id().to_string(),
            synonym: synonym.to_owned(),
        });
    }
    check_text(entity.id(), synonym)?;
    Ok(match entity.definition() {
        Some(def) => {
            check_text(entity.id(), def)?;
            format!("{BOS}{ST}{synonym}{ET} is defined as {def}{EOS}")
        }
        None => format!("{BOS}{ST}{synonym}{ET}{EOS}"),
    })
}

/// Up to `cap` ordered synonym pairs `(a, b)`, `a != b`, drawn uniformly without
/// replacement and emitted in pair-enumeration order.
pub fn synonym_samples(
    entity: &Entity,
    cap: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>, SynthesisError> {
    let syns = entity.synonyms();
    let k = syns.len();
    if k < 2 || cap == 0 {
        return Ok(Vec::new());
    }
    let pairs = k * (k - 1);
    let mut picked =
        rand::seq::index::sample(&mut rng_from(seed), pairs, cap.min(pairs)).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|p| {
            let a = p / (k - 1);
            let j = p % (k - 1);
            let b = if j < a { j } else { j + 1 };
            let (a, b) = (&syns[a], &syns[b]);
            Ok(TrainingSample {
                source: make_source(entity, a)?,
                target: format!("{BOS} {a} is {b} {EOS}"),
                kind: SampleKind::Synonym,
                concept: entity.id().clone(),
            })
        })
        .collect()
}

/// Sampling weight of each relation on `entity`'s outgoing triples:
/// `(1/f_r) / sum over the entity's relations of (1/f_r')`, with `f_r` the
/// global triple count of `r`.
pub fn relation_probabilities<F: Scalar>(
    kg: &KnowledgeGraph,
    entity: &EntityId,
) -> Result<BTreeMap<String, F>, SynthesisError> {
    let mut inverse: BTreeMap<String, F> = BTreeMap::new();
    for t in kg.outgoing(entity.as_str()) {
        inverse
            .entry(t.relation.clone())
            .or_insert_with(|| F::one() / F::of_usize(kg.relation_frequency(&t.relation)));
    }
    if inverse.is_empty() {
        return Err(SynthesisError::NoTriples(entity.to_string()));
    }
    let total: F = inverse.values().copied().sum();
    for p in inverse.values_mut() {
        *p = *p / total;
    }
    Ok(inverse)
}

fn draw_triples<'a, R: Rng>(
    kg: &'a KnowledgeGraph,
    entity: &EntityId,
    k: usize,
    rng: &mut R,
) -> Vec<&'a Triple> {
    let mut groups: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in kg.outgoing(entity.as_str()) {
        groups.entry(t.relation.as_str()).or_default().push(t);
    }
    if groups.is_empty() || k == 0 {
        return Vec::new();
    }
    let weights = relation_probabilities::<f64>(kg, entity).expect("entity has triples");
    let mut groups: Vec<Vec<&Triple>> = groups.into_values().collect();
    let mut dist = WeightedIndex::new(weights.values().copied()).expect("positive weights");
    let available: usize = groups.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(k.min(available));
    while out.len() < k && out.len() < available {
        let g = dist.sample(rng);
        let group = &mut groups[g];
        let i = rng.random_range(0..group.len());
        out.push(group.swap_remove(i));
        if group.is_empty() && out.len() < available {
            dist.update_weights(&[(g, &0.0)])
                .expect("another group is non-empty");
        }
    }
    out
}

/// Up to `k` distinct outgoing triples of `entity`, deterministic in `seed`.
pub fn sample_triples(kg: &KnowledgeGraph, entity: &EntityId, k: usize, seed: u64) -> Vec<Triple> {
    draw_triples(kg, entity, k, &mut rng_from(seed))
        .into_iter()
        .cloned()
        .collect()
}

/// Head surface and (label, tail surface) segments.
type Verbalized<'a> = (&'a str, Vec<(&'a str, &'a str)>);

/// Sampled triples with the head surface `a` and a tail surface per triple.
fn verbalize<'a>(
    kg: &'a KnowledgeGraph,
    entity: &'a Entity,
    k: usize,
    seed: u64,
) -> Result<Option<Verbalized<'a>>, SynthesisError> {
    let mut rng = rng_from(seed);
    let triples = draw_triples(kg, entity.id(), k, &mut rng);
    if triples.is_empty() {
        return Ok(None);
    }
    let head = entity
        .synonyms()
        .choose(&mut rng)
        .expect("entities have a name");
    let mut segments = Vec::with_capacity(triples.len());
    for t in triples {
        let label = kg.relation(&t.relation).expect("validated triple").label();
        let tail = kg.entity(t.tail.as_str()).expect("validated triple");
        let surface = tail
            .synonyms()
            .choose(&mut rng)
            .expect("entities have a name");
        check_text(entity.id(), label)?;
        check_text(tail.id(), surface)?;
        segments.push((label, surface.as_str()));
    }
    Ok(Some((head, segments)))
}

/// One line-by-line sample per sampled triple. All samples of a call share
/// one head surface, drawn uniformly from the head's synonyms.
pub fn triple_samples_line(
    kg: &KnowledgeGraph,
    entity: &Entity,
    k: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>, SynthesisError> {
    let Some((head, segments)) = verbalize(kg, entity, k, seed)? else {
        return Ok(Vec::new());
    };
    let source = make_source(entity, head)?;
    Ok(segments
        .into_iter()
        .map(|(label, tail)| TrainingSample {
            source: source.clone(),
            target: format!("{BOS} {head} {label} {tail} {EOS}"),
            kind: SampleKind::TripleLine,
            concept: entity.id().clone(),
        })
        .collect())
}

/// A single all-in-one sample over the sampled triples, segments sorted by
/// (label, tail surface).
pub fn triple_samples_all(
    kg: &KnowledgeGraph,
    entity: &Entity,
    k: usize,
    seed: u64,
) -> Result<Option<TrainingSample>, SynthesisError> {
    let Some((head, mut segments)) = verbalize(kg, entity, k, seed)? else {
        return Ok(None);
    };
    segments.sort_unstable();
    let mut target = format!("{BOS} {head}");
    for (label, tail) in segments {
        target.push(' ');
        target.push_str(label);
        target.push(' ');
        target.push_str(tail);
    }
    target.push(' ');
    target.push_str(EOS);
    Ok(Some(TrainingSample {
        source: make_source(entity, head)?,
        target,
        kind: SampleKind::TripleAll,
        concept: entity.id().clone(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub mode: Mode,
    /// Synonym pairs per concept.
    pub cap: usize,
    /// Triples per concept.
    pub k: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Combined,
            cap: DEFAULT_SYNONYM_CAP,
            k: DEFAULT_TRIPLES_PER_CONCEPT,
            seed: 42,
            threads: 1,
        }
    }
}

fn concept_samples(
    kg: &KnowledgeGraph,
    entity: &Entity,
    cfg: &SynthesisConfig,
) -> Result<Vec<TrainingSample>, SynthesisError> {
    let seed = hash64(cfg.seed, entity.id().as_str());
    let synonym_seed = hash64(seed, "synonym");
    let triple_seed = hash64(seed, "triple");
    let mut out = Vec::new();
    if matches!(cfg.mode, Mode::Synonym | Mode::Combined | Mode::CombinedAll) {
        out.extend(synonym_samples(entity, cfg.cap, synonym_seed)?);
    }
    if matches!(cfg.mode, Mode::TripleLine | Mode::Combined) {
        out.extend(triple_samples_line(kg, entity, cfg.k, triple_seed)?);
    }
    if matches!(cfg.mode, Mode::TripleAll | Mode::CombinedAll) {
        out.extend(triple_samples_all(kg, entity, cfg.k, triple_seed)?);
    }
    Ok(out)
}

const BATCH: usize = 2048;

/// Streams the corpus to `sink` concept by concept in ascending id order.
/// Concepts are processed on `cfg.threads` workers, but emission order and
/// content do not depend on the thread count. Returns the number of samples.
pub fn synthesize_corpus<S>(
    kg: &KnowledgeGraph,
    cfg: &SynthesisConfig,
    mut sink: S,
) -> Result<usize, SynthesisError>
where
    S: FnMut(&TrainingSample) -> io::Result<()>,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let mut count = 0;
    for chunk in kg.entities().chunks(BATCH) {
        let batch: Vec<_> = pool.install(|| {
            chunk
                .par_iter()
                .map(|e| concept_samples(kg, e, cfg))
                .collect()
        });
        for samples in batch {
            for s in samples? {
                sink(&s)?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, record: &T) -> io::Result<()> {
    serde_json::to_writer(&mut w, record)?;
    w.write_all(b"\n")
}
