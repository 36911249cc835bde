//! Knowledge-graph driven generative entity linking.
//!
//! The crate covers the whole pipeline around a generative linker:
//!
//! * [`ingest`] reads a TSV knowledge graph and JSON-lines mention datasets,
//! * [`synthesis`] linearizes synonyms and triples into a pre-training corpus,
//! * [`trie`] and [`decode`] restrict generation to registered surface forms,
//! * [`ngram`] provides a small trainable scorer standing in for the neural model,
//! * [`linking`] maps decoded surfaces back to entities and [`eval`] computes Recall@k.
//!
//! Scores are generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the usual `f64` instantiation.

pub mod decode;
pub mod eval;
pub mod ingest;
pub mod kg;
pub mod linking;
pub mod ngram;
pub mod scalar;
pub mod similarity;
pub mod synthesis;
pub mod text;
pub mod trie;

pub use decode::{
    constrained_beam_search, LengthNorm, MentionScorer, Scorer, SearchConfig, SearchError,
    UniformScorer,
};
pub use eval::{recall_at_k, report, EvalError, EvalReport};
pub use ingest::{
    dataset_stats, parse_dataset, parse_kg_dir, write_kg_dir, Document, IngestError, Mention,
};
pub use kg::{
    build_kg, kg_stats, Entity, EntityId, KgError, KnowledgeGraph, Relation, StatsReport, Triple,
};
pub use linking::{build_lookup, Candidate, LinkConfig, LinkedPrediction, Linker, LookupTable};
pub use ngram::{finetune_targets, MentionConditioned, NGramError, NGramModel};
pub use scalar::Scalar;
pub use similarity::{edit_distance, select_target_synonym, similarity};
pub use synthesis::{
    synthesize_corpus, Mode, SampleKind, SynthesisConfig, SynthesisError, TrainingSample,
};
pub use trie::{build_trie, TokenTrie, TrieError};

/// Completed decoder hypothesis with `f64` scores.
pub type Hypothesis = decode::Hypothesis<f64>;
/// Per-relation sampling weights with `f64` values.
pub type RelationProbabilities = std::collections::BTreeMap<String, f64>;

/// `f64` instantiation of [`synthesis::relation_probabilities`].
pub fn relation_probabilities(
    kg: &KnowledgeGraph,
    entity: &EntityId,
) -> Result<RelationProbabilities, SynthesisError> {
    synthesis::relation_probabilities::<f64>(kg, entity)
}

/// `f64` instantiation of [`similarity::similarity`].
pub fn similarity_f64(a: &str, b: &str) -> f64 {
    similarity::similarity::<f64>(a, b)
}
