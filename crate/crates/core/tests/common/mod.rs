//! Oracles and generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use kgel_core::decode::{rank_order, Hypothesis, LengthNorm, Scorer, SearchConfig};
use kgel_core::synthesis::hash64;
use kgel_core::trie::NodeId;
use kgel_core::{build_kg, Entity, EntityId, KnowledgeGraph, Relation, TokenTrie, Triple};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Levenshtein distance by plain top-down recursion over suffixes, memoized
/// on (i, j) so that length-8 inputs stay cheap.
pub fn lev_oracle(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let key = (a.len(), b.len());
        if let Some(&d) = memo.get(&key) {
            return d;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let del = go(&a[1..], b, memo) + 1;
        let ins = go(a, &b[1..], memo) + 1;
        let d = sub.min(del).min(ins);
        memo.insert(key, d);
        d
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, &mut HashMap::new())
}

const ALPHABET: [char; 6] = ['a', 'b', 'c', 'd', 'é', 'ß'];

pub fn random_string<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

const WORDS: [&str; 12] = [
    "acute", "renal", "failure", "heart", "attack", "pain", "chronic", "fever", "type", "ii",
    "cell", "x",
];

fn random_surface<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random graph over `n` entities. Surfaces are drawn from a small word list,
/// so distinct entities regularly share a synonym.
pub fn random_kg<R: Rng>(rng: &mut R, n: usize) -> KnowledgeGraph {
    let entities: Vec<Entity> = (0..n)
        .map(|i| {
            let syns: Vec<String> = (0..rng.random_range(0..4))
                .map(|_| random_surface(rng, 3))
                .collect();
            let def = rng.random_bool(0.3).then(|| format!("definition {i}"));
            Entity::new(
                EntityId::new(format!("E{i:03}")).unwrap(),
                random_surface(rng, 3),
                syns,
                def,
            )
            .unwrap()
        })
        .collect();
    let relations: Vec<Relation> = (0..3)
        .map(|r| Relation::new(format!("R{r}"), format!("rel_{r}")).unwrap())
        .collect();
    let mut triples = Vec::new();
    for _ in 0..rng.random_range(0..=3 * n) {
        let h = EntityId::new(format!("E{:03}", rng.random_range(0..n))).unwrap();
        let t = EntityId::new(format!("E{:03}", rng.random_range(0..n))).unwrap();
        triples.push(Triple::new(h, format!("R{}", rng.random_range(0..3)), t));
    }
    build_kg(entities, relations, triples).unwrap()
}

/// Random trie of at most `max_surfaces` surfaces with at most `max_depth`
/// tokens, over a small token alphabet so prefixes are shared.
pub fn random_trie<R: Rng>(rng: &mut R, max_surfaces: usize, max_depth: usize) -> TokenTrie {
    let tokens = ["a", "b", "c", "d", "e"];
    let mut trie = TokenTrie::default();
    for i in 0..rng.random_range(1..=max_surfaces) {
        let len = rng.random_range(1..=max_depth);
        let surface: Vec<&str> = (0..len).map(|_| *tokens.choose(rng).unwrap()).collect();
        trie.insert(&surface, EntityId::new(format!("S{i}")).unwrap());
    }
    trie
}

/// Pure pseudo-random scorer: hashed logits, log-softmax over the offered
/// candidates.
pub struct HashScorer(pub u64);

impl Scorer<f64> for HashScorer {
    fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<f64> {
        let ctx = prefix.join(" ");
        let logits: Vec<f64> = candidates
            .iter()
            .map(|c| (hash64(self.0, &format!("{ctx}\u{1f}{c}")) % 10_000) as f64 / 1000.0)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        logits.into_iter().map(|l| l - z).collect()
    }
}

/// Scores every complete surface by walking its path, offering the same
/// candidate set at every node as the search does, and ranks them.
pub fn exhaustive<S: Scorer<f64>>(
    trie: &TokenTrie,
    scorer: &S,
    cfg: &SearchConfig,
) -> Vec<Hypothesis<f64>> {
    fn walk<S: Scorer<f64>>(
        trie: &TokenTrie,
        scorer: &S,
        cfg: &SearchConfig,
        node: NodeId,
        path: &mut Vec<String>,
        lp: f64,
        out: &mut Vec<Hypothesis<f64>>,
    ) {
        let mut cands: Vec<&str> = trie.children(node).map(|(t, _)| t).collect();
        let terminal = trie.is_terminal(node);
        let end = cfg.end_token.as_deref().filter(|_| terminal);
        if let Some(e) = end {
            cands.push(e);
        }
        let prefix: Vec<&str> = path.iter().map(String::as_str).collect();
        let scores = if cands.is_empty() {
            Vec::new()
        } else {
            scorer.score_next(&prefix, &cands)
        };
        let steps = path.len() + usize::from(cfg.end_token.is_some());
        let norm = |lp: f64| match cfg.length_norm {
            LengthNorm::None => lp,
            LengthNorm::Mean => lp / steps.max(1) as f64,
        };
        if terminal {
            let total = match end {
                Some(_) => lp + scores[scores.len() - 1],
                None => lp,
            };
            out.push(Hypothesis {
                tokens: path.clone(),
                log_prob: total,
                score: norm(total),
            });
        }
        if path.len() == cfg.max_len {
            return;
        }
        for (i, (tok, child)) in trie.children(node).enumerate() {
            path.push(tok.to_owned());
            walk(trie, scorer, cfg, child, path, lp + scores[i], out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(
        trie,
        scorer,
        cfg,
        TokenTrie::ROOT,
        &mut Vec::new(),
        0.0,
        &mut out,
    );
    out.sort_by(|a, b| rank_order((a.score, &a.tokens), (b.score, &b.tokens)));
    out
}

/// Compares two ranked lists token-for-token with an absolute score tolerance.
pub fn same_ranking(a: &[Hypothesis<f64>], b: &[Hypothesis<f64>], tol: f64) -> Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("{} vs {} hypotheses", a.len(), b.len()));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.tokens != y.tokens {
            return Err(format!("rank {i}: {:?} vs {:?}", x.tokens, y.tokens));
        }
        if (x.score - y.score).abs() > tol || (x.log_prob - y.log_prob).abs() > tol {
            return Err(format!("rank {i}: score {} vs {}", x.score, y.score));
        }
    }
    Ok(())
}
