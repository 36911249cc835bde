//! Trie-constrained beam search with a pluggable next-token scorer.
//!
//! At every step a hypothesis may only be extended by the children of its trie
//! node. When the node is terminal the hypothesis also completes; if an end
//! token is configured, completion is itself a scored step with the end token
//! offered alongside the children.

use std::cmp::Ordering;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::text::EOS;
use crate::trie::{NodeId, TokenTrie};

/// Assigns log-probabilities to candidate next tokens.
///
/// Implementations return exactly one finite value per candidate, in candidate
/// order, and must be pure for a fixed model state.
pub trait Scorer<F: Scalar> {
    fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<F>;
}

impl<F: Scalar, S: Scorer<F> + ?Sized> Scorer<F> for &S {
    fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<F> {
        (**self).score_next(prefix, candidates)
    }
}

/// Produces a scorer conditioned on one mention.
pub trait MentionScorer<F: Scalar>: Sync {
    type Conditioned<'a>: Scorer<F>
    where
        Self: 'a;

    fn condition<'a>(&'a self, mention: &str) -> Self::Conditioned<'a>;
}

/// Spreads probability evenly over the offered candidates.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformScorer;

impl<F: Scalar> Scorer<F> for UniformScorer {
    fn score_next(&self, _prefix: &[&str], candidates: &[&str]) -> Vec<F> {
        let lp = -F::of_usize(candidates.len()).ln();
        vec![lp; candidates.len()]
    }
}

impl<F: Scalar> MentionScorer<F> for UniformScorer {
    type Conditioned<'a> = UniformScorer;

    fn condition(&self, _mention: &str) -> UniformScorer {
        UniformScorer
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("no hypothesis reached a complete surface form")]
    NoHypothesis,
    #[error("beam width and maximum length must both be at least 1")]
    InvalidConfig,
}

/// How completed hypotheses are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthNorm {
    /// Sum of step log-probabilities.
    #[default]
    None,
    /// Sum divided by the number of scored steps.
    Mean,
}

impl std::str::FromStr for LengthNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(LengthNorm::None),
            "mean" => Ok(LengthNorm::Mean),
            other => Err(format!("unknown length normalization {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub beam_width: usize,
    /// Maximum number of surface tokens.
    pub max_len: usize,
    pub length_norm: LengthNorm,
    /// Token that closes a hypothesis at a terminal node, if completion is scored.
    pub end_token: Option<String>,
}

impl SearchConfig {
    pub fn new(beam_width: usize, max_len: usize) -> Self {
        Self {
            beam_width,
            max_len,
            length_norm: LengthNorm::None,
            end_token: None,
        }
    }

    /// Scores completion with `[EOS]` and ranks by mean step log-probability.
    pub fn for_linking(beam_width: usize, max_len: usize) -> Self {
        Self {
            beam_width,
            max_len,
            length_norm: LengthNorm::Mean,
            end_token: Some(EOS.to_owned()),
        }
    }
}

/// A completed surface form.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<F> {
    pub tokens: Vec<String>,
    /// Sum of step log-probabilities, including the end step when configured.
    pub log_prob: F,
    /// Ranking score after length normalization.
    pub score: F,
}

impl<F> Hypothesis<F> {
    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Ranking used for both pruning and output: higher score first, then
/// lexicographically smaller token sequence.
pub fn rank_order<F: Scalar, S: AsRef<str>>(a: (F, &[S]), b: (F, &[S])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            a.1.iter()
                .map(AsRef::as_ref)
                .cmp(b.1.iter().map(AsRef::as_ref))
        })
}

struct Live<'t, F> {
    node: NodeId,
    tokens: Vec<&'t str>,
    log_prob: F,
}

pub fn constrained_beam_search<F, S>(
    trie: &TokenTrie,
    scorer: &S,
    cfg: &SearchConfig,
) -> Result<Vec<Hypothesis<F>>, SearchError>
where
    F: Scalar,
    S: Scorer<F> + ?Sized,
{
    constrained_beam_search_observed(trie, scorer, cfg, |_| {})
}

/// Same as [`constrained_beam_search`], calling `observe` with every live
/// hypothesis prefix before it is expanded.
pub fn constrained_beam_search_observed<F, S>(
    trie: &TokenTrie,
    scorer: &S,
    cfg: &SearchConfig,
    mut observe: impl FnMut(&[&str]),
) -> Result<Vec<Hypothesis<F>>, SearchError>
where
    F: Scalar,
    S: Scorer<F> + ?Sized,
{
    if cfg.beam_width == 0 || cfg.max_len == 0 {
        return Err(SearchError::InvalidConfig);
    }
    let end = cfg.end_token.as_deref();
    let finish = |tokens: &[&str], log_prob: F| {
        let steps = tokens.len() + usize::from(end.is_some());
        let score = match cfg.length_norm {
            LengthNorm::None => log_prob,
            LengthNorm::Mean => log_prob / F::of_usize(steps.max(1)),
        };
        Hypothesis {
            tokens: tokens.iter().map(|t| (*t).to_owned()).collect(),
            log_prob,
            score,
        }
    };

    let mut beams = vec![Live {
        node: TokenTrie::ROOT,
        tokens: Vec::new(),
        log_prob: F::zero(),
    }];
    let mut done = Vec::new();
    let mut names: Vec<&str> = Vec::new();
    let mut targets: Vec<Option<NodeId>> = Vec::new();
    while !beams.is_empty() {
        let mut next: Vec<Live<'_, F>> = Vec::new();
        for beam in &beams {
            observe(&beam.tokens);
            let terminal = trie.is_terminal(beam.node);
            if terminal && end.is_none() {
                done.push(finish(&beam.tokens, beam.log_prob));
            }
            names.clear();
            targets.clear();
            for (tok, child) in trie.children(beam.node) {
                names.push(tok);
                targets.push(Some(child));
            }
            let can_extend = beam.tokens.len() < cfg.max_len;
            let ends = terminal && end.is_some();
            if ends {
                names.push(end.unwrap_or_default());
                targets.push(None);
            }
            if !ends && (!can_extend || names.is_empty()) {
                continue;
            }
            let scores = scorer.score_next(&beam.tokens, &names);
            assert_eq!(
                scores.len(),
                names.len(),
                "scorer must score every candidate"
            );
            for ((tok, target), s) in names.iter().zip(&targets).zip(scores) {
                let log_prob = beam.log_prob + s;
                match target {
                    Some(child) if can_extend => {
                        let mut tokens = Vec::with_capacity(beam.tokens.len() + 1);
                        tokens.extend_from_slice(&beam.tokens);
                        tokens.push(*tok);
                        next.push(Live {
                            node: *child,
                            tokens,
                            log_prob,
                        });
                    }
                    Some(_) => {}
                    None => done.push(finish(&beam.tokens, log_prob)),
                }
            }
        }
        next.sort_by(|a, b| rank_order((a.log_prob, &a.tokens), (b.log_prob, &b.tokens)));
        next.truncate(cfg.beam_width);
        beams = next;
    }

    if done.is_empty() {
        return Err(SearchError::NoHypothesis);
    }
    done.sort_by(|a: &Hypothesis<F>, b| rank_order((a.score, &a.tokens), (b.score, &b.tokens)));
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityId;

    fn trie(surfaces: &[&str]) -> TokenTrie {
        let mut t = TokenTrie::default();
        for (i, s) in surfaces.iter().enumerate() {
            let toks: Vec<&str> = s.split(' ').collect();
            t.insert(&toks, EntityId::new(format!("E{i}")).unwrap());
        }
        t
    }

    #[test]
    fn uniform_single_tokens_lexicographic() {
        let t = trie(&["zeta", "alpha", "mid"]);
        let out: Vec<Hypothesis<f64>> =
            constrained_beam_search(&t, &UniformScorer, &SearchConfig::new(3, 1)).unwrap();
        let surfaces: Vec<_> = out.iter().map(Hypothesis::surface).collect();
        assert_eq!(surfaces, ["alpha", "mid", "zeta"]);
        assert!(out.iter().all(|h| (h.score + 3f64.ln()).abs() < 1e-12));
    }

    struct Designated(Vec<&'static str>);

    impl Scorer<f64> for Designated {
        fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<f64> {
            candidates
                .iter()
                .map(|c| {
                    let on_path = prefix.len() < self.0.len()
                        && prefix == &self.0[..prefix.len()]
                        && *c == self.0[prefix.len()];
                    if on_path {
                        0.0
                    } else {
                        -1e9
                    }
                })
                .collect()
        }
    }

    #[test]
    fn designated_path_wins() {
        let t = trie(&["a b c", "a b", "a x", "b"]);
        let out =
            constrained_beam_search(&t, &Designated(vec!["a", "x"]), &SearchConfig::new(2, 3))
                .unwrap();
        assert_eq!(out[0].tokens, ["a", "x"]);
        assert_eq!(out[0].score, 0.0);
    }

    #[test]
    fn errors() {
        let empty = TokenTrie::default();
        assert_eq!(
            constrained_beam_search::<f64, _>(&empty, &UniformScorer, &SearchConfig::new(1, 1)),
            Err(SearchError::NoHypothesis)
        );
        let t = trie(&["a b"]);
        assert_eq!(
            constrained_beam_search::<f64, _>(&t, &UniformScorer, &SearchConfig::new(1, 1)),
            Err(SearchError::NoHypothesis)
        );
        assert_eq!(
            constrained_beam_search::<f64, _>(&t, &UniformScorer, &SearchConfig::new(0, 1)),
            Err(SearchError::InvalidConfig)
        );
    }

    #[test]
    fn end_token_is_scored_and_normalized() {
        let t = trie(&["a", "a b"]);
        let cfg = SearchConfig::for_linking(4, 2);
        let out: Vec<Hypothesis<f64>> = constrained_beam_search(&t, &UniformScorer, &cfg).unwrap();
        // "a": ln1 (only root child) + ln(1/2) at {b, [EOS]}; "a b": ln1 + ln(1/2) + ln1
        let a = out.iter().find(|h| h.tokens == ["a"]).unwrap();
        let ab = out.iter().find(|h| h.tokens == ["a", "b"]).unwrap();
        assert!((a.log_prob + 2f64.ln()).abs() < 1e-12);
        assert!((a.score + 2f64.ln() / 2.0).abs() < 1e-12);
        assert!((ab.score + 2f64.ln() / 3.0).abs() < 1e-12);
        assert_eq!(out[0].tokens, ["a", "b"]);
    }

    #[test]
    fn f32_search_runs() {
        let t = trie(&["x y", "x z"]);
        let out: Vec<Hypothesis<f32>> =
            constrained_beam_search(&t, &UniformScorer, &SearchConfig::new(2, 2)).unwrap();
        assert_eq!(out.len(), 2);
    }
}
