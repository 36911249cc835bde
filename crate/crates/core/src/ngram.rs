//! Add-one smoothed token n-gram model used as a stand-in generative scorer.
//!
//! Model file (UTF-8, `\n` line ends):
//!
//! ```text
//! kgel-ngram<TAB>1
//! n<TAB>{order}
//! V<TAB>{vocabulary size}
//! {context tokens joined by ' '}<TAB>{token}<TAB>{count}     sorted by (context, token)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::decode::{MentionScorer, Scorer};
use crate::ingest::Document;
use crate::kg::KnowledgeGraph;
use crate::scalar::Scalar;
use crate::similarity::select_target_synonym;
use crate::text::{template_tokens, Normalizer, BOS, EOS};

pub const DEFAULT_ORDER: usize = 3;
const MAGIC: &str = "kgel-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NGramError {
    #[error("training corpus has no predictable tokens")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("model file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramModel {
    order: usize,
    // context (tokens joined by ' ') -> next token -> count
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: BTreeMap<String, u64>,
    // every token observed as a continuation
    vocab: BTreeSet<String>,
}

fn context_key<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut key = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            key.push(' ');
        }
        key.push_str(t.as_ref());
    }
    key
}

impl NGramModel {
    /// Counts every (context, token) pair in the tokenized targets. The first
    /// token of a line (normally `[BOS]`) is only ever a context.
    pub fn train<I, S>(targets: I, order: usize) -> Result<Self, NGramError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if order == 0 {
            return Err(NGramError::InvalidOrder);
        }
        let mut model = Self {
            order,
            counts: BTreeMap::new(),
            totals: BTreeMap::new(),
            vocab: BTreeSet::new(),
        };
        for line in targets {
            let tokens = template_tokens(line.as_ref());
            for i in 1..tokens.len() {
                let ctx = context_key(&tokens[i.saturating_sub(order - 1)..i]);
                model.add(ctx, &tokens[i], 1);
            }
        }
        if model.vocab.is_empty() {
            return Err(NGramError::EmptyCorpus);
        }
        Ok(model)
    }

    fn add(&mut self, ctx: String, token: &str, n: u64) {
        if !self.vocab.contains(token) {
            self.vocab.insert(token.to_owned());
        }
        *self.totals.entry(ctx.clone()).or_default() += n;
        *self
            .counts
            .entry(ctx)
            .or_default()
            .entry(token.to_owned())
            .or_default() += n;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    /// Raw count of `token` after exactly `context`.
    pub fn count<S: AsRef<str>>(&self, context: &[S], token: &str) -> u64 {
        self.counts
            .get(&context_key(context))
            .and_then(|m| m.get(token))
            .copied()
            .unwrap_or(0)
    }

    /// `ln((count(ctx, t) + 1) / (total(ctx) + V))` with `ctx` the last `n - 1`
    /// tokens of `prefix`.
    pub fn log_prob<F: Scalar, S: AsRef<str>>(&self, prefix: &[S], token: &str) -> F {
        let ctx = context_key(&prefix[prefix.len().saturating_sub(self.order - 1)..]);
        self.log_prob_in(&ctx, token)
    }

    fn log_prob_in<F: Scalar>(&self, ctx: &str, token: &str) -> F {
        let continuations = self.counts.get(ctx);
        let total = self.totals.get(ctx).copied().unwrap_or(0);
        let count = continuations
            .and_then(|m| m.get(token))
            .copied()
            .unwrap_or(0);
        let v = self.vocab.len() as u64;
        (F::of((count + 1) as f64) / F::of((total + v) as f64)).ln()
    }

    /// Scorer that continues the fine-tuning template `[BOS] {mention} is`.
    pub fn condition_on_mention(&self, mention: &str) -> MentionConditioned<'_> {
        let template = format!("{BOS} {mention} is");
        MentionConditioned {
            model: self,
            prefix: template_tokens(&template),
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{MAGIC}\t{FORMAT_VERSION}")?;
        writeln!(w, "n\t{}", self.order)?;
        writeln!(w, "V\t{}", self.vocab.len())?;
        for (ctx, next) in &self.counts {
            for (tok, c) in next {
                writeln!(w, "{ctx}\t{tok}\t{c}")?;
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, NGramError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |expect: &str| -> Result<String, NGramError> {
            let (no, line) = lines.next().ok_or(NGramError::Format {
                line: 0,
                reason: "truncated header".into(),
            })?;
            let line = line?;
            match line.split_once('\t') {
                Some((k, v)) if k == expect => Ok(v.to_owned()),
                _ => Err(NGramError::Format {
                    line: no,
                    reason: format!("expected {expect:?} header"),
                }),
            }
        };
        let version = header(MAGIC)?;
        if version != FORMAT_VERSION.to_string() {
            return Err(NGramError::Format {
                line: 1,
                reason: format!("unsupported version {version}"),
            });
        }
        let parse = |v: String, line| {
            v.parse::<usize>().map_err(|e| NGramError::Format {
                line,
                reason: e.to_string(),
            })
        };
        let order = parse(header("n")?, 2)?;
        let v = parse(header("V")?, 3)?;
        if order == 0 {
            return Err(NGramError::InvalidOrder);
        }
        let mut model = Self {
            order,
            counts: BTreeMap::new(),
            totals: BTreeMap::new(),
            vocab: BTreeSet::new(),
        };
        let mut last: Option<(String, String)> = None;
        for (no, line) in lines {
            let line = line?;
            let bad = |reason: &str| NGramError::Format {
                line: no,
                reason: reason.to_owned(),
            };
            let mut parts = line.split('\t');
            let (Some(ctx), Some(tok), Some(c), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected ctx<TAB>token<TAB>count"));
            };
            let c: u64 = c.parse().map_err(|_| bad("count is not an integer"))?;
            if tok.is_empty()
                || c == 0
                || ctx.split(' ').count() >= order && !(order == 1 && ctx.is_empty())
            {
                return Err(bad("invalid row"));
            }
            let key = (ctx.to_owned(), tok.to_owned());
            if last.as_ref().is_some_and(|prev| *prev >= key) {
                return Err(bad("rows are not strictly sorted"));
            }
            model.add(key.0.clone(), &key.1, c);
            last = Some(key);
        }
        if model.vocab.len() != v {
            return Err(NGramError::Format {
                line: 3,
                reason: format!(
                    "header says V={v}, rows contain {} tokens",
                    model.vocab.len()
                ),
            });
        }
        if model.vocab.is_empty() {
            return Err(NGramError::EmptyCorpus);
        }
        Ok(model)
    }
}

impl<F: Scalar> Scorer<F> for NGramModel {
    fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<F> {
        let ctx = context_key(&prefix[prefix.len().saturating_sub(self.order - 1)..]);
        candidates
            .iter()
            .map(|c| self.log_prob_in(&ctx, c))
            .collect()
    }
}

/// [`NGramModel`] scoring with the mention template prepended to every prefix.
#[derive(Debug, Clone)]
pub struct MentionConditioned<'m> {
    model: &'m NGramModel,
    prefix: Vec<String>,
}

impl MentionConditioned<'_> {
    pub fn template_prefix(&self) -> &[String] {
        &self.prefix
    }
}

impl<F: Scalar> Scorer<F> for MentionConditioned<'_> {
    fn score_next(&self, prefix: &[&str], candidates: &[&str]) -> Vec<F> {
        let full: Vec<&str> = self
            .prefix
            .iter()
            .map(String::as_str)
            .chain(prefix.iter().copied())
            .collect();
        self.model.score_next(&full, candidates)
    }
}

impl<F: Scalar> MentionScorer<F> for NGramModel {
    type Conditioned<'a> = MentionConditioned<'a>;

    fn condition<'a>(&'a self, mention: &str) -> MentionConditioned<'a> {
        self.condition_on_mention(mention)
    }
}

/// Fine-tuning lines `[BOS] {mention} is {closest synonym of gold} [EOS]` for
/// every mention whose gold entity exists in `kg`. Whitespace inside the
/// mention is collapsed. Returns the lines and the number of skipped mentions.
pub fn finetune_targets(kg: &KnowledgeGraph, docs: &[Document]) -> (Vec<String>, usize) {
    let collapse = Normalizer { fold_case: false };
    let mut lines = Vec::new();
    let mut skipped = 0;
    for m in docs.iter().flat_map(|d| &d.mentions) {
        match kg.entity(&m.gold) {
            Some(e) => {
                let target = select_target_synonym(&m.surface, e);
                lines.push(format!(
                    "{BOS} {} is {} {EOS}",
                    collapse.apply(&m.surface),
                    target
                ));
            }
            None => skipped += 1,
        }
    }
    (lines, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bigram_counts() {
        let m = NGramModel::train(["[BOS] a b [EOS]"], 2).unwrap();
        assert_eq!(m.count(&["a"], "b"), 1);
        assert_eq!(m.count(&["[BOS]"], "a"), 1);
        assert_eq!(m.vocab_size(), 3);
        let doubled = NGramModel::train(["[BOS] a b [EOS]", "[BOS] a b [EOS]"], 2).unwrap();
        assert_eq!(doubled.count(&["a"], "b"), 2);
        assert_eq!(doubled.count(&["b"], "[EOS]"), 2);
    }

    #[test]
    fn smoothing_prefers_seen() {
        let m = NGramModel::train(["[BOS] a b [EOS]"], 2).unwrap();
        let s: Vec<f64> = m.score_next(&["[BOS]", "a"], &["b", "a"]);
        // V = 3, total(a) = 1: ln(2/4) vs ln(1/4)
        assert!((s[0] - 0.5f64.ln()).abs() < 1e-12);
        assert!((s[1] - 0.25f64.ln()).abs() < 1e-12);
        let unseen: Vec<f64> = m.score_next(&["zzz"], &["a", "b", "[EOS]"]);
        assert!(unseen
            .iter()
            .all(|&x| (x - (1.0f64 / 3.0).ln()).abs() < 1e-12));
        let single: Vec<f64> = m.score_next(&["a"], &["b"]);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            NGramModel::train(Vec::<String>::new(), 3),
            Err(NGramError::EmptyCorpus)
        ));
        assert!(matches!(
            NGramModel::train(["[BOS]"], 3),
            Err(NGramError::EmptyCorpus)
        ));
        assert!(matches!(
            NGramModel::train(["[BOS] a"], 0),
            Err(NGramError::InvalidOrder)
        ));
    }

    #[test]
    fn unigram_model() {
        let m = NGramModel::train(["[BOS] a a b"], 1).unwrap();
        let s: Vec<f64> = m.score_next(&["whatever"], &["a"]);
        assert!((s[0] - (3.0f64 / 5.0).ln()).abs() < 1e-12);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(NGramModel::load(&buf[..]).unwrap(), m);
    }

    #[test]
    fn mention_template_prefix() {
        let m = NGramModel::train(["[BOS] MI is myocardial infarction [EOS]"], 3).unwrap();
        assert_eq!(
            m.condition_on_mention("MI").template_prefix(),
            ["[BOS]", "mi", "is"]
        );
        assert_eq!(
            m.condition_on_mention("").template_prefix(),
            ["[BOS]", "is"]
        );
    }

    #[test]
    fn load_rejects_bad_files() {
        for text in [
            "",
            "kgel-ngram\t2\nn\t2\nV\t1\n",
            "kgel-ngram\t1\nn\t2\nV\t2\na\tb\t1\n",
            "kgel-ngram\t1\nn\t2\nV\t1\na\tb\tx\n",
            "kgel-ngram\t1\nn\t2\nV\t2\nb\tc\t1\na\tb\t1\n",
        ] {
            assert!(NGramModel::load(text.as_bytes()).is_err(), "{text:?}");
        }
    }
}
