//! Prefix tree over tokenized surface forms. A path is terminal exactly when
//! it spells a registered synonym; terminals carry the owning entity ids.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};
use crate::text::surface_tokens;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrieError {
    #[error("entity {entity}: synonym {synonym:?} has no tokens")]
    EmptySurface { entity: String, synonym: String },
    #[error("prefix {0:?} is not a path in the trie")]
    InvalidPrefix(Vec<String>),
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<String, usize>,
    // non-empty iff terminal; sorted, deduplicated
    payload: Vec<EntityId>,
}

#[derive(Debug, Clone)]
pub struct TokenTrie {
    nodes: Vec<Node>,
}

/// Handle to a node of a [`TokenTrie`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Children of a prefix and whether the prefix is itself a surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allowed<'t> {
    pub children: Vec<&'t str>,
    pub terminal: bool,
}

impl Default for TokenTrie {
    fn default() -> Self {
        Self {
            nodes: vec![Node::default()],
        }
    }
}

impl TokenTrie {
    pub const ROOT: NodeId = NodeId(0);

    /// Registers `tokens` as a surface form owned by `owner`.
    pub fn insert<S: AsRef<str>>(&mut self, tokens: &[S], owner: EntityId) {
        let mut at = 0;
        for tok in tokens {
            let tok = tok.as_ref();
            at = match self.nodes[at].children.get(tok) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[at].children.insert(tok.to_owned(), next);
                    next
                }
            };
        }
        let payload = &mut self.nodes[at].payload;
        if let Err(pos) = payload.binary_search(&owner) {
            payload.insert(pos, owner);
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[0].children.is_empty()
    }

    /// Number of tokens on the longest path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            nodes[at]
                .children
                .values()
                .map(|&c| 1 + go(nodes, c))
                .max()
                .unwrap_or(0)
        }
        go(&self.nodes, 0)
    }

    pub fn child(&self, node: NodeId, token: &str) -> Option<NodeId> {
        self.nodes[node.0].children.get(token).map(|&c| NodeId(c))
    }

    /// Children of `node` in ascending token order.
    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (&str, NodeId)> + '_ {
        self.nodes[node.0]
            .children
            .iter()
            .map(|(t, &c)| (t.as_str(), NodeId(c)))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        !self.nodes[node.0].payload.is_empty()
    }

    /// Owners of the surface form ending at `node`; empty for non-terminals.
    pub fn payload(&self, node: NodeId) -> &[EntityId] {
        &self.nodes[node.0].payload
    }

    pub fn find<S: AsRef<str>>(&self, prefix: &[S]) -> Option<NodeId> {
        prefix
            .iter()
            .try_fold(Self::ROOT, |at, t| self.child(at, t.as_ref()))
    }

    /// Legal next tokens after `prefix`.
    pub fn allowed_next<S: AsRef<str>>(&self, prefix: &[S]) -> Result<Allowed<'_>, TrieError> {
        let node = self.find(prefix).ok_or_else(|| {
            TrieError::InvalidPrefix(prefix.iter().map(|s| s.as_ref().to_owned()).collect())
        })?;
        Ok(Allowed {
            children: self.children(node).map(|(t, _)| t).collect(),
            terminal: self.is_terminal(node),
        })
    }

    /// All terminal paths with their owners, in preorder.
    pub fn surfaces(&self) -> Vec<(Vec<&str>, &[EntityId])> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.walk(Self::ROOT, &mut path, &mut |path, node| {
            if self.is_terminal(node) {
                out.push((path.to_vec(), self.payload(node)));
            }
        });
        out
    }

    fn walk<'t>(
        &'t self,
        node: NodeId,
        path: &mut Vec<&'t str>,
        f: &mut impl FnMut(&[&'t str], NodeId),
    ) {
        f(path, node);
        for (tok, child) in self.children(node) {
            path.push(tok);
            self.walk(child, path, f);
            path.pop();
        }
    }

    /// Line dump in preorder, one row per non-root node:
    /// `depth<TAB>token<TAB>terminal(0|1)<TAB>comma-separated owners`.
    pub fn export<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut result = Ok(());
        let mut path = Vec::new();
        self.walk(Self::ROOT, &mut path, &mut |path, node| {
            if result.is_err() || path.is_empty() {
                return;
            }
            let owners: Vec<&str> = self.payload(node).iter().map(EntityId::as_str).collect();
            result = writeln!(
                w,
                "{}\t{}\t{}\t{}",
                path.len(),
                path[path.len() - 1],
                u8::from(self.is_terminal(node)),
                owners.join(",")
            );
        });
        result
    }
}

/// Trie over every normalized synonym of every entity.
pub fn build_trie(kg: &KnowledgeGraph) -> Result<TokenTrie, TrieError> {
    let mut trie = TokenTrie::default();
    for e in kg.entities() {
        for syn in e.synonyms() {
            let tokens = surface_tokens(syn);
            if tokens.is_empty() {
                return Err(TrieError::EmptySurface {
                    entity: e.id().to_string(),
                    synonym: syn.clone(),
                });
            }
            trie.insert(&tokens, e.id().clone());
        }
    }
    Ok(trie)
}
