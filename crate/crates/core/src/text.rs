//! Surface-form normalization and whitespace tokenization.

/// Begin-of-sequence marker.
pub const BOS: &str = "[BOS]";
/// End-of-sequence marker.
pub const EOS: &str = "[EOS]";
/// Opens the synonym span in an encoder source.
pub const ST: &str = "[ST]";
/// Closes the synonym span in an encoder source.
pub const ET: &str = "[ET]";

pub const SPECIAL_TOKENS: [&str; 4] = [BOS, EOS, ST, ET];

/// Controls how two surface forms are brought to a comparable form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalizer {
    pub fold_case: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { fold_case: true }
    }
}

impl Normalizer {
    /// Collapses runs of whitespace to one space, trims, and case-folds if enabled.
    pub fn apply(&self, s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for (i, piece) in s.split_whitespace().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if self.fold_case {
                out.extend(piece.chars().flat_map(char::to_lowercase));
            } else {
                out.push_str(piece);
            }
        }
        out
    }
}

/// Default normalization: case-fold and collapse whitespace.
pub fn normalize(s: &str) -> String {
    Normalizer::default().apply(s)
}

/// Token sequence of a surface form, as stored in the trie.
pub fn surface_tokens(s: &str) -> Vec<String> {
    normalize(s)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Tokens of a template line. Special markers are kept verbatim, everything else
/// is normalized like a surface form so model tokens line up with trie tokens.
pub fn template_tokens(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|t| {
            if SPECIAL_TOKENS.contains(&t) {
                t.to_owned()
            } else {
                t.chars().flat_map(char::to_lowercase).collect()
            }
        })
        .collect()
}

/// Returns the first special marker occurring anywhere inside `s`.
pub fn find_reserved(s: &str) -> Option<&'static str> {
    SPECIAL_TOKENS.iter().copied().find(|tok| s.contains(tok))
}
