//! Readers for the TSV knowledge-graph layout and the JSON-lines mention
//! datasets, plus a writer for the TSV layout.
//!
//! KG directory layout (UTF-8, no header, one record per line):
//!
//! ```text
//! concepts.tsv     cui<TAB>preferred_name
//! synonyms.tsv     cui<TAB>synonym
//! definitions.tsv  cui<TAB>definition          (optional file)
//! relations.tsv    relation_id<TAB>label
//! triples.tsv      head_cui<TAB>relation_id<TAB>tail_cui
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{build_kg, Entity, EntityId, KgError, KnowledgeGraph, Relation, Triple};

pub const CONCEPTS_FILE: &str = "concepts.tsv";
pub const SYNONYMS_FILE: &str = "synonyms.tsv";
pub const DEFINITIONS_FILE: &str = "definitions.tsv";
pub const RELATIONS_FILE: &str = "relations.tsv";
pub const TRIPLES_FILE: &str = "triples.tsv";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing required file {0}")]
    MissingFile(String),
    #[error("{file}:{line}: {reason}")]
    MalformedLine {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: {source}")]
    Kg {
        file: String,
        line: usize,
        source: KgError,
    },
    #[error("{file}:{line}: document {doc_id}: mention {mention} span is out of bounds or splits a character")]
    SpanOutOfBounds {
        file: String,
        line: usize,
        doc_id: String,
        mention: usize,
    },
    #[error("{file}:{line}: document {doc_id}: mentions {first} and {second} overlap")]
    OverlappingMentions {
        file: String,
        line: usize,
        doc_id: String,
        first: usize,
        second: usize,
    },
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedLine {
        file: file.to_owned(),
        line,
        reason: reason.into(),
    }
}

/// Streams `(line_no, line)` pairs from a UTF-8 file, skipping blank lines and
/// stripping a trailing carriage return.
fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf).map_err(io_err)? == 0 {
            return Ok(());
        }
        line_no += 1;
        let line = buf.strip_suffix('\n').unwrap_or(&buf);
        let line = line.strip_suffix('\r').unwrap_or(line);
        if !line.is_empty() {
            f(line_no, line)?;
        }
    }
}

fn fields<'a, const N: usize>(
    file: &str,
    line_no: usize,
    line: &'a str,
) -> Result<[&'a str; N], IngestError> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != N {
        return Err(malformed(
            file,
            line_no,
            format!("expected {N} tab-separated fields, found {}", parts.len()),
        ));
    }
    if let Some(i) = parts.iter().position(|p| p.is_empty()) {
        return Err(malformed(
            file,
            line_no,
            format!("field {} is empty", i + 1),
        ));
    }
    Ok(parts.try_into().expect("length checked"))
}

fn entity_id(file: &str, line: usize, raw: &str) -> Result<EntityId, IngestError> {
    EntityId::new(raw).map_err(|source| IngestError::Kg {
        file: file.to_owned(),
        line,
        source,
    })
}

/// Parses a KG directory and validates it with [`build_kg`]. Errors carry the
/// file and line they originate from.
pub fn parse_kg_dir(dir: impl AsRef<Path>) -> Result<KnowledgeGraph, IngestError> {
    let dir = dir.as_ref();
    let required = |name: &str| {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(IngestError::MissingFile(name.to_owned()))
        }
    };
    let concepts_path = required(CONCEPTS_FILE)?;
    let synonyms_path = required(SYNONYMS_FILE)?;
    let relations_path = required(RELATIONS_FILE)?;
    let triples_path = required(TRIPLES_FILE)?;

    struct Draft {
        line: usize,
        preferred: String,
        synonyms: Vec<String>,
        definition: Option<String>,
    }
    let mut drafts: BTreeMap<EntityId, Draft> = BTreeMap::new();
    for_each_line(&concepts_path, |no, line| {
        let [cui, name] = fields::<2>(CONCEPTS_FILE, no, line)?;
        let id = entity_id(CONCEPTS_FILE, no, cui)?;
        if let Some(prev) = drafts.get(&id) {
            return Err(IngestError::Kg {
                file: CONCEPTS_FILE.into(),
                line: no,
                source: KgError::DuplicateEntityId(format!(
                    "{id} (first seen on line {})",
                    prev.line
                )),
            });
        }
        drafts.insert(
            id,
            Draft {
                line: no,
                preferred: name.to_owned(),
                synonyms: Vec::new(),
                definition: None,
            },
        );
        Ok(())
    })?;

    for_each_line(&synonyms_path, |no, line| {
        let [cui, syn] = fields::<2>(SYNONYMS_FILE, no, line)?;
        let draft = drafts
            .get_mut(cui)
            .ok_or_else(|| malformed(SYNONYMS_FILE, no, format!("unknown concept {cui}")))?;
        draft.synonyms.push(syn.to_owned());
        Ok(())
    })?;

    let definitions_path = dir.join(DEFINITIONS_FILE);
    if definitions_path.is_file() {
        for_each_line(&definitions_path, |no, line| {
            let (cui, def) = line
                .split_once('\t')
                .filter(|(c, d)| !c.is_empty() && !d.is_empty())
                .ok_or_else(|| malformed(DEFINITIONS_FILE, no, "expected cui<TAB>definition"))?;
            let draft = drafts
                .get_mut(cui)
                .ok_or_else(|| malformed(DEFINITIONS_FILE, no, format!("unknown concept {cui}")))?;
            // first definition wins
            draft.definition.get_or_insert_with(|| def.to_owned());
            Ok(())
        })?;
    }

    let mut entities = Vec::with_capacity(drafts.len());
    for (id, d) in drafts {
        let line = d.line;
        let e = Entity::new(id, d.preferred, d.synonyms, d.definition).map_err(|source| {
            IngestError::Kg {
                file: CONCEPTS_FILE.into(),
                line,
                source,
            }
        })?;
        entities.push(e);
    }

    let mut relations = Vec::new();
    let mut relation_lines: HashMap<String, usize> = HashMap::new();
    for_each_line(&relations_path, |no, line| {
        let [id, label] = fields::<2>(RELATIONS_FILE, no, line)?;
        if relation_lines.insert(id.to_owned(), no).is_some() {
            return Err(IngestError::Kg {
                file: RELATIONS_FILE.into(),
                line: no,
                source: KgError::DuplicateRelationId(id.to_owned()),
            });
        }
        relations.push(Relation::new(id, label).map_err(|source| IngestError::Kg {
            file: RELATIONS_FILE.into(),
            line: no,
            source,
        })?);
        Ok(())
    })?;

    let mut triples = Vec::new();
    let mut triple_lines = Vec::new();
    for_each_line(&triples_path, |no, line| {
        let [head, rel, tail] = fields::<3>(TRIPLES_FILE, no, line)?;
        triples.push(Triple::new(
            entity_id(TRIPLES_FILE, no, head)?,
            rel,
            entity_id(TRIPLES_FILE, no, tail)?,
        ));
        triple_lines.push(no);
        Ok(())
    })?;

    build_kg(entities, relations, triples).map_err(|source| {
        let line = match &source {
            KgError::DanglingEntity { index, .. } | KgError::DanglingRelation { index, .. } => {
                triple_lines[*index]
            }
            _ => 0,
        };
        IngestError::Kg {
            file: TRIPLES_FILE.into(),
            line,
            source,
        }
    })
}

/// Writes `kg` in the TSV layout read by [`parse_kg_dir`]. Entities and
/// relations are written in id order, triples in stored order.
pub fn write_kg_dir(kg: &KnowledgeGraph, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);

    let mut concepts = open(CONCEPTS_FILE)?;
    let mut synonyms = open(SYNONYMS_FILE)?;
    let mut definitions = open(DEFINITIONS_FILE)?;
    for e in kg.entities() {
        writeln!(concepts, "{}\t{}", e.id(), e.preferred_name())?;
        for s in &e.synonyms()[1..] {
            writeln!(synonyms, "{}\t{}", e.id(), s)?;
        }
        if let Some(d) = e.definition() {
            writeln!(definitions, "{}\t{}", e.id(), d)?;
        }
    }
    let mut relations = open(RELATIONS_FILE)?;
    for r in kg.relations() {
        writeln!(relations, "{}\t{}", r.id(), r.label())?;
    }
    let mut triples = open(TRIPLES_FILE)?;
    for t in kg.triples() {
        writeln!(triples, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    for mut w in [concepts, synonyms, definitions, relations, triples] {
        w.flush()?;
    }
    Ok(())
}

/// A marked span in a document. Offsets are UTF-8 byte offsets, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Checks span bounds, surface agreement and overlap. `file` and `line`
    /// only label errors.
    pub fn validate(&self, file: &str, line: usize) -> Result<(), IngestError> {
        for (i, m) in self.mentions.iter().enumerate() {
            let span = (m.start < m.end)
                .then(|| self.text.get(m.start..m.end))
                .flatten()
                .ok_or_else(|| IngestError::SpanOutOfBounds {
                    file: file.to_owned(),
                    line,
                    doc_id: self.doc_id.clone(),
                    mention: i,
                })?;
            if span != m.surface {
                return Err(malformed(
                    file,
                    line,
                    format!(
                        "mention {i}: surface {:?} does not match text span {:?}",
                        m.surface, span
                    ),
                ));
            }
            if EntityId::new(m.gold.as_str()).is_err() {
                return Err(malformed(
                    file,
                    line,
                    format!("mention {i}: invalid gold id {:?}", m.gold),
                ));
            }
        }
        let mut order: Vec<usize> = (0..self.mentions.len()).collect();
        order.sort_by_key(|&i| (self.mentions[i].start, self.mentions[i].end));
        for w in order.windows(2) {
            if self.mentions[w[1]].start < self.mentions[w[0]].end {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(IngestError::OverlappingMentions {
                    file: file.to_owned(),
                    line,
                    doc_id: self.doc_id.clone(),
                    first,
                    second,
                });
            }
        }
        Ok(())
    }
}

/// Parses a JSON-lines dataset, one document per line.
pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Vec<Document>, IngestError> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let mut docs = Vec::new();
    for_each_line(path, |no, line| {
        let doc: Document =
            serde_json::from_str(line).map_err(|e| malformed(&file, no, e.to_string()))?;
        doc.validate(&file, no)?;
        docs.push(doc);
        Ok(())
    })?;
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetStatsReport {
    pub documents: usize,
    pub mentions: usize,
    /// Distinct gold ids.
    pub entities: usize,
}

pub fn dataset_stats(docs: &[Document]) -> DatasetStatsReport {
    let golds: BTreeSet<&str> = docs
        .iter()
        .flat_map(|d| d.mentions.iter().map(|m| m.gold.as_str()))
        .collect();
    DatasetStatsReport {
        documents: docs.len(),
        mentions: docs.iter().map(|d| d.mentions.len()).sum(),
        entities: golds.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str, spans: &[(usize, usize, &str)]) -> Document {
        Document {
            doc_id: "d".into(),
            text: text.into(),
            mentions: spans
                .iter()
                .map(|&(start, end, gold)| Mention {
                    start,
                    end,
                    surface: text.get(start..end).unwrap_or("").into(),
                    gold: gold.into(),
                })
                .collect(),
        }
    }

    #[test]
    fn span_checks() {
        assert!(doc("ab cd", &[(0, 2, "C1"), (3, 5, "C2")])
            .validate("f", 1)
            .is_ok());
        let mut d = doc("ab cd", &[(0, 2, "C1")]);
        d.mentions[0].end = 9;
        assert!(matches!(
            d.validate("f", 1),
            Err(IngestError::SpanOutOfBounds { .. })
        ));
        assert!(matches!(
            doc("ab cd", &[(3, 5, "C1"), (0, 4, "C2")]).validate("f", 1),
            Err(IngestError::OverlappingMentions {
                first: 0,
                second: 1,
                ..
            })
        ));
        // 'é' is two bytes: offset 1 splits it
        let mut d = doc("é x", &[(0, 2, "C1")]);
        d.mentions[0].end = 1;
        assert!(matches!(
            d.validate("f", 1),
            Err(IngestError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn surface_must_match_text() {
        let mut d = doc("ab cd", &[(0, 2, "C1")]);
        d.mentions[0].surface = "xx".into();
        assert!(matches!(
            d.validate("f", 1),
            Err(IngestError::MalformedLine { .. })
        ));
    }

    #[test]
    fn stats_count_distinct_golds() {
        let docs = vec![
            doc("ab cd", &[(0, 2, "C1"), (3, 5, "C2")]),
            doc("ab", &[(0, 2, "C1")]),
        ];
        assert_eq!(
            dataset_stats(&docs),
            DatasetStatsReport {
                documents: 2,
                mentions: 3,
                entities: 2
            }
        );
        assert_eq!(
            dataset_stats(&[]),
            DatasetStatsReport {
                documents: 0,
                mentions: 0,
                entities: 0
            }
        );
    }
}
