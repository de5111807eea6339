//! Dataset ingestion: line-delimited cluster records, a punctuation-driven
//! sentence splitter, the word vocabulary and the encoder input layout.
//!
//! Encoder input for a cluster is laid out document by document:
//!
//! ```text
//! <doc-sep> w w w <sent-sep> w w <sent-sep> <doc-sep> w w w w <sent-sep> ...
//! ```
//!
//! Truncation drops trailing sentences whole; a sentence is never split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SENT_SEP: u32 = 4;
pub const DOC_SEP: u32 = 5;

const RESERVED: [&str; 6] = ["<pad>", "<unk>", "<s>", "</s>", "<sent-sep>", "<doc-sep>"];

/// Default encoder input budget, in tokens.
pub const DEFAULT_MAX_INPUT_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    /// Lowercased tokens; everything downstream works on these.
    pub tokens: Vec<String>,
    /// Tokens with their original casing.
    pub original: Vec<String>,
    /// Byte offsets into the source text.
    pub char_span: (usize, usize),
    /// Optional part-of-speech tags aligned with `tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
}

impl Sentence {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let original: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        Sentence {
            tokens: original.iter().map(|t| t.to_lowercase()).collect(),
            original,
            char_span: (0, 0),
            pos: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCluster {
    pub id: String,
    pub documents: Vec<Document>,
    pub summary: Option<Vec<Sentence>>,
}

impl DocumentCluster {
    /// Builds a cluster from raw document strings, tokenizing each one.
    /// Documents that contain no sentences are dropped.
    pub fn from_texts<S: AsRef<str>>(id: &str, documents: &[S], summary: Option<&str>) -> Result<Self> {
        let documents: Vec<Document> = documents
            .iter()
            .map(|d| Document {
                sentences: tokenize(d.as_ref()),
            })
            .filter(|d| !d.sentences.is_empty())
            .collect();
        if documents.is_empty() {
            return Err(Error::Data(format!("cluster {id} has no non-empty documents")));
        }
        let summary = summary.map(tokenize).filter(|s| !s.is_empty());
        Ok(DocumentCluster {
            id: id.to_string(),
            documents,
            summary,
        })
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Document::token_count).sum()
    }

    /// The ground-truth summary viewed as a one-document cluster, so the same
    /// graph construction and encoding apply to it.
    pub fn summary_cluster(&self) -> Option<DocumentCluster> {
        let summary = self.summary.as_ref()?;
        if summary.is_empty() {
            return None;
        }
        Some(DocumentCluster {
            id: format!("{}#summary", self.id),
            documents: vec![Document {
                sentences: summary.clone(),
            }],
            summary: None,
        })
    }

    /// Copy of this cluster without its summary, as seen at inference time.
    pub fn without_summary(&self) -> DocumentCluster {
        DocumentCluster {
            id: self.id.clone(),
            documents: self.documents.clone(),
            summary: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.documents.is_empty() {
            return Err(Error::Data(format!("cluster {} has no documents", self.id)));
        }
        for (d, doc) in self.documents.iter().enumerate() {
            if doc.sentences.is_empty() {
                return Err(Error::Data(format!("cluster {} document {d} has no sentences", self.id)));
            }
            if doc.sentences.iter().any(Sentence::is_empty) {
                return Err(Error::Data(format!("cluster {} document {d} has an empty sentence", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    documents: Vec<String>,
    #[serde(default)]
    summary: Option<String>,
    /// Per-document POS tags, flattened over the document's tokens.
    #[serde(default)]
    pos: Option<Vec<Vec<String>>>,
}

/// Reads line-delimited JSON records with fields `id`, `documents` and
/// `summary`. Blank lines are ignored; records without documents are skipped
/// with a warning.
pub fn load_clusters(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<DocumentCluster>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut clusters = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        if limit.is_some_and(|n| clusters.len() >= n) {
            break;
        }
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if raw.documents.is_empty() {
            log::warn!("{}:{line_no}: record {} has no documents, skipped", path.display(), raw.id);
            continue;
        }
        let mut documents = Vec::with_capacity(raw.documents.len());
        for (d, text) in raw.documents.iter().enumerate() {
            let mut sentences = tokenize(text);
            if sentences.is_empty() {
                log::warn!("{}:{line_no}: record {} document {d} is empty, dropped", path.display(), raw.id);
                continue;
            }
            if let Some(tags) = raw.pos.as_ref().and_then(|p| p.get(d)) {
                attach_pos(&mut sentences, tags).map_err(|m| parse_err(format!("document {d}: {m}")))?;
            }
            documents.push(Document { sentences });
        }
        if documents.is_empty() {
            log::warn!("{}:{line_no}: record {} has only empty documents, skipped", path.display(), raw.id);
            continue;
        }
        let summary = raw.summary.as_deref().map(tokenize).filter(|s| !s.is_empty());
        clusters.push(DocumentCluster {
            id: raw.id,
            documents,
            summary,
        });
    }
    Ok(clusters)
}

fn attach_pos(sentences: &mut [Sentence], tags: &[String]) -> std::result::Result<(), String> {
    let total: usize = sentences.iter().map(Sentence::len).sum();
    if total != tags.len() {
        return Err(format!("{} POS tags for {total} tokens", tags.len()));
    }
    let mut offset = 0;
    for s in sentences {
        s.pos = Some(tags[offset..offset + s.len()].to_vec());
        offset += s.len();
    }
    Ok(())
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace (or
/// the end of the text), then into whitespace tokens with leading and
/// trailing punctuation detached one character per token.
pub fn tokenize(text: &str) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminal(c) {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = i + c.len_utf8();
            push_sentence(text, start, end, &mut sentences);
            start = end;
        }
    }
    push_sentence(text, start, text.len(), &mut sentences);
    sentences
}

fn push_sentence(text: &str, start: usize, end: usize, out: &mut Vec<Sentence>) {
    let slice = &text[start..end];
    let original = split_tokens(slice);
    if original.is_empty() {
        return;
    }
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    out.push(Sentence {
        tokens: original.iter().map(|t| t.to_lowercase()).collect(),
        original,
        char_span: (start + lead, end - trail),
        pos: None,
    });
}

fn split_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
        if lead == chars.len() {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| c.is_ascii_punctuation()).count();
        tokens.extend(chars[..lead].iter().map(|c| c.to_string()));
        tokens.push(chars[lead..chars.len() - trail].iter().collect());
        tokens.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(words: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let mut vocab = Vocab {
            tokens,
            index: HashMap::new(),
        };
        vocab.reindex()?;
        Ok(vocab)
    }

    fn reindex(&mut self) -> Result<()> {
        for (i, r) in RESERVED.iter().enumerate() {
            if self.tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Data(format!("vocabulary slot {i} must hold {r}")));
            }
        }
        self.index.clear();
        for (i, t) in self.tokens.iter().enumerate() {
            if self.index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or(RESERVED[UNK as usize], String::as_str)
    }

    /// Non-reserved entries, in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Joins ids back into text, dropping reserved markers other than UNK.
    pub fn decode_text(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id == UNK || id as usize >= RESERVED.len())
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Ids of a summary's tokens in reading order.
    pub fn encode_summary(&self, summary: &[Sentence]) -> Vec<u32> {
        summary.iter().flat_map(|s| s.tokens.iter().map(|t| self.id(t))).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.tokens.join("\n") + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Vocab {
            tokens: text.lines().map(str::to_string).collect(),
            index: HashMap::new(),
        };
        vocab.reindex()?;
        Ok(vocab)
    }
}

/// Counts lowercased tokens across documents and summaries and keeps those
/// seen at least `min_freq` times, most frequent first, ties lexicographic.
pub fn build_vocab(clusters: &[DocumentCluster], min_freq: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for cluster in clusters {
        let summary = cluster.summary.iter().flatten();
        let sentences = cluster.documents.iter().flat_map(|d| d.sentences.iter()).chain(summary);
        for s in sentences {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t.to_string())).expect("reserved entries are excluded")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SentenceBoundary {
    /// Positions of the sentence's tokens.
    pub tokens: Range<usize>,
    /// Position of the trailing `<sent-sep>`.
    pub sent_sep: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentBoundary {
    /// Position of the leading `<doc-sep>`.
    pub doc_sep: usize,
    pub sentences: Vec<SentenceBoundary>,
}

/// Where each retained document and sentence sits in the serialized input.
/// Retained content is always a prefix: the first `documents.len()`
/// documents, each keeping its first `sentences.len()` sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BoundaryIndex {
    pub documents: Vec<DocumentBoundary>,
}

impl BoundaryIndex {
    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    /// The part of `cluster` that survived truncation.
    pub fn retained(&self, cluster: &DocumentCluster) -> DocumentCluster {
        let documents = self
            .documents
            .iter()
            .zip(&cluster.documents)
            .map(|(b, d)| Document {
                sentences: d.sentences[..b.sentences.len()].to_vec(),
            })
            .collect();
        DocumentCluster {
            id: cluster.id.clone(),
            documents,
            summary: cluster.summary.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<u32>,
    pub boundaries: BoundaryIndex,
}

/// Serializes a cluster into encoder ids with document and sentence
/// delimiters, truncating at `max_len` without splitting sentences.
pub fn serialize_encoder_input(cluster: &DocumentCluster, vocab: &Vocab, max_len: usize) -> Result<EncoderInput> {
    if max_len < 16 {
        return Err(Error::Config(format!("max input length {max_len} is below the minimum of 16")));
    }
    cluster.check()?;
    let mut ids = Vec::new();
    let mut boundaries = BoundaryIndex::default();
    'docs: for doc in &cluster.documents {
        let first = doc.sentences[0].len();
        if ids.len() + first + 2 > max_len {
            break;
        }
        let mut db = DocumentBoundary {
            doc_sep: ids.len(),
            sentences: Vec::new(),
        };
        ids.push(DOC_SEP);
        for s in &doc.sentences {
            if ids.len() + s.len() + 1 > max_len {
                boundaries.documents.push(db);
                break 'docs;
            }
            let start = ids.len();
            ids.extend(s.tokens.iter().map(|t| vocab.id(t)));
            db.sentences.push(SentenceBoundary {
                tokens: start..ids.len(),
                sent_sep: ids.len(),
            });
            ids.push(SENT_SEP);
        }
        boundaries.documents.push(db);
    }
    if boundaries.sentence_count() == 0 {
        return Err(Error::Data(format!(
            "cluster {} keeps no sentence within {max_len} tokens",
            cluster.id
        )));
    }
    Ok(EncoderInput { ids, boundaries })
}
