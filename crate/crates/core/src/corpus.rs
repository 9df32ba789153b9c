//! Context chunks and queries, loaded from line-delimited JSON files.
//!
//! Chunk files hold one object per line:
//! `{"id": "...", "text": "...", "relevant": true, "tokens": 42}` where
//! `relevant` and `tokens` are optional. Query files use the same shape with
//! an optional `answers` array instead of the chunk-only fields.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits text into tokens for budget accounting.
///
/// All token budgets in this crate are measured with whatever tokenizer the
/// corpus was ingested with.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Unicode-whitespace tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Token count of `text`. Total and deterministic.
///
/// Returns at least 1 for any non-empty text so that a chunk is never free,
/// even if the tokenizer sees nothing but whitespace.
pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    if text.is_empty() {
        0
    } else {
        tokenizer.count(text).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    pub token_count: usize,
    pub relevant: Option<bool>,
}

/// An ordered set of chunks with unique ids. File order is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    chunks: Vec<Chunk>,
    total_tokens: u64,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        let mut index = HashMap::with_capacity(chunks.len());
        for (i, chunk) in chunks.iter().enumerate() {
            if chunk.text.is_empty() != (chunk.token_count == 0) {
                return Err(Error::Invalid(format!(
                    "chunk `{}`: token_count {} inconsistent with text length {}",
                    chunk.id,
                    chunk.token_count,
                    chunk.text.len()
                )));
            }
            if index.insert(chunk.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: chunk.id.clone(),
                    line: i + 1,
                });
            }
        }
        let total_tokens = chunks.iter().map(|c| c.token_count as u64).sum();
        Ok(Self {
            chunks,
            total_tokens,
            index,
        })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.chunks.iter().map(|c| c.id.as_str())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.position(id).map(|i| &self.chunks[i])
    }

    /// Ids of chunks labeled relevant.
    ///
    /// Fails when any chunk is unlabeled or when no chunk is relevant: an
    /// absent label is never read as "not relevant".
    pub fn relevant_ids(&self) -> Result<Vec<&str>> {
        let unlabeled = self.chunks.iter().filter(|c| c.relevant.is_none()).count();
        if unlabeled > 0 {
            return Err(Error::MissingLabels { unlabeled });
        }
        let relevant: Vec<&str> = self
            .chunks
            .iter()
            .filter(|c| c.relevant == Some(true))
            .map(|c| c.id.as_str())
            .collect();
        if relevant.is_empty() {
            return Err(Error::NoRelevantChunks);
        }
        Ok(relevant)
    }

    pub fn has_labels(&self) -> bool {
        self.relevant_ids().is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChunkRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relevant: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<usize>,
}

fn for_each_record<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T, usize) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        f(record, line_no)?;
    }
    Ok(())
}

/// Reads a chunk file, counting tokens with `tokenizer` unless the record
/// carries a `tokens` override.
pub fn ingest_corpus(path: &Path, tokenizer: &dyn Tokenizer) -> Result<Corpus> {
    let mut chunks = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for_each_record(path, |rec: ChunkRecord, line| {
        if seen.insert(rec.id.clone(), line).is_some() {
            return Err(Error::DuplicateId { id: rec.id, line });
        }
        let token_count = match rec.tokens {
            Some(n) if rec.text.is_empty() != (n == 0) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("token override {n} inconsistent with text"),
                })
            }
            Some(n) => n,
            None => count_tokens(&rec.text, tokenizer),
        };
        chunks.push(Chunk {
            id: rec.id,
            text: rec.text,
            token_count,
            relevant: rec.relevant,
        });
        Ok(())
    })?;
    Corpus::new(chunks)
}

pub fn ingest_queries(path: &Path) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for_each_record(path, |q: Query, line| {
        if seen.insert(q.id.clone(), line).is_some() {
            return Err(Error::DuplicateId { id: q.id, line });
        }
        queries.push(q);
        Ok(())
    })?;
    Ok(queries)
}

/// Writes `corpus` in the chunk-file format. Token counts are written as
/// explicit overrides so that re-ingestion is tokenizer independent.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let records = corpus.chunks().iter().map(|c| ChunkRecord {
        id: c.id.clone(),
        text: c.text.clone(),
        relevant: c.relevant,
        tokens: Some(c.token_count),
    });
    write_lines(path, records)
}

pub fn write_queries(queries: &[Query], path: &Path) -> Result<()> {
    write_lines(path, queries.iter())
}

fn write_lines<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
    }
    out.flush().map_err(|e| Error::io(ctx(), e))
}
