//! Embedding backends and the embedding matrix they produce.

mod cache;
mod http;

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Query};
use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use http::{HttpBackend, DEFAULT_BATCH_SIZE, DEFAULT_TOKEN_ENV};

/// Something that turns texts into fixed-dimension vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn model_name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Must return exactly one `dim`-length vector per input, in order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Row-major N×d matrix with an id manifest. Rows are stored as produced;
/// norms are computed at construction and must be non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    model: String,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(model: impl Into<String>, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be >= 1".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                actual: data.len(),
            });
        }
        let mut norms = Vec::with_capacity(ids.len());
        for (id, row) in ids.iter().zip(data.chunks_exact(dim)) {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { id: id.clone() });
            }
            let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm { id: Some(id.clone()) });
            }
            norms.push(norm);
        }
        Ok(Self {
            model: model.into(),
            dim,
            ids,
            data,
            norms,
        })
    }

    pub fn from_rows(model: impl Into<String>, ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        if ids.len() != rows.len() {
            return Err(Error::Invalid(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        Self::new(model, dim, ids, data)
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f32]> {
        self.ids.iter().position(|x| x == id).map(|i| self.row(i))
    }

    /// Rows reordered (and possibly subset) to follow `ids`.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let index: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        let mut norms = Vec::with_capacity(ids.len());
        for id in ids {
            let i = *index.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
            data.extend_from_slice(self.row(i));
            norms.push(self.norms[i]);
        }
        Ok(Self {
            model: self.model.clone(),
            dim: self.dim,
            ids: ids.iter().map(|s| s.to_string()).collect(),
            data,
            norms,
        })
    }
}

/// Deterministic pseudo-random unit vector for `(text, seed)`.
///
/// The text is hashed with SHA-256 and the digest, together with `seed`,
/// seeds a ChaCha8 stream of standard normals. Output is identical on every
/// platform.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    assert!(dim >= 1, "mock_embed: dim must be >= 1");
    let digest = Sha256::digest(text.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    for (k, s) in key.iter_mut().zip(seed.to_le_bytes()) {
        *k ^= s;
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

/// Backend built on [`mock_embed`]; counts its invocations.
#[derive(Debug)]
pub struct MockBackend {
    dim: usize,
    seed: u64,
    name: String,
    calls: std::sync::atomic::AtomicUsize,
}

impl MockBackend {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            name: format!("mock-d{dim}-s{seed}"),
            calls: Default::default(),
        }
    }

    /// Number of `embed` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl EmbeddingBackend for MockBackend {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(texts.iter().map(|t| mock_embed(t, self.dim, self.seed)).collect())
    }
}

fn check_output(backend: &dyn EmbeddingBackend, ids: &[&str], out: &[Vec<f32>]) -> Result<()> {
    if out.len() != ids.len() {
        return Err(Error::Backend {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            message: format!("returned {} vectors for {} inputs", out.len(), ids.len()),
        });
    }
    for v in out {
        if v.len() != backend.dim() {
            return Err(Error::DimensionMismatch {
                expected: backend.dim(),
                actual: v.len(),
            });
        }
    }
    Ok(())
}

pub fn embed_query(query: &Query, backend: &dyn EmbeddingBackend) -> Result<Vec<f32>> {
    if query.text.is_empty() {
        return Err(Error::Invalid(format!("query `{}` has empty text", query.id)));
    }
    let mut out = backend.embed(&[query.text.as_str()])?;
    check_output(backend, &[query.id.as_str()], &out)?;
    Ok(out.pop().expect("one vector"))
}

/// Embeds `corpus` through a write-through cache at `cache_path`.
///
/// Rows already cached (matched by chunk id) are reused; only missing chunks
/// reach the backend. A cache produced by a different model or dimension is
/// rejected rather than silently overwritten.
pub fn embed_corpus(corpus: &Corpus, backend: &dyn EmbeddingBackend, cache_path: &Path) -> Result<EmbeddingMatrix> {
    embed_corpus_counted(corpus, backend, cache_path).map(|(m, _)| m)
}

/// [`embed_corpus`], also returning how many chunks reached the backend.
pub fn embed_corpus_counted(
    corpus: &Corpus,
    backend: &dyn EmbeddingBackend,
    cache_path: &Path,
) -> Result<(EmbeddingMatrix, usize)> {
    let empty: Vec<&str> = corpus
        .chunks()
        .iter()
        .filter(|c| c.text.is_empty())
        .map(|c| c.id.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(Error::Invalid(format!(
            "cannot embed chunks with empty text: {}",
            empty.join(", ")
        )));
    }

    let cached = if cache_path.exists() {
        let m = read_cache(cache_path)?;
        if m.dim() != backend.dim() {
            return Err(Error::DimensionMismatch {
                expected: backend.dim(),
                actual: m.dim(),
            });
        }
        if m.model() != backend.model_name() {
            return Err(Error::Cache {
                path: cache_path.to_path_buf(),
                message: format!(
                    "written by model `{}`, backend is `{}`",
                    m.model(),
                    backend.model_name()
                ),
            });
        }
        Some(m)
    } else {
        None
    };

    let ids: Vec<&str> = corpus.ids().collect();
    let have: HashMap<&str, usize> = cached
        .as_ref()
        .map(|m| m.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
        .unwrap_or_default();
    let missing: Vec<usize> = (0..corpus.len()).filter(|&i| !have.contains_key(ids[i])).collect();

    if missing.is_empty() {
        if let Some(m) = &cached {
            return Ok((m.select(&ids)?, 0));
        }
    }

    let texts: Vec<&str> = missing.iter().map(|&i| corpus.chunks()[i].text.as_str()).collect();
    let missing_ids: Vec<&str> = missing.iter().map(|&i| ids[i]).collect();
    let fresh = if texts.is_empty() {
        Vec::new()
    } else {
        let out = backend.embed(&texts).map_err(|e| match e {
            Error::Backend { message, .. } => Error::Backend {
                ids: missing_ids.iter().map(|s| s.to_string()).collect(),
                message,
            },
            other => other,
        })?;
        check_output(backend, &missing_ids, &out)?;
        out
    };

    // Merged cache keeps previously cached rows, then appends new ones.
    let mut all_ids: Vec<String> = Vec::new();
    let mut all_rows: Vec<Vec<f32>> = Vec::new();
    if let Some(m) = &cached {
        all_ids.extend(m.ids().iter().cloned());
        all_rows.extend(m.rows().map(<[f32]>::to_vec));
    }
    all_ids.extend(missing_ids.iter().map(|s| s.to_string()));
    all_rows.extend(fresh);
    let merged = EmbeddingMatrix::from_rows(backend.model_name(), all_ids, all_rows)?;
    write_cache(&merged, cache_path)?;
    Ok((merged.select(&ids)?, missing.len()))
}
