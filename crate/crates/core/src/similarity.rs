//! Query-to-corpus cosine similarity and the sorted score profile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 4096;

/// Cosine similarity of `query` against every row of `matrix`, in row order.
///
/// Products are accumulated in `f64`.
pub fn cosine_scores(query: &[f32], matrix: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if query.len() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: query.len(),
        });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { id: "<query>".into() });
    }
    let q: Vec<f64> = query.iter().map(|&x| f64::from(x)).collect();
    let q_norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if q_norm == 0.0 {
        return Err(Error::ZeroNorm { id: None });
    }

    let dim = matrix.dim();
    let score = |(row, &norm): (&[f32], &f64)| -> f64 {
        let dot: f64 = row.iter().zip(&q).map(|(&c, &q)| f64::from(c) * q).sum();
        dot / (q_norm * norm)
    };
    let rows = matrix.as_slice();
    let norms = matrix.norms();
    let scores = if matrix.len() >= PAR_THRESHOLD {
        rows.par_chunks_exact(dim).zip(norms.par_iter()).map(score).collect()
    } else {
        rows.chunks_exact(dim).zip(norms.iter()).map(score).collect()
    };
    Ok(scores)
}

/// Scores sorted in descending order, with the ids in matching order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    sorted_scores: Vec<f64>,
    ranking: Vec<String>,
    raw_scores: Vec<f64>,
}

impl SimilarityProfile {
    pub fn sorted_scores(&self) -> &[f64] {
        &self.sorted_scores
    }

    /// Chunk ids, most similar first.
    pub fn ranking(&self) -> &[String] {
        &self.ranking
    }

    /// Scores in the order they were supplied.
    pub fn raw_scores(&self) -> &[f64] {
        &self.raw_scores
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }
}

/// Sorts `raw_scores` descending. Ties go to the smaller id so the order
/// does not depend on input order.
pub fn build_profile<S: AsRef<str>>(raw_scores: &[f64], ids: &[S]) -> Result<SimilarityProfile> {
    if raw_scores.len() != ids.len() {
        return Err(Error::Invalid(format!(
            "{} scores for {} ids",
            raw_scores.len(),
            ids.len()
        )));
    }
    if let Some(i) = raw_scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            id: ids[i].as_ref().to_string(),
        });
    }
    let mut order: Vec<usize> = (0..raw_scores.len()).collect();
    order.sort_by(|&a, &b| {
        raw_scores[b]
            .total_cmp(&raw_scores[a])
            .then_with(|| ids[a].as_ref().cmp(ids[b].as_ref()))
    });
    Ok(SimilarityProfile {
        sorted_scores: order.iter().map(|&i| raw_scores[i]).collect(),
        ranking: order.iter().map(|&i| ids[i].as_ref().to_string()).collect(),
        raw_scores: raw_scores.to_vec(),
    })
}
