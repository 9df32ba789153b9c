//! Controlled-information synthetic corpora.
//!
//! A corpus of `total_tokens` tokens is split into chunks, of which exactly
//! `info_amount` tokens are labeled relevant. Each chunk gets a planted
//! query similarity drawn uniformly from its class range; with probability
//! `noise_overlap` a chunk draws from the other class's range instead.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Corpus, Query};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::similarity::{build_profile, SimilarityProfile};

const FILLER: &[&str] = &[
    "the", "river", "market", "season", "ledger", "window", "harbor", "quiet", "stone", "paper",
    "engine", "valley", "signal", "copper", "orchard", "morning", "bridge", "lantern", "meadow",
    "thread", "garden", "winter", "canvas", "pillar", "archive",
];

const EVIDENCE: &[&str] = &[
    "record", "entry", "value", "total", "count", "region", "product", "quarter", "revenue",
    "category", "employee", "department", "rating", "price", "units", "year",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub total_tokens: u64,
    /// Tokens of relevant content.
    pub info_amount: u64,
    pub chunk_tokens_mean: usize,
    pub seed: u64,
    pub relevant_sim: (f64, f64),
    pub irrelevant_sim: (f64, f64),
    /// Probability that a chunk takes its similarity from the other class.
    pub noise_overlap: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            total_tokens: 100_000,
            info_amount: 10_000,
            chunk_tokens_mean: 40,
            seed: 0,
            relevant_sim: (0.55, 0.85),
            irrelevant_sim: (0.05, 0.45),
            noise_overlap: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("synthetic spec: {m}")));
        if self.total_tokens == 0 {
            return bad("total_tokens must be positive".into());
        }
        if self.info_amount == 0 || self.info_amount > self.total_tokens {
            return bad(format!(
                "info_amount {} must be in [1, total_tokens = {}]",
                self.info_amount, self.total_tokens
            ));
        }
        if self.chunk_tokens_mean == 0 {
            return bad("chunk_tokens_mean must be positive".into());
        }
        for (name, (lo, hi)) in [("relevant_sim", self.relevant_sim), ("irrelevant_sim", self.irrelevant_sim)] {
            if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo > hi {
                return bad(format!("{name} ({lo}, {hi}) must be an ordered range within [-1, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_overlap) {
            return bad(format!("noise_overlap {} must be in [0, 1)", self.noise_overlap));
        }
        if self.noise_overlap == 0.0 && self.relevant_sim.0 <= self.irrelevant_sim.1 {
            return bad("without noise, relevant_sim must lie strictly above irrelevant_sim".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub corpus: Corpus,
    pub query: Query,
    /// Planted similarity per chunk, in corpus order.
    pub scores: Vec<f64>,
    pub profile: SimilarityProfile,
}

/// Splits `total` into lengths drawn around `mean`; the last piece absorbs
/// the remainder so the sum is exact.
fn chunk_lengths(total: u64, mean: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let lo = (mean / 2).max(1);
    let hi = mean + mean / 2;
    let mut left = total;
    let mut out = Vec::new();
    while left > 0 {
        let len = (rng.random_range(lo..=hi) as u64).min(left);
        out.push(len as usize);
        left -= len;
    }
    out
}

fn words(n: usize, vocab: &[&str], lead: Option<&str>, rng: &mut ChaCha8Rng) -> String {
    let mut text = String::with_capacity(n * 8);
    for i in 0..n {
        if i > 0 {
            text.push(' ');
        }
        match (i, lead) {
            (0, Some(w)) => text.push_str(w),
            _ => text.push_str(vocab[rng.random_range(0..vocab.len())]),
        }
    }
    text
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let needle = format!("needle-{}", spec.seed);

    let relevant = chunk_lengths(spec.info_amount, spec.chunk_tokens_mean, &mut rng);
    let irrelevant = chunk_lengths(spec.total_tokens - spec.info_amount, spec.chunk_tokens_mean, &mut rng);
    let mut layout: Vec<(bool, usize)> = relevant
        .into_iter()
        .map(|n| (true, n))
        .chain(irrelevant.into_iter().map(|n| (false, n)))
        .collect();
    layout.shuffle(&mut rng);

    let mut chunks = Vec::with_capacity(layout.len());
    let mut scores = Vec::with_capacity(layout.len());
    for (i, &(is_relevant, len)) in layout.iter().enumerate() {
        let text = if is_relevant {
            words(len, EVIDENCE, Some(&needle), &mut rng)
        } else {
            words(len, FILLER, None, &mut rng)
        };
        let flipped = spec.noise_overlap > 0.0 && rng.random_bool(spec.noise_overlap);
        let (lo, hi) = if is_relevant != flipped {
            spec.relevant_sim
        } else {
            spec.irrelevant_sim
        };
        let score = if hi > lo { rng.random_range(lo..hi) } else { lo };
        chunks.push(Chunk {
            id: format!("c{i:05}"),
            text,
            token_count: len,
            relevant: Some(is_relevant),
        });
        scores.push(score);
    }

    let corpus = Corpus::new(chunks)?;
    let ids: Vec<&str> = corpus.ids().collect();
    let profile = build_profile(&scores, &ids)?;
    let query = Query {
        id: format!("synth-s{}-i{}", spec.seed, spec.info_amount),
        text: format!("Which records mention {needle}?"),
        answers: Some(vec![needle]),
    };
    Ok(SynthCase {
        corpus,
        query,
        scores,
        profile,
    })
}

/// Builds embeddings whose cosine against the returned query vector equals
/// each chunk's planted score (up to `f32` rounding).
///
/// Every row is `s * q + sqrt(1 - s^2) * u` with `u` a random unit vector
/// orthogonal to `q`.
pub fn plant_embeddings(case: &SynthCase, dim: usize, seed: u64) -> Result<(EmbeddingMatrix, Vec<f32>)> {
    if dim < 2 {
        return Err(Error::Invalid("planted embeddings need dim >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e1b);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    };
    let q = unit(&mut rng);
    let mut rows = Vec::with_capacity(case.scores.len());
    for &s in &case.scores {
        let u = loop {
            let mut u = unit(&mut rng);
            let proj: f64 = u.iter().zip(&q).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(&q).for_each(|(a, b)| *a -= proj * b);
            let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                break u.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let c = (1.0 - s * s).max(0.0).sqrt();
        rows.push(q.iter().zip(&u).map(|(a, b)| (s * a + c * b) as f32).collect());
    }
    let ids = case.corpus.ids().map(str::to_string).collect();
    let matrix = EmbeddingMatrix::from_rows(format!("planted-d{dim}"), ids, rows)?;
    Ok((matrix, q.into_iter().map(|x| x as f32).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{context_recall, true_k};
    use crate::selection::{adaptive_k_select, AdaptiveParams};
    use crate::similarity::cosine_scores;

    fn small() -> SynthSpec {
        SynthSpec {
            total_tokens: 10_000,
            info_amount: 1_000,
            chunk_tokens_mean: 50,
            seed: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn label_counts_match_info_amount() {
        let case = generate_synthetic(&small()).unwrap();
        let rel: Vec<&Chunk> = case.corpus.chunks().iter().filter(|c| c.relevant == Some(true)).collect();
        let rel_tokens: usize = rel.iter().map(|c| c.token_count).sum();
        assert_eq!(rel_tokens, 1000);
        assert_eq!(case.corpus.total_tokens(), 10_000);
        // Mean chunk length 50: about 20 relevant of about 200.
        assert!((14..=30).contains(&rel.len()), "{}", rel.len());
        assert!((150..=260).contains(&case.corpus.len()), "{}", case.corpus.len());
        for (c, s) in case.corpus.chunks().iter().zip(&case.scores) {
            if c.relevant == Some(true) {
                assert!(*s >= 0.55);
            } else {
                assert!(*s < 0.45);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.scores, b.scores);
        let c = generate_synthetic(&SynthSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(a.scores, c.scores);
    }

    #[test]
    fn clean_corpus_gives_full_recall() {
        for seed in 0..10 {
            let case = generate_synthetic(&SynthSpec { seed, ..small() }).unwrap();
            let params = AdaptiveParams::default();
            let sel = adaptive_k_select(&case.profile, &case.corpus, &params).unwrap();
            let tk = true_k(&case.profile, &case.corpus).unwrap() as i64;
            assert_eq!(context_recall(&sel, &case.corpus).unwrap(), 100.0);
            assert!((sel.cutoff_k - tk).abs() <= params.buffer as i64);
        }
    }

    #[test]
    fn infeasible_specs() {
        for spec in [
            SynthSpec { info_amount: 20_000, ..small() },
            SynthSpec { info_amount: 0, ..small() },
            SynthSpec { chunk_tokens_mean: 0, ..small() },
            SynthSpec { relevant_sim: (0.3, 0.6), ..small() },
            SynthSpec { noise_overlap: 1.0, ..small() },
            SynthSpec { irrelevant_sim: (-2.0, 0.1), ..small() },
        ] {
            assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn planted_embeddings_reproduce_scores() {
        let case = generate_synthetic(&small()).unwrap();
        let (m, q) = plant_embeddings(&case, 32, 1).unwrap();
        let cos = cosine_scores(&q, &m).unwrap();
        for (a, b) in cos.iter().zip(&case.scores) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
