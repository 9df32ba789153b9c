use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Query};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{context_recall, diff_k, mean_std, subem, token_reduction, QueryMetrics};
use crate::selection::Strategy;
use crate::similarity::{build_profile, cosine_scores, SimilarityProfile};

/// Where a query's similarity scores come from.
#[derive(Debug, Clone)]
pub enum ScoreSource {
    /// Scores in corpus order, bypassing any embedder.
    Planted(Vec<f64>),
    Embedded {
        query: Vec<f32>,
        matrix: Arc<EmbeddingMatrix>,
    },
    /// Scores could not be produced; every strategy gets an error row.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct EvalCase {
    pub corpus: Arc<Corpus>,
    pub query: Query,
    pub scores: ScoreSource,
}

impl EvalCase {
    fn profile(&self) -> Result<SimilarityProfile> {
        match &self.scores {
            ScoreSource::Planted(s) => {
                let ids: Vec<&str> = self.corpus.ids().collect();
                build_profile(s, &ids)
            }
            ScoreSource::Embedded { query, matrix } => {
                let scores = cosine_scores(query, matrix)?;
                build_profile(&scores, matrix.ids())
            }
            ScoreSource::Failed(msg) => Err(Error::Invalid(msg.clone())),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalParams {
    pub strategies: Vec<Strategy>,
    /// Fail before running when any corpus lacks relevance labels.
    pub require_labels: bool,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
    /// Reader outputs keyed by (canonical strategy label, query id).
    pub predictions: HashMap<(String, String), String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub strategy: String,
    pub query_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<QueryMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        mean_std(values).map(|(mean, std)| Stat {
            mean,
            std,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub strategy: String,
    pub n_queries: usize,
    pub n_errors: usize,
    pub recall: Option<Stat>,
    pub diff_k: Option<Stat>,
    pub n_input_tokens: Option<Stat>,
    pub n_chunks: Option<Stat>,
    pub reduction_pct: Option<Stat>,
    pub subem: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    /// Convention behind every `std` field.
    pub std_convention: String,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn aggregate(&self, strategy: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }

    /// Recomputes the aggregates from the rows and compares.
    pub fn verify_aggregates(&self) -> bool {
        let order: Vec<String> = self.aggregates.iter().map(|a| a.strategy.clone()).collect();
        aggregate(&self.rows, &order) == self.aggregates
    }
}

fn evaluate(case: &EvalCase, strategy: &Strategy, profile: &SimilarityProfile, params: &EvalParams) -> Result<QueryMetrics> {
    let corpus = &case.corpus;
    let sel = strategy.select(profile, corpus, &case.query)?;
    let labeled = corpus.has_labels();
    let (context_recall, diff_k) = if labeled {
        (Some(context_recall(&sel, corpus)?), Some(diff_k(&sel, profile, corpus)?))
    } else {
        (None, None)
    };
    let reduction_pct = if corpus.total_tokens() > 0 {
        Some(token_reduction(sel.selected_tokens as f64, corpus.total_tokens() as f64)?)
    } else {
        None
    };
    let subem = match (&case.query.answers, params.predictions.get(&(strategy.to_string(), case.query.id.clone()))) {
        (Some(answers), Some(pred)) if !answers.is_empty() => Some(subem(pred, answers)?),
        _ => None,
    };
    Ok(QueryMetrics {
        context_recall,
        diff_k,
        n_input_tokens: sel.selected_tokens,
        n_selected_chunks: sel.len(),
        reduction_pct,
        subem,
    })
}

fn run_case(case: &EvalCase, params: &EvalParams) -> Vec<(usize, Row)> {
    let profile = case.profile();
    params
        .strategies
        .iter()
        .enumerate()
        .map(|(i, strategy)| {
            let result = profile
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|p| evaluate(case, strategy, p, params).map_err(|e| e.to_string()));
            let (metrics, error) = match result {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e)),
            };
            (
                i,
                Row {
                    strategy: strategy.to_string(),
                    query_id: case.query.id.clone(),
                    metrics,
                    error,
                },
            )
        })
        .collect()
}

/// Runs every strategy on every case.
///
/// Per-query failures become error rows. Rows are ordered by strategy (in
/// configuration order) and then by query id before aggregation, so the
/// report does not depend on `jobs`.
pub fn run_eval(cases: &[EvalCase], params: &EvalParams, config: serde_json::Value) -> Result<EvalReport> {
    if params.strategies.is_empty() {
        return Err(Error::Invalid("no strategies to evaluate".into()));
    }
    if params.require_labels {
        for case in cases {
            case.corpus.relevant_ids()?;
        }
    }
    let serial = params
        .strategies
        .iter()
        .filter_map(Strategy::oracle)
        .any(|o| !o.build().is_concurrent());

    let mut rows: Vec<(usize, Row)> = if params.jobs > 1 && !serial {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.jobs)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| cases.par_iter().flat_map_iter(|c| run_case(c, params)).collect())
    } else {
        cases.iter().flat_map(|c| run_case(c, params)).collect()
    };
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.query_id.cmp(&b.1.query_id)));
    let rows: Vec<Row> = rows.into_iter().map(|(_, r)| r).collect();

    let order: Vec<String> = params.strategies.iter().map(Strategy::to_string).collect();
    let aggregates = aggregate(&rows, &order);
    Ok(EvalReport {
        config,
        std_convention: "population".into(),
        rows,
        aggregates,
    })
}

fn aggregate(rows: &[Row], order: &[String]) -> Vec<Aggregate> {
    let mut seen = Vec::new();
    for s in order {
        if !seen.contains(s) {
            seen.push(s.clone());
        }
    }
    seen.iter()
        .map(|strategy| {
            let mine: Vec<&Row> = rows.iter().filter(|r| &r.strategy == strategy).collect();
            let ok: Vec<&QueryMetrics> = mine.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let collect = |f: &dyn Fn(&QueryMetrics) -> Option<f64>| -> Option<Stat> {
                let v: Vec<f64> = ok.iter().filter_map(|m| f(m)).collect();
                Stat::of(&v)
            };
            Aggregate {
                strategy: strategy.clone(),
                n_queries: mine.len(),
                n_errors: mine.len() - ok.len(),
                recall: collect(&|m| m.context_recall),
                diff_k: collect(&|m| m.diff_k.map(|d| d as f64)),
                n_input_tokens: collect(&|m| Some(m.n_input_tokens as f64)),
                n_chunks: collect(&|m| Some(m.n_selected_chunks as f64)),
                reduction_pct: collect(&|m| m.reduction_pct),
                subem: collect(&|m| m.subem.map(f64::from)),
            }
        })
        .collect()
}
