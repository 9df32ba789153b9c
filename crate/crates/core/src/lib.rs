//! Adaptive-k context selection.
//!
//! Given a query and a pre-chunked corpus, rank chunks by cosine similarity
//! and cut the ranking at the largest drop between consecutive scores (plus
//! a small buffer). Fixed-k, fixed-token, full-context, zero-shot and
//! two-stage self-route baselines share the same [`Selection`] output, and
//! the [`harness`] module measures all of them on synthetic corpora with
//! planted relevance.

pub mod cli;
pub mod corpus;
pub mod embed;
mod error;
pub mod harness;
pub mod metrics;
pub mod selection;
pub mod similarity;

pub use corpus::{count_tokens, ingest_corpus, ingest_queries, Chunk, Corpus, Query, Tokenizer, WhitespaceTokenizer};
pub use embed::{embed_corpus, embed_query, mock_embed, EmbeddingBackend, EmbeddingMatrix, HttpBackend, MockBackend};
pub use error::{Error, Result};
pub use selection::{
    adaptive_k_select, fixed_k_select, fixed_token_select, full_context_select, self_route_select, zero_shot_select,
    AdaptiveParams, AnswerabilityOracle, OracleKind, Selection, Strategy,
};
pub use similarity::{build_profile, cosine_scores, SimilarityProfile};
