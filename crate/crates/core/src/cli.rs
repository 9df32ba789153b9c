//! Command-line front end: `embed`, `retrieve`, `eval` and `synth`.
//!
//! Exit codes: 0 on success, 2 for configuration or validation errors, 3
//! for backend and IO failures.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{ingest_corpus, ingest_queries, write_corpus, write_queries, Corpus, Query, WhitespaceTokenizer};
use crate::embed::{
    embed_corpus_counted, embed_query, read_cache, write_cache, EmbeddingBackend, EmbeddingMatrix, HttpBackend,
    MockBackend, DEFAULT_BATCH_SIZE, DEFAULT_TOKEN_ENV,
};
use crate::error::{Error, Result};
use crate::harness::{
    emit_report, generate_synthetic, plant_embeddings, read_report, run_eval, summary_table, EvalCase, EvalParams,
    ReportFormat, ScoreSource, SynthSpec,
};
use crate::selection::{AdaptiveParams, Strategy};
use crate::similarity::{build_profile, cosine_scores};

#[derive(Debug, Parser)]
#[command(name = "adaptive-k", version, about = "Adaptive-k context selection and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a corpus (and optionally its queries) into a cache file.
    Embed(EmbedArgs),
    /// Select context chunks for one query and print them as JSON lines.
    Retrieve(RetrieveArgs),
    /// Run a strategy sweep and write a report.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with planted relevance.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
    /// Read-only: every vector must already be cached.
    None,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Endpoint for the http backend.
    #[arg(long)]
    pub url: Option<String>,
    /// Model name recorded in the cache (http backend).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Concurrent batches for the http backend.
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = DEFAULT_TOKEN_ENV)]
    pub token_env: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock {
        dim: usize,
        seed: u64,
    },
    Http {
        url: String,
        model: String,
        dim: usize,
        batch_size: usize,
        concurrency: usize,
        token_env: String,
    },
    None,
}

impl BackendArgs {
    fn resolve(&self, seed: u64) -> Result<BackendConfig> {
        if self.dim == 0 {
            return Err(Error::Invalid("--dim must be >= 1".into()));
        }
        Ok(match self.backend {
            BackendKind::Mock => BackendConfig::Mock { dim: self.dim, seed },
            BackendKind::Http => BackendConfig::Http {
                url: self
                    .url
                    .clone()
                    .ok_or_else(|| Error::Invalid("--backend http needs --url".into()))?,
                model: self.model.clone().unwrap_or_else(|| "http".into()),
                dim: self.dim,
                batch_size: self.batch_size,
                concurrency: self.concurrency,
                token_env: self.token_env.clone(),
            },
            BackendKind::None => BackendConfig::None,
        })
    }
}

impl BackendConfig {
    fn build(&self) -> Option<Box<dyn EmbeddingBackend>> {
        match self {
            BackendConfig::Mock { dim, seed } => Some(Box::new(MockBackend::new(*dim, *seed))),
            BackendConfig::Http {
                url,
                model,
                dim,
                batch_size,
                concurrency,
                token_env,
            } => Some(Box::new(
                HttpBackend::new(url.clone(), model.clone(), *dim)
                    .with_batch_size(*batch_size)
                    .with_concurrency(*concurrency)
                    .with_token_env(token_env),
            )),
            BackendConfig::None => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Also embed these queries into `--query-cache`.
    #[arg(long, requires = "query_cache")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub query_cache: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Corpus embedding cache; created or extended as needed.
    #[arg(long)]
    pub cache: PathBuf,
    /// Query file; pick the query with `--query-id`.
    #[arg(long, requires = "query_id", conflicts_with = "query")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub query_id: Option<String>,
    /// Ad-hoc query text.
    #[arg(long)]
    pub query: Option<String>,
    /// Cache holding precomputed query vectors, keyed by query id.
    #[arg(long)]
    pub query_cache: Option<PathBuf>,
    #[arg(long, default_value = "adaptive")]
    pub strategy: String,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 100_000)]
    pub total_tokens: u64,
    #[arg(long, default_value_t = 10_000)]
    pub info_amount: u64,
    #[arg(long, default_value_t = 40)]
    pub chunk_tokens: usize,
    /// Similarity range of relevant chunks, `low,high`.
    #[arg(long, default_value = "0.55,0.85", value_parser = parse_range)]
    pub relevant_sim: (f64, f64),
    #[arg(long, default_value = "0.05,0.45", value_parser = parse_range)]
    pub irrelevant_sim: (f64, f64),
    /// Probability that a chunk's similarity comes from the other class.
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

impl SynthFlags {
    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            total_tokens: self.total_tokens,
            info_amount: self.info_amount,
            chunk_tokens_mean: self.chunk_tokens,
            seed,
            relevant_sim: self.relevant_sim,
            irrelevant_sim: self.irrelevant_sim,
            noise_overlap: self.overlap,
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `low,high`, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write planted embeddings of this dimension (`corpus.akec`,
    /// `queries.akec`).
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Re-run from the configuration embedded in an earlier JSON report.
    #[arg(long, conflicts_with_all = ["corpus", "synth"])]
    pub from_report: Option<PathBuf>,
    #[arg(long, requires = "queries", conflicts_with = "synth")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub query_cache: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Evaluate on generated corpora instead of files.
    #[arg(long)]
    pub synth: bool,
    #[command(flatten)]
    pub synth_flags: SynthFlags,
    /// Number of synthetic corpora (seeds `seed`, `seed + 1`, ...).
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    /// Score synthetic corpora through planted embeddings of this dimension.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Strategy spec; repeat for several. Defaults to adaptive, fixedtok:5000,
    /// full and zeroshot.
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
    /// Buffer applied to a bare `adaptive` strategy.
    #[arg(long, default_value_t = crate::selection::DEFAULT_BUFFER)]
    pub buffer: usize,
    /// Search fraction applied to a bare `adaptive` strategy.
    #[arg(long, default_value_t = crate::selection::DEFAULT_SEARCH_FRACTION)]
    pub frac: f64,
    /// Skip recall and diff-k instead of failing on unlabeled corpora.
    #[arg(long)]
    pub no_recall: bool,
    /// JSON lines of `{"strategy", "query_id", "prediction"}` for SubEM.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub spec: SynthSpec,
    pub replicates: u64,
    pub embed_dim: Option<usize>,
}

/// Fully resolved `eval` configuration. Embedded in every report; output
/// location and parallelism are excluded because they do not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub query_cache: Option<PathBuf>,
    pub backend: Option<BackendConfig>,
    pub synth: Option<SynthRun>,
    pub strategies: Vec<Strategy>,
    pub adaptive: AdaptiveParams,
    pub seed: u64,
    pub require_labels: bool,
    pub predictions: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.adaptive.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::Invalid("no strategies given".into()));
        }
        match (&self.synth, &self.corpus, &self.queries) {
            (Some(s), None, None) => {
                s.spec.validate()?;
                if s.replicates == 0 {
                    return Err(Error::Invalid("--replicates must be >= 1".into()));
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => {
                return Err(Error::Invalid(
                    "give either --synth or both --corpus and --queries".into(),
                ))
            }
        }
        Ok(())
    }
}

pub fn parse_strategies(specs: &[String], adaptive: AdaptiveParams) -> Result<Vec<Strategy>> {
    let specs: Vec<&str> = if specs.is_empty() {
        vec!["adaptive", "fixedtok:5000", "full", "zeroshot"]
    } else {
        specs.iter().map(String::as_str).collect()
    };
    specs
        .iter()
        .map(|s| {
            if s.trim() == "adaptive" {
                Ok(Strategy::Adaptive(adaptive))
            } else {
                s.parse()
            }
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Embed(a) => cmd_embed(&a),
        Command::Retrieve(a) => cmd_retrieve(&a, &mut std::io::stdout().lock()),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn require_backend(config: &BackendConfig) -> Result<Box<dyn EmbeddingBackend>> {
    config
        .build()
        .ok_or_else(|| Error::Invalid("this command needs an embedding backend (mock or http)".into()))
}

/// Corpus matrix through the cache, or straight from the cache when no
/// backend is configured.
fn corpus_matrix(corpus: &Corpus, backend: Option<&dyn EmbeddingBackend>, cache: &Path) -> Result<EmbeddingMatrix> {
    match backend {
        Some(b) => Ok(embed_corpus_counted(corpus, b, cache)?.0),
        None => {
            let ids: Vec<&str> = corpus.ids().collect();
            read_cache(cache)?.select(&ids)
        }
    }
}

fn query_vector(query: &Query, backend: Option<&dyn EmbeddingBackend>, query_cache: Option<&EmbeddingMatrix>) -> Result<Vec<f32>> {
    if let Some(row) = query_cache.and_then(|m| m.row_by_id(&query.id)) {
        return Ok(row.to_vec());
    }
    match backend {
        Some(b) => embed_query(query, b),
        None => Err(Error::UnknownId(format!("query `{}` not in query cache", query.id))),
    }
}

pub fn cmd_embed(args: &EmbedArgs) -> Result<()> {
    let config = args.backend.resolve(args.seed)?;
    let backend = require_backend(&config)?;
    let corpus = ingest_corpus(&args.corpus, &WhitespaceTokenizer)?;
    let (matrix, fresh) = embed_corpus_counted(&corpus, backend.as_ref(), &args.cache)?;
    if fresh == 0 {
        eprintln!("cache hit: {} rows, dim {}", matrix.len(), matrix.dim());
    } else {
        eprintln!("embedded {fresh} chunk(s); cache holds dim {}", matrix.dim());
    }
    if let (Some(qpath), Some(qcache)) = (&args.queries, &args.query_cache) {
        let queries = ingest_queries(qpath)?;
        let rows = queries
            .iter()
            .map(|q| embed_query(q, backend.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let ids = queries.iter().map(|q| q.id.clone()).collect();
        let m = EmbeddingMatrix::from_rows(backend.model_name(), ids, rows)?;
        write_cache(&m, qcache)?;
        eprintln!("embedded {} query(ies)", m.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct RetrievedLine<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
    tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_value: Option<f64>,
}

pub fn cmd_retrieve(args: &RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let strategy: Strategy = args.strategy.parse()?;
    let config = args.backend.resolve(args.seed)?;
    let backend = config.build();
    let corpus = ingest_corpus(&args.corpus, &WhitespaceTokenizer)?;
    let query = match (&args.queries, &args.query_id, &args.query) {
        (Some(path), Some(id), _) => ingest_queries(path)?
            .into_iter()
            .find(|q| &q.id == id)
            .ok_or_else(|| Error::UnknownId(id.clone()))?,
        (None, _, Some(text)) => Query {
            id: args.query_id.clone().unwrap_or_else(|| "query".into()),
            text: text.clone(),
            answers: None,
        },
        _ => return Err(Error::Invalid("give --queries with --query-id, or --query".into())),
    };
    let matrix = corpus_matrix(&corpus, backend.as_deref(), &args.cache)?;
    let qcache = args.query_cache.as_deref().map(read_cache).transpose()?;
    let qvec = query_vector(&query, backend.as_deref(), qcache.as_ref())?;
    let scores = cosine_scores(&qvec, &matrix)?;
    let profile = build_profile(&scores, matrix.ids())?;
    let sel = strategy.select(&profile, &corpus, &query)?;
    let io = |e| Error::io("write stdout", e);
    for (rank, id) in sel.selected_ids.iter().enumerate() {
        let line = RetrievedLine {
            rank,
            id,
            score: profile.sorted_scores()[rank],
            tokens: corpus.get(id).map_or(0, |c| c.token_count),
            gap_index: sel.gap_index,
            gap_value: sel.gap_value,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

impl EvalArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        if let Some(path) = &self.from_report {
            let report = read_report(path)?;
            let config: RunConfig = serde_json::from_value(report.config)?;
            config.validate()?;
            return Ok(config);
        }
        let adaptive = AdaptiveParams {
            buffer: self.buffer,
            search_fraction: self.frac,
        };
        adaptive.validate()?;
        let strategies = parse_strategies(&self.strategies, adaptive)?;
        let synth = self.synth.then(|| SynthRun {
            spec: self.synth_flags.spec(self.seed),
            replicates: self.replicates,
            embed_dim: self.embed_dim,
        });
        let backend = if self.synth {
            None
        } else {
            Some(self.backend.resolve(self.seed)?)
        };
        let config = RunConfig {
            subcommand: "eval".into(),
            corpus: self.corpus.clone(),
            queries: self.queries.clone(),
            cache: self.cache.clone(),
            query_cache: self.query_cache.clone(),
            backend,
            synth,
            strategies,
            adaptive,
            seed: self.seed,
            require_labels: !self.no_recall,
            predictions: self.predictions.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Deserialize)]
struct PredictionRecord {
    strategy: String,
    query_id: String,
    prediction: String,
}

fn load_predictions(path: &Path) -> Result<HashMap<(String, String), String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let strategy: Strategy = rec.strategy.parse()?;
        out.insert((strategy.to_string(), rec.query_id), rec.prediction);
    }
    Ok(out)
}

/// Builds evaluation cases for a resolved configuration.
pub fn build_cases(config: &RunConfig) -> Result<Vec<EvalCase>> {
    if let Some(s) = &config.synth {
        return (0..s.replicates)
            .map(|r| {
                let spec = SynthSpec {
                    seed: s.spec.seed.wrapping_add(r),
                    ..s.spec.clone()
                };
                let case = generate_synthetic(&spec)?;
                let scores = match s.embed_dim {
                    Some(dim) => {
                        let (matrix, query) = plant_embeddings(&case, dim, spec.seed)?;
                        ScoreSource::Embedded {
                            query,
                            matrix: Arc::new(matrix),
                        }
                    }
                    None => ScoreSource::Planted(case.scores),
                };
                Ok(EvalCase {
                    corpus: Arc::new(case.corpus),
                    query: case.query,
                    scores,
                })
            })
            .collect();
    }

    let corpus_path = config.corpus.as_ref().expect("validated");
    let corpus = Arc::new(ingest_corpus(corpus_path, &WhitespaceTokenizer)?);
    let queries = ingest_queries(config.queries.as_ref().expect("validated"))?;
    let backend = config.backend.as_ref().and_then(BackendConfig::build);
    let matrix = match (&config.cache, backend.as_deref()) {
        (Some(cache), b) => corpus_matrix(&corpus, b, cache)?,
        (None, Some(b)) => {
            let texts: Vec<&str> = corpus.chunks().iter().map(|c| c.text.as_str()).collect();
            let ids = corpus.ids().map(str::to_string).collect();
            EmbeddingMatrix::from_rows(b.model_name(), ids, b.embed(&texts)?)?
        }
        (None, None) => return Err(Error::Invalid("--backend none needs --cache".into())),
    };
    let matrix = Arc::new(matrix);
    let qcache = config.query_cache.as_deref().map(read_cache).transpose()?;
    Ok(queries
        .into_iter()
        .map(|query| {
            let scores = match query_vector(&query, backend.as_deref(), qcache.as_ref()) {
                Ok(v) => ScoreSource::Embedded {
                    query: v,
                    matrix: matrix.clone(),
                },
                Err(e) => ScoreSource::Failed(e.to_string()),
            };
            EvalCase {
                corpus: corpus.clone(),
                query,
                scores,
            }
        })
        .collect())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = args.resolve()?;
    let cases = build_cases(&config)?;
    let params = EvalParams {
        strategies: config.strategies.clone(),
        require_labels: config.require_labels,
        jobs: args.jobs.max(1),
        predictions: match &config.predictions {
            Some(p) => load_predictions(p)?,
            None => HashMap::new(),
        },
    };
    let report = run_eval(&cases, &params, serde_json::to_value(&config)?)?;
    emit_report(&report, args.format, &args.out)?;
    print!("{}", summary_table(&report));
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = args.synth.spec(args.seed);
    let case = generate_synthetic(&spec)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    write_corpus(&case.corpus, &dir.join("corpus.jsonl"))?;
    write_queries(std::slice::from_ref(&case.query), &dir.join("queries.jsonl"))?;
    if let Some(dim) = args.embed_dim {
        let (matrix, q) = plant_embeddings(&case, dim, spec.seed)?;
        let qm = EmbeddingMatrix::from_rows(matrix.model(), vec![case.query.id.clone()], vec![q])?;
        write_cache(&matrix, &dir.join("corpus.akec"))?;
        write_cache(&qm, &dir.join("queries.akec"))?;
    }
    let snapshot = serde_json::json!({ "subcommand": "synth", "spec": spec, "embed_dim": args.embed_dim });
    std::fs::write(dir.join("synth.json"), serde_json::to_string_pretty(&snapshot)? + "\n")
        .map_err(|e| Error::io("write synth.json", e))?;
    eprintln!(
        "wrote {} chunks ({} tokens, {} relevant) to {}",
        case.corpus.len(),
        case.corpus.total_tokens(),
        case.corpus.chunks().iter().filter(|c| c.relevant == Some(true)).count(),
        dir.display()
    );
    Ok(())
}
