//! Retrieval strategies. Every strategy selects a prefix of the similarity
//! ranking; they differ only in where the prefix ends.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Corpus, Query};
use crate::error::{Error, Result};
use crate::similarity::SimilarityProfile;

pub const DEFAULT_BUFFER: usize = 5;
pub const DEFAULT_SEARCH_FRACTION: f64 = 0.9;
pub const DEFAULT_SELF_ROUTE_BUDGET: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Extra chunks taken past the largest gap.
    pub buffer: usize,
    /// Leading share of the ranking in which the gap is searched, in (0, 1].
    pub search_fraction: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            buffer: DEFAULT_BUFFER,
            search_fraction: DEFAULT_SEARCH_FRACTION,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_fraction > 0.0 && self.search_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "search fraction must be in (0, 1], got {}",
                self.search_fraction
            )));
        }
        Ok(())
    }

    /// Number of leading positions within which a gap must complete.
    /// Always at least 1.
    pub fn window(&self, n: usize) -> usize {
        // Absorb representation error so that e.g. 0.9 * 10 does not round up to 10.
        let w = (self.search_fraction * n as f64 - 1e-9).ceil();
        (w.max(1.0) as usize).min(n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    AlwaysYes,
    AlwaysNo,
    LabelHeuristic,
}

impl OracleKind {
    pub fn name(self) -> &'static str {
        match self {
            OracleKind::AlwaysYes => "always-yes",
            OracleKind::AlwaysNo => "always-no",
            OracleKind::LabelHeuristic => "label-heuristic",
        }
    }

    pub fn build(self) -> Box<dyn AnswerabilityOracle> {
        match self {
            OracleKind::AlwaysYes => Box::new(AlwaysYes),
            OracleKind::AlwaysNo => Box::new(AlwaysNo),
            OracleKind::LabelHeuristic => Box::new(LabelHeuristic),
        }
    }
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "always-yes" => Ok(OracleKind::AlwaysYes),
            "always-no" => Ok(OracleKind::AlwaysNo),
            "label-heuristic" => Ok(OracleKind::LabelHeuristic),
            _ => Err(format!(
                "unknown oracle `{s}` (expected always-yes, always-no or label-heuristic)"
            )),
        }
    }
}

/// A parsed strategy specification.
///
/// Grammar: `adaptive[:B=<int>,frac=<float>]`, `fixedk:<int>`,
/// `fixedtok:<int>`, `full`, `zeroshot`,
/// `selfroute[:budget=<int>,oracle=<name>]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Adaptive(AdaptiveParams),
    FixedK(usize),
    FixedTokens(u64),
    Full,
    ZeroShot,
    SelfRoute { budget: u64, oracle: OracleKind },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Adaptive(p) => write!(f, "adaptive:B={},frac={}", p.buffer, p.search_fraction),
            Strategy::FixedK(k) => write!(f, "fixedk:{k}"),
            Strategy::FixedTokens(n) => write!(f, "fixedtok:{n}"),
            Strategy::Full => f.write_str("full"),
            Strategy::ZeroShot => f.write_str("zeroshot"),
            Strategy::SelfRoute { budget, oracle } => {
                write!(f, "selfroute:budget={budget},oracle={}", oracle.name())
            }
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn key_values<'a>(spec: &str, args: &'a str) -> Result<Vec<(&'a str, &'a str)>> {
    args.split(',')
        .map(|kv| {
            kv.split_once('=').ok_or_else(|| Error::Strategy {
                spec: spec.into(),
                reason: format!("expected key=value, got `{kv}`"),
            })
        })
        .collect()
}

fn num<T: FromStr>(spec: &str, what: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Strategy {
        spec: spec.into(),
        reason: format!("`{v}` is not a valid {what}"),
    })
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, args) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        let bad = |reason: &str| Error::Strategy {
            spec: spec.into(),
            reason: reason.into(),
        };
        let strategy = match (head, args) {
            ("adaptive", None) => Strategy::Adaptive(AdaptiveParams::default()),
            ("adaptive", Some(args)) => {
                let mut p = AdaptiveParams::default();
                for (k, v) in key_values(spec, args)? {
                    match k.trim() {
                        "B" | "b" => p.buffer = num(spec, "buffer size", v)?,
                        "frac" => p.search_fraction = num(spec, "fraction", v)?,
                        other => return Err(bad(&format!("unknown adaptive parameter `{other}`"))),
                    }
                }
                p.validate().map_err(|e| bad(&e.to_string()))?;
                Strategy::Adaptive(p)
            }
            ("fixedk", Some(k)) => Strategy::FixedK(num(spec, "chunk count", k)?),
            ("fixedtok", Some(n)) => Strategy::FixedTokens(num(spec, "token budget", n)?),
            ("full", None) => Strategy::Full,
            ("zeroshot", None) => Strategy::ZeroShot,
            ("selfroute", args) => {
                let mut budget = DEFAULT_SELF_ROUTE_BUDGET;
                let mut oracle = OracleKind::LabelHeuristic;
                for (k, v) in args.map(|a| key_values(spec, a)).transpose()?.unwrap_or_default() {
                    match k.trim() {
                        "budget" => budget = num(spec, "token budget", v)?,
                        "oracle" => oracle = v.trim().parse().map_err(|e: String| bad(&e))?,
                        other => return Err(bad(&format!("unknown selfroute parameter `{other}`"))),
                    }
                }
                Strategy::SelfRoute { budget, oracle }
            }
            ("fixedk" | "fixedtok", None) => return Err(bad("missing value after `:`")),
            ("full" | "zeroshot", Some(_)) => return Err(bad("takes no parameters")),
            _ => return Err(bad("unknown strategy")),
        };
        Ok(strategy)
    }
}

/// Decides whether a reader could answer `query` from `chunks`.
pub trait AnswerabilityOracle: Send + Sync {
    fn can_answer(&self, query: &Query, chunks: &[&Chunk]) -> std::result::Result<bool, String>;

    /// Whether calls may be issued from several threads at once.
    fn is_concurrent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AlwaysYes;

#[derive(Debug, Clone, Copy)]
pub struct AlwaysNo;

/// Answerable iff at least one selected chunk is labeled relevant.
#[derive(Debug, Clone, Copy)]
pub struct LabelHeuristic;

impl AnswerabilityOracle for AlwaysYes {
    fn can_answer(&self, _: &Query, _: &[&Chunk]) -> std::result::Result<bool, String> {
        Ok(true)
    }
}

impl AnswerabilityOracle for AlwaysNo {
    fn can_answer(&self, _: &Query, _: &[&Chunk]) -> std::result::Result<bool, String> {
        Ok(false)
    }
}

impl AnswerabilityOracle for LabelHeuristic {
    fn can_answer(&self, _: &Query, chunks: &[&Chunk]) -> std::result::Result<bool, String> {
        Ok(chunks.iter().any(|c| c.relevant == Some(true)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: String,
    /// Last pre-buffer sorted position; -1 when nothing is selected. For
    /// non-adaptive strategies this is `selected_ids.len() - 1`.
    pub cutoff_k: i64,
    /// Most similar first.
    pub selected_ids: Vec<String>,
    pub selected_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_index: Option<usize>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_ids.is_empty()
    }
}

fn check_aligned(profile: &SimilarityProfile, corpus: &Corpus) -> Result<()> {
    if profile.len() != corpus.len() {
        return Err(Error::Invalid(format!(
            "profile has {} entries, corpus has {} chunks",
            profile.len(),
            corpus.len()
        )));
    }
    Ok(())
}

fn chunk<'c>(corpus: &'c Corpus, id: &str) -> Result<&'c Chunk> {
    corpus.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
}

fn prefix(strategy: String, profile: &SimilarityProfile, corpus: &Corpus, len: usize) -> Result<Selection> {
    let selected_ids: Vec<String> = profile.ranking()[..len].to_vec();
    let mut selected_tokens = 0u64;
    for id in &selected_ids {
        selected_tokens += chunk(corpus, id)?.token_count as u64;
    }
    Ok(Selection {
        strategy,
        cutoff_k: len as i64 - 1,
        selected_ids,
        selected_tokens,
        gap_value: None,
        gap_index: None,
    })
}

/// Position and size of the largest drop between consecutive sorted scores,
/// considering only drops that complete within the search window. Ties go
/// to the earliest position.
///
/// Requires `sorted.len() >= 2`.
pub fn largest_gap(sorted: &[f64], params: &AdaptiveParams) -> (usize, f64) {
    debug_assert!(sorted.len() >= 2);
    let last = (params.window(sorted.len()) - 1).min(sorted.len() - 2);
    let mut best = (0, sorted[0] - sorted[1]);
    for (i, w) in sorted.windows(2).enumerate().take(last + 1).skip(1) {
        let gap = w[0] - w[1];
        if gap > best.1 {
            best = (i, gap);
        }
    }
    best
}

pub fn adaptive_k_select(profile: &SimilarityProfile, corpus: &Corpus, params: &AdaptiveParams) -> Result<Selection> {
    params.validate()?;
    check_aligned(profile, corpus)?;
    let label = Strategy::Adaptive(*params).to_string();
    let n = profile.len();
    let (gap_index, gap_value) = match n {
        0 => return Err(Error::EmptyCorpus),
        1 => (0, 0.0),
        _ => largest_gap(profile.sorted_scores(), params),
    };
    let len = (gap_index + 1).saturating_add(params.buffer).min(n);
    let mut sel = prefix(label, profile, corpus, len)?;
    sel.cutoff_k = gap_index as i64;
    sel.gap_index = Some(gap_index);
    sel.gap_value = Some(gap_value);
    Ok(sel)
}

pub fn fixed_k_select(profile: &SimilarityProfile, corpus: &Corpus, k: usize) -> Result<Selection> {
    check_aligned(profile, corpus)?;
    prefix(Strategy::FixedK(k).to_string(), profile, corpus, k.min(profile.len()))
}

/// Longest rank prefix within `budget` tokens. A positive budget always
/// yields at least the top chunk, even when that chunk alone exceeds it.
pub fn fixed_token_select(profile: &SimilarityProfile, corpus: &Corpus, budget: u64) -> Result<Selection> {
    check_aligned(profile, corpus)?;
    let label = Strategy::FixedTokens(budget).to_string();
    if budget == 0 {
        return prefix(label, profile, corpus, 0);
    }
    let mut used = 0u64;
    let mut len = 0;
    for id in profile.ranking() {
        let t = chunk(corpus, id)?.token_count as u64;
        if used + t > budget {
            break;
        }
        used += t;
        len += 1;
    }
    prefix(label, profile, corpus, len.max(1).min(profile.len()))
}

pub fn full_context_select(profile: &SimilarityProfile, corpus: &Corpus) -> Result<Selection> {
    check_aligned(profile, corpus)?;
    prefix(Strategy::Full.to_string(), profile, corpus, profile.len())
}

pub fn zero_shot_select(profile: &SimilarityProfile, corpus: &Corpus) -> Result<Selection> {
    check_aligned(profile, corpus)?;
    prefix(Strategy::ZeroShot.to_string(), profile, corpus, 0)
}

/// Fixed-token first stage; falls back to the full context when the oracle
/// says the first stage is not enough.
pub fn self_route_select(
    profile: &SimilarityProfile,
    corpus: &Corpus,
    query: &Query,
    oracle: &dyn AnswerabilityOracle,
    budget: u64,
    oracle_kind: Option<OracleKind>,
) -> Result<Selection> {
    let stage1 = fixed_token_select(profile, corpus, budget)?;
    let chunks = stage1
        .selected_ids
        .iter()
        .map(|id| chunk(corpus, id))
        .collect::<Result<Vec<_>>>()?;
    let answerable = oracle.can_answer(query, &chunks).map_err(|message| Error::Oracle {
        query_id: query.id.clone(),
        message,
    })?;
    let mut sel = if answerable {
        stage1
    } else {
        full_context_select(profile, corpus)?
    };
    sel.strategy = Strategy::SelfRoute {
        budget,
        oracle: oracle_kind.unwrap_or(OracleKind::LabelHeuristic),
    }
    .to_string();
    Ok(sel)
}

impl Strategy {
    /// Runs this strategy with its built-in oracle (for self-route).
    pub fn select(&self, profile: &SimilarityProfile, corpus: &Corpus, query: &Query) -> Result<Selection> {
        match *self {
            Strategy::Adaptive(p) => adaptive_k_select(profile, corpus, &p),
            Strategy::FixedK(k) => fixed_k_select(profile, corpus, k),
            Strategy::FixedTokens(n) => fixed_token_select(profile, corpus, n),
            Strategy::Full => full_context_select(profile, corpus),
            Strategy::ZeroShot => zero_shot_select(profile, corpus),
            Strategy::SelfRoute { budget, oracle } => {
                self_route_select(profile, corpus, query, oracle.build().as_ref(), budget, Some(oracle))
            }
        }
    }

    pub fn oracle(&self) -> Option<OracleKind> {
        match self {
            Strategy::SelfRoute { oracle, .. } => Some(*oracle),
            _ => None,
        }
    }
}
