//! Evaluation quantities: context recall, true-k and diff-k, token
//! reduction, and substring exact match.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::selection::Selection;
use crate::similarity::SimilarityProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub context_recall: Option<f64>,
    pub diff_k: Option<u64>,
    pub n_input_tokens: u64,
    pub n_selected_chunks: usize,
    pub reduction_pct: Option<f64>,
    pub subem: Option<u8>,
}

/// Percentage of relevant chunks present in the selection.
pub fn context_recall(selection: &Selection, corpus: &Corpus) -> Result<f64> {
    let relevant = corpus.relevant_ids()?;
    let selected: HashSet<&str> = selection.selected_ids.iter().map(String::as_str).collect();
    let hit = relevant.iter().filter(|id| selected.contains(*id)).count();
    Ok(100.0 * hit as f64 / relevant.len() as f64)
}

/// Sorted position (0-based) of the lowest-ranked relevant chunk: the
/// smallest cutoff that reaches full recall.
pub fn true_k(profile: &SimilarityProfile, corpus: &Corpus) -> Result<usize> {
    let relevant: HashSet<&str> = corpus.relevant_ids()?.into_iter().collect();
    profile
        .ranking()
        .iter()
        .rposition(|id| relevant.contains(id.as_str()))
        .ok_or(Error::NoRelevantChunks)
}

/// `|(selection size - 1) - true_k|`; an empty selection counts as -1.
pub fn diff_k(selection: &Selection, profile: &SimilarityProfile, corpus: &Corpus) -> Result<u64> {
    let truth = true_k(profile, corpus)? as i64;
    let effective = selection.len() as i64 - 1;
    Ok(effective.abs_diff(truth))
}

/// `100 * (1 - n_input / n_full)`. Inputs larger than the full context give
/// a negative value, reported as-is.
pub fn token_reduction(n_input: f64, n_full: f64) -> Result<f64> {
    if n_full <= 0.0 || !n_full.is_finite() {
        return Err(Error::Invalid(format!(
            "full-context token count must be positive, got {n_full}"
        )));
    }
    if n_input < 0.0 || !n_input.is_finite() {
        return Err(Error::Invalid(format!("input token count must be >= 0, got {n_input}")));
    }
    Ok(100.0 * (1.0 - n_input / n_full))
}

/// Lowercase, collapse whitespace runs to one space, and trim punctuation
/// from both ends.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace() || is_unicode_punct(c))
        .to_string()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '…' | '–' | '—' | '¿' | '¡' | '。' | '、')
}

/// 1 iff some normalized gold answer is a substring of the normalized
/// prediction.
pub fn subem(prediction: &str, answers: &[String]) -> Result<u8> {
    if answers.is_empty() {
        return Err(Error::Invalid("SubEM needs at least one gold answer".into()));
    }
    let pred = normalize_answer(prediction);
    let hit = answers.iter().any(|a| {
        let a = normalize_answer(a);
        !a.is_empty() && pred.contains(&a)
    });
    Ok(u8::from(hit))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chunk;
    use crate::selection::{fixed_k_select, full_context_select, zero_shot_select};
    use crate::similarity::build_profile;
    use proptest::prelude::*;

    fn labeled(n: usize, relevant: &[usize]) -> (SimilarityProfile, Corpus) {
        // Chunk i is ranked at position i.
        let ids: Vec<String> = (0..n).map(|i| format!("c{i:03}")).collect();
        let scores: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let chunks = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Chunk {
                id: id.clone(),
                text: "t".into(),
                token_count: 1,
                relevant: Some(relevant.contains(&i)),
            })
            .collect();
        (build_profile(&scores, &ids).unwrap(), Corpus::new(chunks).unwrap())
    }

    fn sel(ids: &[&str]) -> Selection {
        Selection {
            strategy: "manual".into(),
            cutoff_k: ids.len() as i64 - 1,
            selected_ids: ids.iter().map(|s| s.to_string()).collect(),
            selected_tokens: ids.len() as u64,
            gap_value: None,
            gap_index: None,
        }
    }

    #[test]
    fn recall_examples() {
        let chunks = ["a", "b", "c", "d"]
            .iter()
            .map(|id| Chunk {
                id: id.to_string(),
                text: "t".into(),
                token_count: 1,
                relevant: Some(*id == "a" || *id == "c"),
            })
            .collect();
        let corpus = Corpus::new(chunks).unwrap();
        assert_eq!(context_recall(&sel(&["a", "b"]), &corpus).unwrap(), 50.0);
        assert_eq!(context_recall(&sel(&["a", "b", "c", "d"]), &corpus).unwrap(), 100.0);
        assert_eq!(context_recall(&sel(&[]), &corpus).unwrap(), 0.0);
    }

    #[test]
    fn recall_requires_labels() {
        let corpus = Corpus::new(vec![Chunk {
            id: "a".into(),
            text: "t".into(),
            token_count: 1,
            relevant: None,
        }])
        .unwrap();
        assert!(matches!(
            context_recall(&sel(&["a"]), &corpus),
            Err(Error::MissingLabels { .. })
        ));
    }

    #[test]
    fn true_k_examples() {
        let (p, c) = labeled(10, &[0]);
        assert_eq!(true_k(&p, &c).unwrap(), 0);
        let (p, c) = labeled(10, &[2, 7]);
        assert_eq!(true_k(&p, &c).unwrap(), 7);
        let (p, c) = labeled(4, &[0, 1, 2, 3]);
        assert_eq!(true_k(&p, &c).unwrap(), 3);
    }

    #[test]
    fn diff_k_examples() {
        let (p, c) = labeled(10, &[2, 7]);
        let exact = fixed_k_select(&p, &c, 8).unwrap();
        assert_eq!(diff_k(&exact, &p, &c).unwrap(), 0);
        let three = fixed_k_select(&p, &c, 3).unwrap();
        assert_eq!(diff_k(&three, &p, &c).unwrap(), (2i64 - 7).unsigned_abs());
        let full = full_context_select(&p, &c).unwrap();
        assert_eq!(diff_k(&full, &p, &c).unwrap(), 2);
        let none = zero_shot_select(&p, &c).unwrap();
        assert_eq!(diff_k(&none, &p, &c).unwrap(), 8);
    }

    #[test]
    fn reduction_examples() {
        let r = token_reduction(934.0, 110336.0).unwrap();
        assert!((r - 99.1535).abs() < 1e-3, "{r}");
        assert_eq!(token_reduction(500.0, 500.0).unwrap(), 0.0);
        assert_eq!(token_reduction(0.0, 500.0).unwrap(), 100.0);
        assert!(token_reduction(600.0, 500.0).unwrap() < 0.0);
        assert!(token_reduction(1.0, 0.0).is_err());
    }

    #[test]
    fn subem_examples() {
        let paris = ["Paris".to_string()];
        assert_eq!(subem("The answer is Paris.", &paris).unwrap(), 1);
        assert_eq!(subem("paris", &paris).unwrap(), 1);
        assert_eq!(subem("Parisian", &paris).unwrap(), 1);
        assert_eq!(subem("London", &paris).unwrap(), 0);
        assert_eq!(subem("New   York\tCity", &["new york".to_string()]).unwrap(), 1);
        assert_eq!(subem("\"Rome\"", &["Rome!".to_string()]).unwrap(), 1);
        assert!(subem("x", &[]).is_err());
        assert_eq!(subem("anything", &["...".to_string()]).unwrap(), 0);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((m, s), (5.0, 2.0));
        assert!(mean_std(&[]).is_none());
    }

    proptest! {
        #[test]
        fn metric_invariants(n in 1usize..60, rel in prop::collection::vec(any::<bool>(), 60)) {
            let mut relevant: Vec<usize> = (0..n).filter(|&i| rel[i]).collect();
            if relevant.is_empty() {
                relevant.push(n - 1);
            }
            let (p, c) = labeled(n, &relevant);
            let tk = true_k(&p, &c).unwrap();
            let s = fixed_k_select(&p, &c, tk + 1).unwrap();
            prop_assert_eq!(context_recall(&s, &c).unwrap(), 100.0);
            prop_assert_eq!(diff_k(&s, &p, &c).unwrap(), 0);
            let full = full_context_select(&p, &c).unwrap();
            prop_assert_eq!(diff_k(&full, &p, &c).unwrap(), (n - 1 - tk) as u64);
            let mut last = -1.0;
            for k in 0..=n {
                let r = context_recall(&fixed_k_select(&p, &c, k).unwrap(), &c).unwrap();
                prop_assert!(r >= last);
                last = r;
            }
        }

        #[test]
        fn reduction_endpoints(n in 1u64..1_000_000) {
            prop_assert_eq!(token_reduction(n as f64, n as f64).unwrap(), 0.0);
            prop_assert_eq!(token_reduction(0.0, n as f64).unwrap(), 100.0);
        }
    }
}
