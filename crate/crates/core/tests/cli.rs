use std::path::Path;
use std::process::{Command, Output};

use adaptive_k::embed::read_cache;
use adaptive_k::harness::{generate_synthetic, plant_embeddings, read_report, SynthSpec};
use adaptive_k::{adaptive_k_select, build_profile, cosine_scores, AdaptiveParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-k"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn adaptive-k")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", p(dir), "--total-tokens", "10000", "--info-amount", "1000", "--chunk-tokens", "50"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn embed_writes_cache_then_hits_it() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let corpus = dir.path().join("corpus.jsonl");
    let cache = dir.path().join("c.akec");
    let out = ok(&["embed", "--corpus", p(&corpus), "--cache", p(&cache), "--dim", "8"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("embedded"));
    let n_lines = std::fs::read_to_string(&corpus).unwrap().lines().count();
    assert_eq!(read_cache(&cache).unwrap().len(), n_lines);
    let before = std::fs::read(&cache).unwrap();
    let out = ok(&["embed", "--corpus", p(&corpus), "--cache", p(&cache), "--dim", "8"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache hit"));
    assert_eq!(std::fs::read(&cache).unwrap(), before);

    let out = run(&["embed", "--corpus", p(&corpus), "--cache", p(&cache), "--dim", "16"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn corrupt_cache_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cache = dir.path().join("c.akec");
    std::fs::write(&cache, b"NOPE\x01\x00garbage").unwrap();
    let out = run(&["embed", "--corpus", p(&dir.path().join("corpus.jsonl")), "--cache", p(&cache)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn retrieve_adaptive_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--embed-dim", "24", "--seed", "5"]);
    let out = ok(&[
        "retrieve",
        "--corpus", p(&dir.path().join("corpus.jsonl")),
        "--cache", p(&dir.path().join("corpus.akec")),
        "--queries", p(&dir.path().join("queries.jsonl")),
        "--query-id", "synth-s5-i1000",
        "--query-cache", p(&dir.path().join("queries.akec")),
        "--backend", "none",
        "--strategy", "adaptive",
    ]);
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();

    let case = generate_synthetic(&SynthSpec {
        total_tokens: 10_000,
        info_amount: 1000,
        chunk_tokens_mean: 50,
        seed: 5,
        ..SynthSpec::default()
    })
    .unwrap();
    let (m, q) = plant_embeddings(&case, 24, 5).unwrap();
    let profile = build_profile(&cosine_scores(&q, &m).unwrap(), m.ids()).unwrap();
    let sel = adaptive_k_select(&profile, &case.corpus, &AdaptiveParams::default()).unwrap();

    assert_eq!(lines.len(), sel.len());
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["rank"], i);
        assert_eq!(line["id"], sel.selected_ids[i].as_str());
        assert_eq!(line["gap_index"], sel.gap_index.unwrap());
    }
}

#[test]
fn retrieve_fixed_k_and_bad_strategy() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let corpus = dir.path().join("corpus.jsonl");
    let cache = dir.path().join("c.akec");
    let args = |s: &'static str| {
        vec!["retrieve", "--corpus", p(&corpus), "--cache", p(&cache), "--query", "which records", "--strategy", s]
    };
    let out = ok(&args("fixedk:3"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    for l in text.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v.get("gap_index").is_none());
        assert!(v["tokens"].as_u64().unwrap() > 0);
    }
    let out = run(&args("top3"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid strategy"));
}

#[test]
fn eval_sweep_has_one_aggregate_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = ok(&[
        "eval", "--synth", "--total-tokens", "20000", "--info-amount", "2000", "--replicates", "3",
        "--strategy", "adaptive", "--strategy", "fixedtok:5000", "--strategy", "full", "--strategy", "zeroshot",
        "--out", p(&report),
    ]);
    let r = read_report(&report).unwrap();
    assert_eq!(r.aggregates.len(), 4);
    assert_eq!(r.rows.len(), 12);
    assert!(r.verify_aggregates());
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("fixedtok:5000"));
}

#[test]
fn eval_is_reproducible_from_its_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    let common = ["eval", "--synth", "--total-tokens", "20000", "--info-amount", "5000", "--overlap", "0.1", "--replicates", "4", "--seed", "7"];
    ok(&[&common[..], &["--out", p(&a)]].concat());
    ok(&[&common[..], &["--out", p(&b), "--jobs", "3"]].concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ok(&["eval", "--from-report", p(&a), "--out", p(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn eval_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    ok(&["eval", "--synth", "--total-tokens", "5000", "--info-amount", "500", "--strategy", "full", "--out", p(&out), "--format", "csv"]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "strategy,query_id,recall,diff_k,n_input_tokens,n_chunks,reduction_pct,subem");
    assert!(lines.next().unwrap().starts_with("full,synth-s0-i500,100.00,"));
}

#[test]
fn eval_fails_fast_without_labels() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let queries = dir.path().join("queries.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"text\":\"alpha beta\"}\n{\"id\":\"b\",\"text\":\"gamma\"}\n").unwrap();
    std::fs::write(&queries, "{\"id\":\"q\",\"text\":\"alpha\"}\n").unwrap();
    let report = dir.path().join("r.json");
    let base = ["eval", "--corpus", p(&corpus), "--queries", p(&queries), "--out", p(&report)];
    let out = run(&base);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels missing"));
    ok(&[&base[..], &["--no-recall"]].concat());
    let r = read_report(&report).unwrap();
    assert!(r.rows.iter().all(|row| row.metrics.as_ref().unwrap().context_recall.is_none()));
}

#[test]
fn eval_scores_predictions_with_subem() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let queries = dir.path().join("queries.jsonl");
    let preds = dir.path().join("preds.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"text\":\"Paris is in France\",\"relevant\":true}\n{\"id\":\"b\",\"text\":\"Rome\",\"relevant\":false}\n").unwrap();
    std::fs::write(&queries, "{\"id\":\"q\",\"text\":\"capital of France?\",\"answers\":[\"Paris\"]}\n").unwrap();
    std::fs::write(&preds, "{\"strategy\":\"full\",\"query_id\":\"q\",\"prediction\":\"It is paris.\"}\n").unwrap();
    let report = dir.path().join("r.json");
    ok(&["eval", "--corpus", p(&corpus), "--queries", p(&queries), "--strategy", "full", "--strategy", "zeroshot",
        "--predictions", p(&preds), "--out", p(&report)]);
    let r = read_report(&report).unwrap();
    assert_eq!(r.rows[0].metrics.as_ref().unwrap().subem, Some(1));
    assert_eq!(r.rows[1].metrics.as_ref().unwrap().subem, None);
}

#[test]
fn synth_label_sum_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), &["--seed", "11"]);
    synth(b.path(), &["--seed", "11"]);
    let text = std::fs::read_to_string(a.path().join("corpus.jsonl")).unwrap();
    let mut relevant_tokens = 0u64;
    let mut max_chunk = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let t = v["tokens"].as_u64().unwrap();
        max_chunk = max_chunk.max(t);
        if v["relevant"] == true {
            relevant_tokens += t;
        }
    }
    assert!(relevant_tokens.abs_diff(1000) <= max_chunk);
    assert_eq!(text, std::fs::read_to_string(b.path().join("corpus.jsonl")).unwrap());

    let out = run(&["synth", "--out-dir", p(a.path()), "--total-tokens", "100", "--info-amount", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("info_amount"));
}
