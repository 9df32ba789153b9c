use std::ffi::{CStr, CString};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::ptr;

use adaptive_k_ffi::*;

fn corpus_file(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for (id, rel) in [("a", true), ("b", true), ("c", false), ("d", false)] {
        writeln!(f, r#"{{"id":"{id}","text":"some words for {id}","relevant":{rel}}}"#).unwrap();
    }
    path
}

fn load(path: &Path) -> *mut AkCorpus {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ak_corpus_load(c.as_ptr(), &mut out) }, AkStatus::Ok);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ak_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn select_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = load(&corpus_file(dir.path()));
    unsafe {
        assert_eq!(ak_corpus_len(corpus), 4);
        assert_eq!(ak_corpus_total_tokens(corpus), 16);

        let scores = [0.9, 0.85, 0.5, 0.45];
        let mut profile = ptr::null_mut();
        assert_eq!(ak_profile_from_scores(corpus, scores.as_ptr(), 4, &mut profile), AkStatus::Ok);
        let mut sorted = [0.0; 4];
        assert_eq!(ak_profile_sorted_scores(profile, sorted.as_mut_ptr(), 4), 4);
        assert_eq!(sorted, scores);

        let spec = CString::new("adaptive:B=0,frac=1").unwrap();
        let mut sel = ptr::null_mut();
        assert_eq!(ak_select(profile, corpus, spec.as_ptr(), ptr::null(), &mut sel), AkStatus::Ok);
        assert_eq!(ak_selection_len(sel), 2);
        assert_eq!(ak_selection_cutoff_k(sel), 1);
        assert_eq!(ak_selection_tokens(sel), 8);
        let (mut gi, mut gv) = (0usize, 0f64);
        assert_eq!(ak_selection_gap(sel, &mut gi, &mut gv), AkStatus::Ok);
        assert_eq!(gi, 1);
        assert!((gv - 0.35).abs() < 1e-12);
        assert_eq!(CStr::from_ptr(ak_selection_id(sel, 1)).to_str().unwrap(), "b");
        assert!(ak_selection_id(sel, 2).is_null());

        let mut recall = 0.0;
        assert_eq!(ak_context_recall(sel, corpus, &mut recall), AkStatus::Ok);
        assert_eq!(recall, 100.0);
        let mut dk = 99u64;
        assert_eq!(ak_diff_k(sel, profile, corpus, &mut dk), AkStatus::Ok);
        assert_eq!(dk, 0);
        ak_selection_free(sel);

        let spec = CString::new("fixedk:3").unwrap();
        let mut sel = ptr::null_mut();
        assert_eq!(ak_select(profile, corpus, spec.as_ptr(), ptr::null(), &mut sel), AkStatus::Ok);
        assert_eq!(ak_selection_gap(sel, &mut gi, &mut gv), AkStatus::InvalidArgument);
        ak_selection_free(sel);

        ak_profile_free(profile);
        ak_corpus_free(corpus);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
        assert_eq!(ak_corpus_load(missing.as_ptr(), &mut out), AkStatus::Io);
        assert!(out.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(ak_corpus_load(ptr::null(), &mut out), AkStatus::NullPointer);

        let dir = tempfile::tempdir().unwrap();
        let corpus = load(&corpus_file(dir.path()));
        let mut profile = ptr::null_mut();
        let scores = [0.1, 0.2];
        assert_eq!(ak_profile_from_scores(corpus, scores.as_ptr(), 2, &mut profile), AkStatus::InvalidArgument);
        let scores = [0.1, f64::NAN, 0.3, 0.4];
        assert_eq!(ak_profile_from_scores(corpus, scores.as_ptr(), 4, &mut profile), AkStatus::InvalidArgument);
        assert!(last_error().contains("`b`"), "{}", last_error());

        let scores = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(ak_profile_from_scores(corpus, scores.as_ptr(), 4, &mut profile), AkStatus::Ok);
        let bad = CString::new("topk:3").unwrap();
        let mut sel = ptr::null_mut();
        assert_eq!(ak_select(profile, corpus, bad.as_ptr(), ptr::null(), &mut sel), AkStatus::InvalidArgument);
        assert!(sel.is_null());
        assert_eq!(ak_selection_len(sel), 0);
        ak_profile_free(profile);
        ak_corpus_free(corpus);
        ak_corpus_free(ptr::null_mut());
    }
}

#[test]
fn stateless_helpers() {
    unsafe {
        let sorted = [0.9, 0.85, 0.5, 0.45];
        let (mut gi, mut keep) = (0usize, 0usize);
        assert_eq!(ak_adaptive_cutoff(sorted.as_ptr(), 4, 0, 1.0, &mut gi, &mut keep), AkStatus::Ok);
        assert_eq!((gi, keep), (1, 2));
        assert_eq!(ak_adaptive_cutoff(sorted.as_ptr(), 4, 5, 0.9, &mut gi, &mut keep), AkStatus::Ok);
        assert_eq!(keep, 4);
        let unsorted = [0.1, 0.9];
        assert_eq!(
            ak_adaptive_cutoff(unsorted.as_ptr(), 2, 0, 0.9, &mut gi, &mut keep),
            AkStatus::InvalidArgument
        );
        assert_eq!(ak_adaptive_cutoff(ptr::null(), 0, 0, 0.9, &mut gi, &mut keep), AkStatus::EmptyCorpus);

        let q = [1.0f32, 0.0];
        let rows = [1.0f32, 0.0, 0.0, 1.0, -1.0, 0.0];
        let mut out = [9.0; 3];
        assert_eq!(ak_cosine_scores(q.as_ptr(), rows.as_ptr(), 3, 2, out.as_mut_ptr()), AkStatus::Ok);
        assert_eq!(out, [1.0, 0.0, -1.0]);
        let zero = [0.0f32, 0.0];
        assert_eq!(
            ak_cosine_scores(zero.as_ptr(), rows.as_ptr(), 3, 2, out.as_mut_ptr()),
            AkStatus::InvalidArgument
        );

        let mut r = 0.0;
        assert_eq!(ak_token_reduction(933.63, 110336.05, &mut r), AkStatus::Ok);
        assert!((r - 99.15).abs() <= 0.15);
        assert_eq!(ak_token_reduction(1.0, 0.0, &mut r), AkStatus::InvalidArgument);
        assert!(!CStr::from_ptr(ak_version()).to_bytes().is_empty());
    }
}

#[test]
fn profile_from_cache_file() {
    use adaptive_k::embed::write_cache;
    use adaptive_k::EmbeddingMatrix;

    let dir = tempfile::tempdir().unwrap();
    let corpus = load(&corpus_file(dir.path()));
    // Rows stored out of corpus order; lookup is by id.
    let m = EmbeddingMatrix::from_rows(
        "t",
        ["d", "c", "b", "a"].iter().map(|s| s.to_string()).collect(),
        vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]],
    )
    .unwrap();
    let cache = dir.path().join("c.akec");
    write_cache(&m, &cache).unwrap();
    let cpath = CString::new(cache.to_str().unwrap()).unwrap();
    let q = [1.0f32, 0.0];
    unsafe {
        let mut profile = ptr::null_mut();
        assert_eq!(ak_profile_from_cache(corpus, cpath.as_ptr(), q.as_ptr(), 2, &mut profile), AkStatus::Ok);
        let mut sorted = [0.0; 4];
        ak_profile_sorted_scores(profile, sorted.as_mut_ptr(), 4);
        assert!((sorted[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        assert_eq!(sorted[3], -1.0);
        let q3 = [1.0f32, 0.0, 0.0];
        let mut p2 = ptr::null_mut();
        assert_eq!(
            ak_profile_from_cache(corpus, cpath.as_ptr(), q3.as_ptr(), 3, &mut p2),
            AkStatus::DimensionMismatch
        );
        ak_profile_free(profile);
        ak_corpus_free(corpus);
    }
}

/// Compiles a C program against the generated header and the static
/// library, then runs it.
#[test]
fn c_program_links_against_header() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("adaptive_k.h").exists());
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().unwrap().parent().unwrap();
    let lib = target_dir.join("libadaptive_k_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("run cc");
    assert!(status.success());
    let out = std::process::Command::new(&bin)
        .arg(corpus_file(dir.path()))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "gap=1 n=2 first=a recall=100.0\n");
}
