use std::ffi::{CStr, CString};
use std::ptr;

use domforge_ffi::*;

fn last_error() -> String {
    let p = df_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { df_string_free(p) };
    s
}

const CORPUS: &str = r#"{"id":"a","source":"news","text":"climate risk and climate policy"}
{"id":"b","source":"reports","text":"Climate risk AND climate policy"}
{"id":"c","source":"abstracts","text":"soil carbon flux under drought"}
{"id":"d","text":"emissions emissions emissions"}
not json
"#;

fn corpus() -> *mut DfCorpus {
    let jsonl = CString::new(CORPUS).unwrap();
    let mut out = ptr::null_mut();
    let mut rejected = 0usize;
    let st = unsafe { df_corpus_from_jsonl(jsonl.as_ptr(), ptr::null(), &mut out, &mut rejected) };
    assert_eq!(st, DfStatus::Ok);
    assert_eq!(rejected, 1);
    out
}

#[test]
fn corpus_lifecycle() {
    let c = corpus();
    unsafe {
        assert_eq!(df_corpus_len(c), 4);
        let mut deduped = ptr::null_mut();
        let mut removed = 0usize;
        assert_eq!(df_corpus_dedupe(c, &mut deduped, &mut removed), DfStatus::Ok);
        assert_eq!((removed, df_corpus_len(deduped)), (1, 3));

        let mut json = ptr::null_mut();
        assert_eq!(df_corpus_stats_json(deduped, &mut json), DfStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(v["total"]["paragraphs"], 3);
        assert_eq!(v["per_source"]["other"]["paragraphs"], 1);

        let mut jsonl = ptr::null_mut();
        assert_eq!(df_corpus_to_jsonl(deduped, &mut jsonl), DfStatus::Ok);
        assert_eq!(take_string(jsonl).lines().count(), 3);

        df_corpus_free(deduped);
        df_corpus_free(c);
        df_corpus_free(ptr::null_mut());
        assert_eq!(df_corpus_len(ptr::null()), 0);
    }
}

#[test]
fn selection_through_handles() {
    let c = corpus();
    let task_jsonl = CString::new("{\"text\":\"climate risk\"}\n{\"text\":\"climate policy\"}\n").unwrap();
    let mut task = ptr::null_mut();
    unsafe {
        assert_eq!(df_task_reference_from_jsonl(task_jsonl.as_ptr(), 10_000, &mut task), DfStatus::Ok);
        let strategy = CString::new("sim").unwrap();
        let mut scores = ptr::null_mut();
        let mut selected = ptr::null_mut();
        assert_eq!(df_select_json(c, strategy.as_ptr(), 0.5, task, &mut scores, &mut selected), DfStatus::Ok);
        let scores = take_string(scores);
        assert_eq!(scores.lines().count(), 4);
        assert_eq!(df_corpus_len(selected), 2);
        df_corpus_free(selected);

        let mut scores = ptr::null_mut();
        let st = df_select_json(c, strategy.as_ptr(), 0.5, ptr::null(), &mut scores, ptr::null_mut());
        assert_eq!(st, DfStatus::InvalidArgument);
        assert!(last_error().contains("requires a task"));
        assert!(scores.is_null());

        let bogus = CString::new("random").unwrap();
        let st = df_select_json(c, bogus.as_ptr(), 0.5, task, &mut scores, ptr::null_mut());
        assert_eq!(st, DfStatus::InvalidArgument);

        df_task_reference_free(task);
        df_corpus_free(c);
    }
}

#[test]
fn metrics_and_arithmetic() {
    unsafe {
        let text = CString::new("a b a b").unwrap();
        let mut d = 0.0;
        assert_eq!(df_diversity_score(text.as_ptr(), &mut d), DfStatus::Ok);
        assert_eq!(d, 1.5);

        let y = [0u32, 1, 2, 1];
        let mut f1 = 0.0;
        assert_eq!(df_weighted_f1(y.as_ptr(), y.as_ptr(), 4, &mut f1), DfStatus::Ok);
        assert_eq!(f1, 1.0);

        let probs = [0.5, 0.5, 0.25, 0.75];
        let labels = [0usize, 1];
        let mut ce = 0.0;
        let mut clamped = 9usize;
        let st = df_cross_entropy(probs.as_ptr(), 2, 2, labels.as_ptr(), 1e-12, &mut ce, &mut clamped);
        assert_eq!(st, DfStatus::Ok);
        assert!((ce - (-(0.5f64).ln() - (0.75f64).ln()) / 2.0).abs() < 1e-15);
        assert_eq!(clamped, 0);

        let mut r = 0.0;
        assert_eq!(df_error_rate_reduction(0.986, 0.991, &mut r), DfStatus::Ok);
        assert!((r - 35.714).abs() < 1e-3);
        assert_eq!(df_error_rate_reduction(1.0, 0.9, &mut r), DfStatus::InvalidArgument);
        assert_eq!(df_relative_loss_reduction(2.238, 1.157, &mut r), DfStatus::Ok);
        assert!((r - 48.30).abs() < 0.01);

        let mut g = 0.0;
        assert_eq!(df_co2_emissions(0.7, 48.0, 470.0, &mut g), DfStatus::Ok);
        assert!((g - 15_792.0).abs() < 1e-6);
        assert_eq!(df_co2_emissions(-1.0, 48.0, 470.0, &mut g), DfStatus::InvalidArgument);
    }
}

#[test]
fn masking_matches_library() {
    let ids: Vec<u32> = (0..500).map(|i| i % 60).collect();
    let special = [0u32, 1, 2];
    let opts = DfMaskingOptions {
        mask_probability: 0.15,
        replace_mask_fraction: 0.8,
        replace_random_fraction: 0.1,
        keep_fraction: 0.1,
        mask_token_id: 4,
        vocab_size: 60,
        seed: 17,
        sequence_index: 3,
        special_ids: special.as_ptr(),
        n_special_ids: special.len(),
    };
    let mut out_ids = vec![0u32; ids.len()];
    let mut out_labels = vec![0i64; ids.len()];
    let st = unsafe { df_mask_tokens(ids.as_ptr(), ids.len(), &opts, out_ids.as_mut_ptr(), out_labels.as_mut_ptr()) };
    assert_eq!(st, DfStatus::Ok);

    let cfg = domforge::mlm::MaskingConfig {
        special_token_ids: special.into_iter().collect(),
        mask_token_id: 4,
        vocab_size: 60,
        seed: 17,
        ..Default::default()
    };
    let expected = domforge::mlm::mask_sequence(&ids, &cfg, 3).unwrap();
    assert_eq!(out_ids, expected.input_ids);
    assert_eq!(out_labels, expected.labels);
}

#[test]
fn null_and_utf8_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(df_corpus_from_jsonl(ptr::null(), ptr::null(), &mut out, ptr::null_mut()), DfStatus::NullPointer);
        assert!(last_error().contains("jsonl"));
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            df_corpus_from_jsonl(bad.as_ptr().cast(), ptr::null(), &mut out, ptr::null_mut()),
            DfStatus::InvalidUtf8
        );
        let mut x = 0.0;
        assert_eq!(df_weighted_f1(ptr::null(), ptr::null(), 3, &mut x), DfStatus::NullPointer);
        assert_eq!(df_weighted_f1(ptr::null(), ptr::null(), 0, &mut x), DfStatus::InvalidArgument);
        assert_eq!(df_diversity_score(ptr::null(), ptr::null_mut()), DfStatus::NullPointer);

        assert_eq!(df_co2_emissions(1.0, 1.0, 1.0, &mut x), DfStatus::Ok);
        assert!(df_last_error().is_null());
        assert!(!CStr::from_ptr(df_version()).to_str().unwrap().is_empty());
    }
}
