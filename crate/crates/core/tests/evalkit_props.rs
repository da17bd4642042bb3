mod common;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use domforge::evalkit::{
    aggregate_runs, cross_entropy, downstream_split, per_class_scores, read_runs, weighted_f1, write_jsonl,
    RunResult, DEFAULT_CE_EPSILON,
};

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    for x in xs {
        sum += x;
    }
    let mean = sum / xs.len() as f64;
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean).powi(2);
    }
    (mean, (ss / (xs.len() - 1) as f64).sqrt())
}

#[test]
fn aggregate_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..50 {
        let runs: Vec<RunResult> = (1..=60)
            .map(|i| RunResult {
                run_index: i,
                val_loss: rng.gen_range(0.05..3.0),
                weighted_f1: rng.gen_range(0.3..1.0),
            })
            .collect();
        let agg = aggregate_runs(&runs).unwrap();
        let (ml, sl) = two_pass(&runs.iter().map(|r| r.val_loss).collect::<Vec<_>>());
        let (mf, sf) = two_pass(&runs.iter().map(|r| r.weighted_f1).collect::<Vec<_>>());
        assert_eq!(agg.n_runs, 60);
        for (got, want) in [(agg.mean_loss, ml), (agg.std_loss, sl), (agg.mean_f1, mf), (agg.std_f1, sf)] {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn weighted_f1_and_cross_entropy_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(414);
    for _ in 0..200 {
        let y_true: Vec<u8> = (0..200).map(|_| rng.gen_range(0..3)).collect();
        let y_pred: Vec<u8> = (0..200).map(|_| rng.gen_range(0..3)).collect();
        let got = weighted_f1(&y_true, &y_pred).unwrap();
        assert!((got - common::oracle_weighted_f1(&y_true, &y_pred)).abs() <= 1e-12);
        let scores = per_class_scores(&y_true, &y_pred).unwrap();
        assert_eq!(scores.values().map(|s| s.support).sum::<usize>(), 200);
    }
    for _ in 0..100 {
        let probs: Vec<Vec<f64>> = (0..50).map(|_| common::random_distribution(&mut rng, 4)).collect();
        let y: Vec<usize> = (0..50).map(|_| rng.gen_range(0..4)).collect();
        let got = cross_entropy(&probs, &y, DEFAULT_CE_EPSILON).unwrap();
        assert!((got.value - common::oracle_cross_entropy(&probs, &y, DEFAULT_CE_EPSILON)).abs() <= 1e-12);
        assert_eq!(got.clamped, 0);
    }
}

#[test]
fn perfect_predictions_and_clamping() {
    let y = ["yes", "no", "yes", "no", "no"];
    assert_eq!(weighted_f1(&y, &y).unwrap(), 1.0);
    let ce = cross_entropy(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1, 1], DEFAULT_CE_EPSILON).unwrap();
    assert_eq!(ce.clamped, 1);
    assert!((ce.value - (-(1e-12f64).ln()) / 2.0).abs() < 1e-9);
    assert!(weighted_f1::<u8>(&[], &[]).is_err());
    assert!(weighted_f1(&[1u8], &[1, 2]).is_err());
}

#[test]
fn run_results_roundtrip_through_jsonl() {
    let runs: Vec<RunResult> = (1..=60)
        .map(|i| RunResult {
            run_index: i,
            val_loss: 0.1 * i as f64,
            weighted_f1: 1.0 / i as f64,
        })
        .collect();
    let mut buf = Vec::new();
    write_jsonl(&runs, &mut buf).unwrap();
    assert_eq!(read_runs(&buf[..]).unwrap(), runs);

    let bad_index = br#"{"run_index": 61, "val_loss": 0.2, "weighted_f1": 0.5}"#;
    assert!(read_runs(&bad_index[..]).is_err());
    let extra_field = br#"{"run_index": 1, "val_loss": 0.2, "weighted_f1": 0.5, "seed": 3}"#;
    assert!(read_runs(&extra_field[..]).is_err());
    let bad_f1 = br#"{"run_index": 1, "val_loss": 0.2, "weighted_f1": 1.5}"#;
    assert!(read_runs(&bad_f1[..]).is_err());
}

#[test]
fn downstream_splits_are_ninety_ten_and_seeded_per_run() {
    let mut seen = HashSet::new();
    for run in 1..=60 {
        let (train, val) = downstream_split(1000, run, 42);
        assert_eq!((train.len(), val.len()), (900, 100));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(downstream_split(1000, run, 42), (train, val.clone()));
        seen.insert(val);
    }
    assert_eq!(seen.len(), 60);
}
