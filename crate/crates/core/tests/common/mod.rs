//! Brute-force reference implementations shared by the integration suites.
//! They favour the most literal computation over speed.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use domforge::corpus::{Corpus, Paragraph, Source};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn test_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Random corpus over a small word list so repeated texts (and therefore
/// tied scores) are common. Ids are zero-padded but the corpus order is
/// shuffled, so id order and corpus order disagree.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize, alphabet: usize) -> Corpus {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut texts: Vec<String> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for id in ids {
        let text = if !texts.is_empty() && rng.gen_bool(0.15) {
            texts[rng.gen_range(0..texts.len())].clone()
        } else {
            let len = rng.gen_range(1..=12);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..alphabet)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        texts.push(text.clone());
        out.push(Paragraph::new(format!("p{id:05}"), Source::Other, text).unwrap());
    }
    Corpus::from_paragraphs(out).unwrap()
}

pub fn random_texts(rng: &mut ChaCha8Rng, n: usize, alphabet: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=10);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..alphabet)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Term distribution of a whitespace-tokenized text over `vocab`, in vocab
/// order; uniform when nothing is in vocabulary.
pub fn oracle_distribution(text: &str, vocab: &[String]) -> Vec<f64> {
    let mut counts = vec![0u64; vocab.len()];
    let mut total = 0u64;
    for tok in text.split_whitespace() {
        let tok = tok.to_lowercase();
        for (i, v) in vocab.iter().enumerate() {
            if *v == tok {
                counts[i] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return vec![1.0 / vocab.len() as f64; vocab.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn oracle_neg_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += (a[i] - b[i]) * (a[i] - b[i]);
    }
    -sum.sqrt()
}

/// TTR + Shannon entropy in bits, summing entropy terms over counts sorted
/// ascending.
pub fn oracle_diversity(text: &str) -> f64 {
    let toks: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in &toks {
        *counts.entry(t).or_default() += 1;
    }
    let mut c: Vec<u64> = counts.into_values().collect();
    c.sort();
    let n = toks.len() as f64;
    let mut h = 0.0;
    for &k in &c {
        let f = k as f64 / n;
        h -= f * f.log2();
    }
    c.len() as f64 / n + h
}

pub fn oracle_minmax(xs: &[f64]) -> Vec<f64> {
    let mut lo = xs[0];
    let mut hi = xs[0];
    for &x in xs {
        if x < lo {
            lo = x;
        }
        if x > hi {
            hi = x;
        }
    }
    if hi == lo {
        return vec![0.5; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Sorts every index by (score desc, id asc) and keeps the first `k` ids.
pub fn oracle_top_ids(ids: &[String], scores: &[f64], k: usize) -> BTreeSet<String> {
    let mut all: Vec<(f64, &String)> = scores.iter().copied().zip(ids).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

pub fn oracle_kept_count(n: usize) -> usize {
    (7 * n / 10).max(1)
}

pub fn oracle_weighted_f1(y_true: &[u8], y_pred: &[u8]) -> f64 {
    let classes: BTreeSet<u8> = y_true.iter().chain(y_pred).copied().collect();
    let n = y_true.len() as f64;
    let mut total = 0.0;
    for c in classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for i in 0..y_true.len() {
            match (y_true[i] == c, y_pred[i] == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        total += f1 * (tp + fn_) / n;
    }
    total
}

pub fn oracle_cross_entropy(probs: &[Vec<f64>], y: &[usize], eps: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..probs.len() {
        s += -probs[i][y[i]].max(eps).ln();
    }
    s / probs.len() as f64
}

pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Every file below `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
