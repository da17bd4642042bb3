//! Sample selection over a paragraph corpus: keep everything, keep the
//! paragraphs closest to a downstream task, keep the most lexically diverse,
//! or keep the best by a composite of both.
//!
//! Floating-point reductions run in a fixed order (vocabulary index order for
//! distances, ascending counts for entropy) so mathematically equal scores are
//! bitwise equal and fall through to the id tie-break.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Paragraph};
use crate::error::{Error, Result};
use crate::vocab::{FrequencyTable, WordTokenizer};

pub const DEFAULT_KEEP_FRACTION: f64 = 0.7;
pub const DEFAULT_REFERENCE_VOCAB_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    Full,
    Sim,
    Div,
    DivPlusSim,
}

impl SelectionKind {
    pub fn needs_task(self) -> bool {
        matches!(self, SelectionKind::Sim | SelectionKind::DivPlusSim)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::Full => "full",
            SelectionKind::Sim => "sim",
            SelectionKind::Div => "div",
            SelectionKind::DivPlusSim => "div_plus_sim",
        }
    }
}

impl fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "f" => Ok(SelectionKind::Full),
            "sim" | "s" => Ok(SelectionKind::Sim),
            "div" | "d" => Ok(SelectionKind::Div),
            "div_plus_sim" | "div+sim" | "d+s" => Ok(SelectionKind::DivPlusSim),
            _ => Err(Error::invalid(format!(
                "unknown strategy '{s}' (expected full, sim, div or div_plus_sim)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: SelectionKind,
    pub keep_fraction: f64,
}

impl SelectionStrategy {
    pub fn new(kind: SelectionKind, keep_fraction: f64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "keep_fraction must be in (0, 1], got {keep_fraction}"
            )));
        }
        Ok(SelectionStrategy { kind, keep_fraction })
    }

    pub fn with_default_fraction(kind: SelectionKind) -> Self {
        SelectionStrategy {
            kind,
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }

    /// `max(1, ⌊keep_fraction · n⌋)`, or `n` for `Full`.
    pub fn kept_count(&self, n: usize) -> usize {
        if self.kind == SelectionKind::Full {
            return n;
        }
        // The epsilon absorbs representation error, e.g. 0.7 * 90 = 62.999...
        let k = (self.keep_fraction * n as f64 + 1e-9).floor() as usize;
        k.clamp(1, n.max(1))
    }
}

/// Centroid of a downstream task's term distributions over its own
/// top-ranked vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReference {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    centroid: Vec<f64>,
}

impl TaskReference {
    pub fn new(vocab: Vec<String>, centroid: Vec<f64>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::invalid("reference vocabulary is empty"));
        }
        if vocab.len() != centroid.len() {
            return Err(Error::invalid(format!(
                "centroid has {} entries for a {}-token vocabulary",
                centroid.len(),
                vocab.len()
            )));
        }
        if centroid.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::invalid("centroid entries must be finite and non-negative"));
        }
        let sum: f64 = centroid.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("centroid sums to {sum}, expected 1")));
        }
        let index = build_index(&vocab)?;
        Ok(TaskReference {
            vocab,
            index,
            centroid,
        })
    }

    /// Builds the reference from task example texts: vocabulary = the
    /// `vocab_size` most frequent lowercased tokens, centroid = mean of the
    /// examples' distributions.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("reference vocabulary size must be at least 1"));
        }
        let texts: Vec<&str> = texts.into_iter().collect();
        if texts.is_empty() {
            return Err(Error::data("task has no examples"));
        }
        let tokenizer = WordTokenizer::default();
        let mut table = FrequencyTable::new();
        for t in &texts {
            table.add_text(t, &tokenizer);
        }
        if table.is_empty() {
            return Err(Error::data("task examples contain no tokens"));
        }
        let vocab: Vec<String> = table
            .top_where(vocab_size, |_| true)
            .into_iter()
            .map(|(t, _)| t.to_string())
            .collect();
        let index = build_index(&vocab)?;
        let mut centroid = vec![0.0; vocab.len()];
        for t in &texts {
            for (c, p) in centroid.iter_mut().zip(distribution(t, &index, vocab.len())) {
                *c += p;
            }
        }
        let m = texts.len() as f64;
        centroid.iter_mut().for_each(|c| *c /= m);
        Ok(TaskReference {
            vocab,
            index,
            centroid,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    fn distribution_of(&self, text: &str) -> Vec<f64> {
        distribution(text, &self.index, self.vocab.len())
    }
}

fn build_index(vocab: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(vocab.len());
    for (i, t) in vocab.iter().enumerate() {
        if index.insert(t.clone(), i).is_some() {
            return Err(Error::invalid(format!("duplicate reference token '{t}'")));
        }
    }
    Ok(index)
}

fn distribution(text: &str, index: &HashMap<String, usize>, dim: usize) -> Vec<f64> {
    let mut counts = vec![0u64; dim];
    let mut total = 0u64;
    WordTokenizer::default().for_each_token(text, |t| {
        if let Some(&i) = index.get(t) {
            counts[i] += 1;
            total += 1;
        }
    });
    if total == 0 {
        return vec![1.0 / dim as f64; dim];
    }
    let total = total as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// L1-normalized term-frequency vector of the paragraph over `reference_vocab`.
/// Out-of-vocabulary tokens are ignored; a paragraph with no in-vocabulary
/// token maps to the uniform distribution.
pub fn paragraph_distribution(p: &Paragraph, reference_vocab: &[String]) -> Result<Vec<f64>> {
    if reference_vocab.is_empty() {
        return Err(Error::invalid("reference vocabulary is empty"));
    }
    let index = build_index(reference_vocab)?;
    Ok(distribution(p.text(), &index, reference_vocab.len()))
}

/// Negative Euclidean distance to the task centroid; 0 is the maximum.
pub fn similarity_score(p_dist: &[f64], task: &TaskReference) -> Result<f64> {
    if p_dist.len() != task.centroid.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: distribution has {} entries, centroid {}",
            p_dist.len(),
            task.centroid.len()
        )));
    }
    Ok(-euclidean(p_dist, &task.centroid))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    sum.sqrt()
}

/// Type-token ratio plus Shannon entropy (bits) of the token distribution.
pub fn diversity_of_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::data("empty paragraph"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    Ok(diversity_from_counts(counts.into_values().collect(), tokens.len() as u64))
}

fn diversity_from_counts(mut counts: Vec<u64>, total: u64) -> f64 {
    counts.sort_unstable();
    let n = total as f64;
    let mut entropy = 0.0;
    for &c in &counts {
        let f = c as f64 / n;
        entropy -= f * f.log2();
    }
    counts.len() as f64 / n + entropy
}

pub fn diversity_score(p: &Paragraph) -> Result<f64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    WordTokenizer::default().for_each_token(p.text(), |t| {
        total += 1;
        match counts.get_mut(t) {
            Some(c) => *c += 1,
            None => {
                counts.insert(t.to_string(), 1);
            }
        }
    });
    if total == 0 {
        return Err(Error::data(format!("empty paragraph '{}'", p.id())));
    }
    Ok(diversity_from_counts(counts.into_values().collect(), total))
}

/// Affine map onto [0, 1]. A constant input maps to 0.5 everywhere.
pub fn minmax_scale(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot scale an empty score list"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::data(format!("non-finite score {bad}")));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.5; scores.len()]);
    }
    Ok(scores.iter().map(|s| (s - min) / range).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite: Option<f64>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub strategy: SelectionKind,
    pub keep_fraction: f64,
    pub kept_count: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// One record per paragraph, in corpus order.
    pub scores: Vec<ScoreRecord>,
    pub strategy: SelectionStrategy,
    pub kept_count: usize,
}

impl SelectionResult {
    pub fn summary(&self) -> SelectionSummary {
        SelectionSummary {
            strategy: self.strategy.kind,
            keep_fraction: self.strategy.keep_fraction,
            kept_count: self.kept_count,
            total: self.scores.len(),
        }
    }

    pub fn kept_ids(&self) -> impl Iterator<Item = &str> {
        self.scores.iter().filter(|r| r.kept).map(|r| r.id.as_str())
    }

    /// The kept paragraphs, in corpus order.
    pub fn apply(&self, corpus: &Corpus) -> Corpus {
        let mut kept = self.scores.iter().map(|r| r.kept);
        corpus.filtered(|_| kept.next().unwrap_or(false))
    }

    pub fn write_scores_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.scores {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Scores every paragraph under `strategy` and keeps the top
/// `strategy.kept_count(n)`, breaking score ties by ascending id.
pub fn select(corpus: &Corpus, strategy: SelectionStrategy, task: Option<&TaskReference>) -> Result<SelectionResult> {
    if corpus.is_empty() {
        return Err(Error::data("no paragraphs"));
    }
    let task = match (strategy.kind.needs_task(), task) {
        (true, None) => {
            return Err(Error::invalid(format!(
                "strategy '{}' requires a task reference",
                strategy.kind
            )))
        }
        (_, t) => t,
    };
    let paragraphs = corpus.paragraphs();
    let n = paragraphs.len();

    let similarity: Option<Vec<f64>> = match (strategy.kind, task) {
        (SelectionKind::Sim | SelectionKind::DivPlusSim, Some(task)) => Some(
            paragraphs
                .par_iter()
                .map(|p| -euclidean(&task.distribution_of(p.text()), &task.centroid))
                .collect(),
        ),
        _ => None,
    };
    let diversity: Option<Vec<f64>> = match strategy.kind {
        SelectionKind::Div | SelectionKind::DivPlusSim => {
            Some(paragraphs.par_iter().map(diversity_score).collect::<Result<_>>()?)
        }
        _ => None,
    };
    let composite: Option<Vec<f64>> = match (&similarity, &diversity) {
        (Some(s), Some(d)) if strategy.kind == SelectionKind::DivPlusSim => {
            let (s, d) = (minmax_scale(s)?, minmax_scale(d)?);
            Some(s.iter().zip(&d).map(|(a, b)| a + b).collect())
        }
        _ => None,
    };

    let kept_count = strategy.kept_count(n);
    let mut kept = vec![strategy.kind == SelectionKind::Full; n];
    let ranking_score = match strategy.kind {
        SelectionKind::Full => None,
        SelectionKind::Sim => similarity.as_deref(),
        SelectionKind::Div => diversity.as_deref(),
        SelectionKind::DivPlusSim => composite.as_deref(),
    };
    if let Some(score) = ranking_score {
        for i in top_k_indices(score, paragraphs, kept_count) {
            kept[i] = true;
        }
    }

    let at = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|v| v[i]);
    let scores = paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| ScoreRecord {
            id: p.id().to_string(),
            similarity: at(&similarity, i),
            diversity: at(&diversity, i),
            composite: at(&composite, i),
            kept: kept[i],
        })
        .collect();
    Ok(SelectionResult {
        scores,
        strategy,
        kept_count,
    })
}

fn top_k_indices(score: &[f64], paragraphs: &[Paragraph], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    let cmp = |&a: &usize, &b: &usize| {
        score[b]
            .total_cmp(&score[a])
            .then_with(|| paragraphs[a].id().cmp(paragraphs[b].id()))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order
}
