//! Downstream evaluation: task label schemas, claim/evidence pair
//! construction, weighted F1, cross-entropy, multi-run aggregation and the
//! relative-improvement arithmetic used when comparing models.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::seeded_rng;

/// Runs per experiment in the evaluation protocol.
pub const PROTOCOL_RUNS: u32 = 60;
/// Share of downstream examples used for training in each run.
pub const DOWNSTREAM_TRAIN_FRACTION: f64 = 0.9;
pub const CLAIM_EVIDENCE_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TextClassification,
    Sentiment,
    FactChecking,
}

impl Task {
    pub fn labels(self) -> &'static [Label] {
        match self {
            Task::TextClassification => &[Label::Yes, Label::No],
            Task::Sentiment => &[Label::Opportunity, Label::Neutral, Label::Risk],
            Task::FactChecking => &[Label::Supports, Label::Refutes, Label::NotEnoughInfo],
        }
    }

    pub fn accepts(self, label: Label) -> bool {
        self.labels().contains(&label)
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_classification" => Ok(Task::TextClassification),
            "sentiment" => Ok(Task::Sentiment),
            "fact_checking" => Ok(Task::FactChecking),
            _ => Err(Error::invalid(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no")]
    No,
    #[serde(rename = "opportunity")]
    Opportunity,
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "risk")]
    Risk,
    #[serde(rename = "SUPPORTS")]
    Supports,
    #[serde(rename = "REFUTES")]
    Refutes,
    #[serde(rename = "NOT_ENOUGH_INFO")]
    NotEnoughInfo,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Opportunity => "opportunity",
            Label::Neutral => "neutral",
            Label::Risk => "risk",
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::NotEnoughInfo => "NOT_ENOUGH_INFO",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Case-insensitive; accepts the singular "support"/"refute" spellings and
/// common not-enough-info variants.
impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Ok(match key.as_str() {
            "yes" => Label::Yes,
            "no" => Label::No,
            "opportunity" => Label::Opportunity,
            "neutral" => Label::Neutral,
            "risk" => Label::Risk,
            "supports" | "support" => Label::Supports,
            "refutes" | "refute" => Label::Refutes,
            "not_enough_info" | "nei" | "not_enough_information" => Label::NotEnoughInfo,
            _ => return Err(Error::data(format!("unknown label '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownstreamExample {
    pub task: Task,
    pub text: String,
    pub label: Label,
}

impl DownstreamExample {
    pub fn new(task: Task, text: impl Into<String>, label: Label) -> Result<Self> {
        if !task.accepts(label) {
            return Err(Error::data(format!("label {label} is not valid for task {task:?}")));
        }
        Ok(DownstreamExample {
            task,
            text: text.into(),
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimEvidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub claim: String,
    pub evidence: String,
    pub label: String,
}

/// Joins each claim and its evidence with a `[SEP]` marker, dropping
/// NOT_ENOUGH_INFO evidence.
pub fn build_fact_pairs(records: &[ClaimEvidence]) -> Result<Vec<DownstreamExample>> {
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let label: Label = r.label.parse().ok().filter(|l| Task::FactChecking.accepts(*l)).ok_or_else(|| {
            let who = r.id.clone().unwrap_or_else(|| format!("#{}", i + 1));
            Error::data(format!("record {who}: unknown fact-checking label '{}'", r.label))
        })?;
        if label == Label::NotEnoughInfo {
            continue;
        }
        let text = format!("{}{}{}", r.claim, CLAIM_EVIDENCE_SEPARATOR, r.evidence);
        out.push(DownstreamExample {
            task: Task::FactChecking,
            text,
            label,
        });
    }
    Ok(out)
}

/// Reads claim/evidence records, one JSON object per non-blank line.
pub fn read_claim_evidence<R: BufRead>(reader: R) -> Result<Vec<ClaimEvidence>> {
    read_jsonl(reader)
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-class precision, recall, F1 and support.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub fn per_class_scores<L: Ord + Clone>(y_true: &[L], y_pred: &[L]) -> Result<BTreeMap<L, ClassScores>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} true labels, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("no labels"));
    }
    // (tp, predicted, actual)
    let mut counts: BTreeMap<L, (usize, usize, usize)> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        counts.entry(t.clone()).or_default().2 += 1;
        let e = counts.entry(p.clone()).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(counts
        .into_iter()
        .map(|(label, (tp, predicted, actual))| {
            let precision = div(tp, predicted);
            let recall = div(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                label,
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: actual,
                },
            )
        })
        .collect())
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1<L: Ord + Clone>(y_true: &[L], y_pred: &[L]) -> Result<f64> {
    let scores = per_class_scores(y_true, y_pred)?;
    let n = y_true.len() as f64;
    Ok(scores.values().map(|s| s.f1 * s.support as f64 / n).sum())
}

pub const DEFAULT_CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    /// Mean negative log-likelihood (nats).
    pub value: f64,
    /// Examples whose true-class probability was raised to epsilon.
    pub clamped: usize,
}

/// Mean of `-ln p[true]`. Probabilities below `epsilon` are clamped and
/// counted in [`CrossEntropy::clamped`].
pub fn cross_entropy(probabilities: &[Vec<f64>], y_true: &[usize], epsilon: f64) -> Result<CrossEntropy> {
    if probabilities.len() != y_true.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} distributions, {} labels",
            probabilities.len(),
            y_true.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (i, (probs, &label)) in probabilities.iter().zip(y_true).enumerate() {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::data(format!("example {i}: not a probability distribution (sums to {sum})")));
        }
        let p = *probs
            .get(label)
            .ok_or_else(|| Error::data(format!("example {i}: label {label} out of range")))?;
        let p = if p < epsilon {
            clamped += 1;
            epsilon
        } else {
            p
        };
        total -= p.ln();
    }
    Ok(CrossEntropy {
        value: total / probabilities.len() as f64,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResult {
    pub run_index: u32,
    pub val_loss: f64,
    pub weighted_f1: f64,
}

impl RunResult {
    pub fn validate(&self) -> Result<()> {
        if !(1..=PROTOCOL_RUNS).contains(&self.run_index) {
            return Err(Error::data(format!(
                "run_index {} outside 1..={PROTOCOL_RUNS}",
                self.run_index
            )));
        }
        if !self.val_loss.is_finite() || self.val_loss < 0.0 {
            return Err(Error::data(format!("run {}: invalid val_loss {}", self.run_index, self.val_loss)));
        }
        if !self.weighted_f1.is_finite() || !(0.0..=1.0).contains(&self.weighted_f1) {
            return Err(Error::data(format!(
                "run {}: invalid weighted_f1 {}",
                self.run_index, self.weighted_f1
            )));
        }
        Ok(())
    }
}

/// Reads and validates RunResult JSONL.
pub fn read_runs<R: BufRead>(reader: R) -> Result<Vec<RunResult>> {
    let runs: Vec<RunResult> = read_jsonl(reader)?;
    for r in &runs {
        r.validate()?;
    }
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub n_runs: usize,
}

/// Mean and sample (n − 1) standard deviation; std is 0 for a single run.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_runs(runs: &[RunResult]) -> Result<AggregateResult> {
    if runs.is_empty() {
        return Err(Error::data("no runs to aggregate"));
    }
    for r in runs {
        r.validate()?;
    }
    let losses: Vec<f64> = runs.iter().map(|r| r.val_loss).collect();
    let f1s: Vec<f64> = runs.iter().map(|r| r.weighted_f1).collect();
    let (mean_loss, std_loss) = mean_std(&losses);
    let (mean_f1, std_f1) = mean_std(&f1s);
    Ok(AggregateResult {
        mean_loss,
        std_loss,
        mean_f1,
        std_f1,
        n_runs: runs.len(),
    })
}

fn subscript(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '0'..='9' => char::from_u32('₀' as u32 + (c as u32 - '0' as u32)).unwrap(),
            '.' => '.',
            '-' => '₋',
            other => other,
        })
        .collect()
}

/// `0.748₍0.036₎`: mean with the standard deviation as a subscript.
pub fn format_mean_std(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$}₍{}₎", subscript(&format!("{std:.decimals$}")))
}

impl AggregateResult {
    pub fn loss_cell(&self) -> String {
        format_mean_std(self.mean_loss, self.std_loss, 3)
    }

    pub fn f1_cell(&self) -> String {
        format_mean_std(self.mean_f1, self.std_f1, 3)
    }
}

/// Text table with one row per model: `Model | Loss | F1`.
pub fn render_results_table(title: &str, rows: &[(String, AggregateResult)]) -> String {
    let width = rows.iter().map(|(m, _)| m.chars().count()).max().unwrap_or(5).max(5);
    let mut out = format!("{title}\n");
    out.push_str(&format!("{:<width$}  {:<14}  {:<14}\n", "Model", "Loss", "F1"));
    for (model, agg) in rows {
        out.push_str(&format!(
            "{:<width$}  {:<14}  {:<14}\n",
            model,
            agg.loss_cell(),
            agg.f1_cell()
        ));
    }
    out
}

/// Relative shrinkage of the F1 error `1 − F1`, in percent.
pub fn error_rate_reduction(baseline_f1: f64, model_f1: f64) -> Result<f64> {
    let baseline_error = 1.0 - baseline_f1;
    if baseline_error == 0.0 {
        return Err(Error::invalid("zero baseline error"));
    }
    if !(baseline_f1 < 1.0) {
        return Err(Error::invalid(format!("baseline F1 must be below 1, got {baseline_f1}")));
    }
    Ok((baseline_error - (1.0 - model_f1)) / baseline_error * 100.0)
}

/// Relative loss decrease, in percent.
pub fn relative_loss_reduction(baseline_loss: f64, model_loss: f64) -> Result<f64> {
    if !(baseline_loss > 0.0) {
        return Err(Error::invalid(format!(
            "baseline loss must be positive, got {baseline_loss}"
        )));
    }
    Ok((baseline_loss - model_loss) / baseline_loss * 100.0)
}

/// Train/validation indices for downstream run `run_index`: a seeded shuffle
/// with `round(0.9 · n)` training examples.
pub fn downstream_split(n: usize, run_index: u32, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, run_index as u64));
    let n_train = (DOWNSTREAM_TRAIN_FRACTION * n as f64).round() as usize;
    let val = order.split_off(n_train);
    (order, val)
}
