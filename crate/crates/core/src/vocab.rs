//! Word-level tokenization, frequency tables, vocabulary overlap and
//! tokenizer vocabulary augmentation.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Whitespace-and-punctuation word tokenizer.
///
/// Each whitespace-delimited chunk is split into runs of word characters
/// (alphanumerics and combining marks); every other character becomes a
/// standalone token. A chunk made only of non-word characters, such as
/// `+/-` or `...`, is kept whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordTokenizer {
    pub lowercase: bool,
}

impl Default for WordTokenizer {
    fn default() -> Self {
        WordTokenizer { lowercase: true }
    }
}

impl WordTokenizer {
    pub const CASED: WordTokenizer = WordTokenizer { lowercase: false };

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        self.for_each_token(text, |t| tokens.push(t.to_string()));
        tokens
    }

    /// Streams tokens without collecting them. The callback receives the
    /// lowercased form when `lowercase` is set.
    pub fn for_each_token(&self, text: &str, mut f: impl FnMut(&str)) {
        let mut lowered = String::new();
        let mut emit = |tok: &str| {
            if self.lowercase {
                lowered.clear();
                lowered.extend(tok.chars().flat_map(char::to_lowercase));
                f(&lowered);
            } else {
                f(tok);
            }
        };
        for chunk in text.split_whitespace() {
            if !chunk.chars().any(is_word_char) {
                emit(chunk);
                continue;
            }
            let mut start: Option<usize> = None;
            for (i, c) in chunk.char_indices() {
                if is_word_char(c) {
                    start.get_or_insert(i);
                } else {
                    if let Some(s) = start.take() {
                        emit(&chunk[s..i]);
                    }
                    emit(&chunk[i..i + c.len_utf8()]);
                }
            }
            if let Some(s) = start {
                emit(&chunk[s..]);
            }
        }
    }
}

/// Lowercased word tokens with punctuation split off.
pub fn tokenize_words(text: &str) -> Vec<String> {
    WordTokenizer::default().tokenize(text)
}

/// Frequency desc, then token ascending.
pub fn rank_order(a: (&str, u64), b: (&str, u64)) -> Ordering {
    b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str, n: u64) {
        if n == 0 {
            return;
        }
        match self.counts.get_mut(token) {
            Some(c) => *c += n,
            None => {
                self.counts.insert(token.to_string(), n);
            }
        }
        self.total_tokens += n;
    }

    pub fn add_text(&mut self, text: &str, tokenizer: &WordTokenizer) {
        tokenizer.for_each_token(text, |t| self.add(t, 1));
    }

    pub fn merge(mut self, other: FrequencyTable) -> FrequencyTable {
        if self.counts.len() < other.counts.len() {
            return other.merge(self);
        }
        for (token, n) in other.counts {
            *self.counts.entry(token).or_insert(0) += n;
        }
        self.total_tokens += other.total_tokens;
        self
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, &n)| (t.as_str(), n))
    }

    /// All entries in rank order.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut entries: Vec<_> = self.iter().collect();
        entries.sort_unstable_by(|a, b| rank_order(*a, *b));
        entries
    }

    /// The `n` best-ranked entries passing `keep`, in rank order.
    pub fn top_where(&self, n: usize, keep: impl Fn(&str) -> bool) -> Vec<(&str, u64)> {
        let mut entries: Vec<_> = self.iter().filter(|(t, _)| keep(t)).collect();
        if n == 0 {
            return Vec::new();
        }
        if n < entries.len() {
            entries.select_nth_unstable_by(n - 1, |a, b| rank_order(*a, *b));
            entries.truncate(n);
        }
        entries.sort_unstable_by(|a, b| rank_order(*a, *b));
        entries
    }
}

impl<S: AsRef<str>> FromIterator<S> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut table = FrequencyTable::new();
        for t in iter {
            table.add(t.as_ref(), 1);
        }
        table
    }
}

/// Token counts over every paragraph, using the lowercasing tokenizer.
pub fn term_frequencies(corpus: &Corpus) -> FrequencyTable {
    term_frequencies_with(corpus, &WordTokenizer::default())
}

pub fn term_frequencies_with(corpus: &Corpus, tokenizer: &WordTokenizer) -> FrequencyTable {
    corpus
        .paragraphs()
        .par_iter()
        .fold(FrequencyTable::new, |mut table, p| {
            table.add_text(p.text(), tokenizer);
            table
        })
        .reduce(FrequencyTable::new, FrequencyTable::merge)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSet {
    pub label: String,
    tokens: BTreeSet<String>,
}

impl VocabSet {
    pub fn new(label: impl Into<String>, tokens: impl IntoIterator<Item = impl Into<String>>) -> Self {
        VocabSet {
            label: label.into(),
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    /// One token per line; a trailing `\r` is stripped and empty lines skipped.
    pub fn read<R: BufRead>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut tokens = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let token = line.strip_suffix('\r').unwrap_or(&line);
            if !token.is_empty() {
                tokens.insert(token.to_string());
            }
        }
        Ok(VocabSet {
            label: label.into(),
            tokens,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        VocabSet::read(label, std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Stream(io) => Error::io(path, io),
            other => other,
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

/// The `n` highest-count tokens (ties lexicographic). Returns everything when
/// the table has fewer than `n` tokens.
pub fn top_n_vocabulary(table: &FrequencyTable, n: usize, label: impl Into<String>) -> Result<VocabSet> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(VocabSet::new(
        label,
        table.top_where(n, |_| true).into_iter().map(|(t, _)| t.to_string()),
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    /// |a ∩ b| / |a ∪ b|
    #[default]
    Jaccard,
    /// |a ∩ b| / |b|
    Directional,
}

impl std::str::FromStr for OverlapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaccard" => Ok(OverlapMode::Jaccard),
            "directional" => Ok(OverlapMode::Directional),
            _ => Err(Error::invalid(format!("unknown overlap mode '{s}'"))),
        }
    }
}

/// Overlap percentage in [0, 100].
pub fn vocabulary_overlap(a: &VocabSet, b: &VocabSet, mode: OverlapMode) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("empty vocabulary"));
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|t| large.contains(t)).count();
    let denom = match mode {
        OverlapMode::Jaccard => a.len() + b.len() - inter,
        OverlapMode::Directional => b.len(),
    };
    Ok(inter as f64 / denom as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedVocab {
    pub base: VocabSet,
    /// New tokens in rank order.
    pub added: Vec<String>,
    pub final_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedVocabReport {
    pub base_size: usize,
    pub added: Vec<String>,
    pub final_size: usize,
}

impl AugmentedVocab {
    pub fn report(&self) -> AugmentedVocabReport {
        AugmentedVocabReport {
            base_size: self.base.len(),
            added: self.added.clone(),
            final_size: self.final_size,
        }
    }

    /// Plain-text added-token list, one per line in rank order.
    pub fn write_added_tokens<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.added {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }
}

/// Appends the `k` most frequent tokens of `table` that are not already in
/// `base`. Fewer than `k` are added only when the candidates run out.
pub fn augment_vocabulary(base: &VocabSet, table: &FrequencyTable, k: usize) -> AugmentedVocab {
    let added: Vec<String> = table
        .top_where(k, |t| !base.contains(t) && !t.contains(['\n', '\r']))
        .into_iter()
        .map(|(t, _)| t.to_string())
        .collect();
    AugmentedVocab {
        base: base.clone(),
        final_size: base.len() + added.len(),
        added,
    }
}
