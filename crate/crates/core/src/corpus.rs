//! Paragraph corpora: JSONL ingestion, export, deduplication and the
//! per-source word-count statistics (paragraph count, Q1, mean, Q3).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    News,
    Abstracts,
    Reports,
    Other,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::News, Source::Abstracts, Source::Reports, Source::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::News => "news",
            Source::Abstracts => "abstracts",
            Source::Reports => "reports",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "news" => Ok(Source::News),
            "abstracts" => Ok(Source::Abstracts),
            "reports" => Ok(Source::Reports),
            "other" => Ok(Source::Other),
            _ => Err(Error::invalid(format!(
                "unknown source '{s}' (expected news, abstracts, reports or other)"
            ))),
        }
    }
}

/// Number of maximal runs of non-whitespace characters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One corpus unit. The text is stored byte-exactly as ingested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    id: String,
    source: Source,
    text: String,
    word_count: usize,
}

impl Paragraph {
    pub fn new(id: impl Into<String>, source: Source, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(Error::data("empty id"));
        }
        if text.trim().is_empty() {
            return Err(Error::data("empty text"));
        }
        let word_count = word_count(&text);
        Ok(Paragraph {
            id,
            source,
            text,
            word_count,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }
}

#[derive(Serialize)]
struct ParagraphRecord<'a> {
    id: &'a str,
    source: Source,
    text: &'a str,
}

/// An ordered collection of paragraphs with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    paragraphs: Vec<Paragraph>,
    ids: HashSet<String>,
    provenance: BTreeMap<String, String>,
}

/// Two corpora are equal when they hold the same paragraphs in the same order;
/// provenance is metadata and does not take part.
impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.paragraphs == other.paragraphs
    }
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_paragraphs(paragraphs: impl IntoIterator<Item = Paragraph>) -> Result<Self> {
        let mut corpus = Corpus::new();
        for p in paragraphs {
            corpus.push(p)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, paragraph: Paragraph) -> Result<()> {
        if !self.ids.insert(paragraph.id.clone()) {
            return Err(Error::data(format!("duplicate id '{}'", paragraph.id)));
        }
        self.paragraphs.push(paragraph);
        Ok(())
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Paragraph> {
        self.paragraphs.iter()
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn set_provenance(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.provenance.insert(key.into(), value.into());
    }

    /// Keeps the paragraphs for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&Paragraph) -> bool) -> Corpus {
        let paragraphs: Vec<Paragraph> = self.paragraphs.iter().filter(|p| keep(p)).cloned().collect();
        let ids = paragraphs.iter().map(|p| p.id.clone()).collect();
        Corpus {
            paragraphs,
            ids,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `{"id", "source", "text"}` per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.paragraphs {
            let record = ParagraphRecord {
                id: &p.id,
                source: p.source,
                text: &p.text,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn write_jsonl_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical JSONL export.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl_bytes()))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Paragraph;
    type IntoIter = std::slice::Iter<'a, Paragraph>;

    fn into_iter(self) -> Self::IntoIter {
        self.paragraphs.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub source_default: Source,
    /// Prefix for generated ids; the 1-based line number is appended zero-padded.
    pub id_prefix: String,
}

impl IngestOptions {
    pub fn new(source_default: Source) -> Self {
        IngestOptions {
            source_default,
            id_prefix: "p".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub corpus: Corpus,
    pub errors: Vec<IngestError>,
}

impl Ingested {
    pub fn write_error_report<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.errors {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    source: Option<String>,
    text: String,
}

/// Reads newline-delimited JSON paragraphs. Lines that fail the schema are
/// collected in the error report; only stream I/O failures abort.
pub fn ingest_jsonl<R: BufRead>(reader: R, opts: &IngestOptions) -> Result<Ingested> {
    let mut ingested = Ingested::default();
    ingest_into(reader, opts, &mut ingested)?;
    Ok(ingested)
}

fn ingest_into<R: BufRead>(mut reader: R, opts: &IngestOptions, acc: &mut Ingested) -> Result<()> {
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match parse_line(&buf, line_no, opts) {
            Ok(p) => {
                if let Err(e) = acc.corpus.push(p) {
                    acc.errors.push(IngestError {
                        line: line_no,
                        reason: e.to_string(),
                    });
                }
            }
            Err(reason) => acc.errors.push(IngestError {
                line: line_no,
                reason,
            }),
        }
    }
    Ok(())
}

fn parse_line(line: &[u8], line_no: usize, opts: &IngestOptions) -> std::result::Result<Paragraph, String> {
    let raw: RawRecord = serde_json::from_slice(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let source = match raw.source.as_deref() {
        None => opts.source_default,
        Some(s) => s.parse().map_err(|e: Error| e.to_string())?,
    };
    let id = raw
        .id
        .unwrap_or_else(|| format!("{}{:08}", opts.id_prefix, line_no));
    Paragraph::new(id, source, raw.text).map_err(|e| e.to_string())
}

/// Ingests several files in order. Generated ids are prefixed `f{index}-p` so
/// they cannot collide across files; error lines are numbered per file and
/// carry the file in the reason.
pub fn ingest_files(inputs: &[(impl AsRef<Path>, Source)]) -> Result<Ingested> {
    let mut acc = Ingested::default();
    for (i, (path, source)) in inputs.iter().enumerate() {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let opts = IngestOptions {
            source_default: *source,
            id_prefix: if inputs.len() == 1 {
                "p".to_string()
            } else {
                format!("f{i}-p")
            },
        };
        let mut part = Ingested {
            corpus: std::mem::take(&mut acc.corpus),
            errors: Vec::new(),
        };
        ingest_into(BufReader::new(file), &opts, &mut part).map_err(|e| match e {
            Error::Stream(io) => Error::io(path, io),
            other => other,
        })?;
        acc.corpus = part.corpus;
        acc.errors.extend(part.errors.into_iter().map(|mut e| {
            if inputs.len() > 1 {
                e.reason = format!("{}: {}", path.display(), e.reason);
            }
            e
        }));
        acc.corpus
            .set_provenance(format!("input.{i}"), format!("{} ({})", path.display(), source));
    }
    Ok(acc)
}

/// Linear interpolation between order statistics ("type 7").
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub paragraphs: usize,
    pub q1: f64,
    pub mean: f64,
    pub q3: f64,
}

impl SummaryStats {
    fn from_word_counts(mut counts: Vec<f64>) -> Self {
        counts.sort_by(f64::total_cmp);
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        SummaryStats {
            paragraphs: counts.len(),
            q1: quantile(&counts, 0.25),
            mean,
            q3: quantile(&counts, 0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<Source, SummaryStats>,
    pub total: SummaryStats,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::data("no paragraphs"));
    }
    let mut by_source: BTreeMap<Source, Vec<f64>> = BTreeMap::new();
    for p in corpus {
        by_source.entry(p.source).or_default().push(p.word_count as f64);
    }
    let all: Vec<f64> = corpus.iter().map(|p| p.word_count as f64).collect();
    Ok(CorpusStats {
        per_source: by_source
            .into_iter()
            .map(|(s, counts)| (s, SummaryStats::from_word_counts(counts)))
            .collect(),
        total: SummaryStats::from_word_counts(all),
    })
}

impl CorpusStats {
    /// Plain-text table; word-count columns are rounded to integers.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>14} {:>8} {:>8} {:>8}\n",
            "Dataset", "Paragraphs", "Q1", "Mean", "Q3"
        ));
        let row = |name: &str, s: &SummaryStats| {
            format!(
                "{:<12} {:>14} {:>8.0} {:>8.0} {:>8.0}\n",
                name,
                thousands(s.paragraphs),
                s.q1,
                s.mean,
                s.q3
            )
        };
        for (source, s) in &self.per_source {
            let mut name = source.as_str().to_string();
            name[..1].make_ascii_uppercase();
            out.push_str(&row(&name, s));
        }
        out.push_str(&row("Total", &self.total));
        out
    }
}

pub(crate) fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// NFC, lowercase, whitespace runs collapsed to a single space.
pub fn normalize_for_dedupe(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops every paragraph whose normalized text was already seen.
pub fn dedupe(corpus: &Corpus) -> (Corpus, usize) {
    let mut seen = HashSet::with_capacity(corpus.len());
    let kept = corpus.filtered(|p| seen.insert(normalize_for_dedupe(&p.text)));
    let removed = corpus.len() - kept.len();
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IngestOptions {
        IngestOptions::new(Source::Other)
    }

    #[test]
    fn word_count_collapses_whitespace() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("climate  change\nrisk"), 3);
        assert_eq!(word_count("  \t "), 0);
        assert_eq!(word_count("a\u{00a0}b"), 2);
    }

    #[test]
    fn ingest_preserves_ids_and_generates_missing() {
        let input = r#"{"id":"x1","source":"news","text":"one"}
{"text":"two","source":"reports"}
{"id":"x3","text":"three"}
"#;
        let got = ingest_jsonl(input.as_bytes(), &IngestOptions::new(Source::Abstracts)).unwrap();
        assert!(got.errors.is_empty());
        let ids: Vec<_> = got.corpus.iter().map(|p| p.id().to_string()).collect();
        assert_eq!(ids, ["x1", "p00000002", "x3"]);
        assert_eq!(got.corpus.paragraphs()[2].source(), Source::Abstracts);
        assert_eq!(got.corpus.paragraphs()[1].source(), Source::Reports);
    }

    #[test]
    fn ingest_reports_bad_lines() {
        let input = "{\"text\":\"\"}\nnot json\n{\"text\":\"ok\",\"source\":\"blog\"}\n{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        let got = ingest_jsonl(input.as_bytes(), &opts()).unwrap();
        assert_eq!(got.corpus.len(), 1);
        let lines: Vec<_> = got.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, [1, 2, 3, 5]);
        assert!(got.errors[0].reason.contains("empty text"));
        assert!(got.errors[2].reason.contains("unknown source"));
        assert!(got.errors[3].reason.contains("duplicate id"));
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let got = ingest_jsonl(&b""[..], &opts()).unwrap();
        assert!(got.corpus.is_empty());
        assert!(got.errors.is_empty());
    }

    #[test]
    fn invalid_utf8_line_is_reported() {
        let input = b"{\"text\":\"\xff\xfe\"}\n{\"text\":\"fine\"}\n";
        let got = ingest_jsonl(&input[..], &opts()).unwrap();
        assert_eq!(got.corpus.len(), 1);
        assert_eq!(got.errors.len(), 1);
        assert_eq!(got.errors[0].line, 1);
    }

    #[test]
    fn quantiles_linear_interpolation() {
        let xs = [10.0, 20.0, 30.0, 40.0];
        assert_eq!(quantile(&xs, 0.25), 17.5);
        assert_eq!(quantile(&xs, 0.75), 32.5);
        assert_eq!(quantile(&xs, 0.5), 25.0);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn stats_mean_and_counts() {
        let mut c = Corpus::new();
        for (i, n) in [10usize, 20, 30, 40].iter().enumerate() {
            let text = vec!["w"; *n].join(" ");
            let source = if i < 3 { Source::News } else { Source::Reports };
            c.push(Paragraph::new(format!("{i}"), source, text).unwrap()).unwrap();
        }
        let stats = corpus_stats(&c).unwrap();
        assert_eq!(stats.total.mean, 25.0);
        assert_eq!(stats.total.q1, 17.5);
        assert_eq!(stats.total.q3, 32.5);
        assert_eq!(stats.per_source[&Source::News].paragraphs, 3);
        assert_eq!(stats.per_source[&Source::Reports].paragraphs, 1);
        assert_eq!(stats.total.paragraphs, 4);
    }

    #[test]
    fn stats_json_layout() {
        let c = Corpus::from_paragraphs([Paragraph::new("a", Source::News, "x y").unwrap()]).unwrap();
        let v = serde_json::to_value(corpus_stats(&c).unwrap()).unwrap();
        assert_eq!(v["per_source"]["news"]["paragraphs"], 1);
        assert_eq!(v["total"]["mean"], 2.0);
    }

    #[test]
    fn empty_corpus_stats_error() {
        let err = corpus_stats(&Corpus::new()).unwrap_err();
        assert_eq!(err.to_string(), "no paragraphs");
    }

    #[test]
    fn table_rendering_rounds_mean() {
        let c = Corpus::from_paragraphs([
            Paragraph::new("a", Source::News, "x").unwrap(),
            Paragraph::new("b", Source::News, "x y").unwrap(),
        ])
        .unwrap();
        let table = corpus_stats(&c).unwrap().render_table();
        assert!(table.contains("News"));
        assert!(table.lines().last().unwrap().starts_with("Total"));
        assert_eq!(thousands(2046523), "2,046,523");
        assert_eq!(thousands(999), "999");
    }

    #[test]
    fn dedupe_keeps_first() {
        let c = Corpus::from_paragraphs([
            Paragraph::new("1", Source::News, "Climate  Risk").unwrap(),
            Paragraph::new("2", Source::News, "other").unwrap(),
            Paragraph::new("3", Source::News, "climate risk\n").unwrap(),
        ])
        .unwrap();
        let (d, removed) = dedupe(&c);
        assert_eq!(removed, 1);
        let ids: Vec<_> = d.iter().map(Paragraph::id).collect();
        assert_eq!(ids, ["1", "2"]);
        let (again, removed_again) = dedupe(&d);
        assert_eq!(removed_again, 0);
        assert_eq!(again, d);
    }

    #[test]
    fn dedupe_uses_nfc() {
        // "é" precomposed vs "e" + combining acute
        let c = Corpus::from_paragraphs([
            Paragraph::new("1", Source::News, "caf\u{e9}").unwrap(),
            Paragraph::new("2", Source::News, "cafe\u{301}").unwrap(),
        ])
        .unwrap();
        assert_eq!(dedupe(&c).1, 1);
    }
}
