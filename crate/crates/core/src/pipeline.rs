//! Pipeline stages. Each stage writes its artifacts under a fixed relative
//! path of the output directory; the CLI subcommands call the same stage
//! functions, so running them one by one reproduces `pipeline` output.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{MaskPreviewConfig, PipelineConfig};
use crate::corpus::{corpus_stats, dedupe, ingest_files, Corpus, CorpusStats, Source};
use crate::error::{Error, Result};
use crate::mlm::{
    export_mlm_dataset, mask_sequence_traced, split_train_val, ExportMeta, MaskAction, MaskingConfig, MaskingStats,
    MlmManifest, SplitSpec,
};
use crate::selection::{select, SelectionResult, SelectionStrategy, SelectionSummary, TaskReference};
use crate::vocab::{
    augment_vocabulary, term_frequencies_with, top_n_vocabulary, vocabulary_overlap, AugmentedVocab, OverlapMode,
    VocabSet, WordTokenizer,
};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INGEST_ERRORS_FILE: &str = "ingest_errors.jsonl";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";
pub const STATS_FILE: &str = "stats.json";
pub const STATS_TABLE_FILE: &str = "stats.txt";
pub const OVERLAP_FILE: &str = "overlap.json";
pub const SELECTION_DIR: &str = "selection";
pub const VOCAB_DIR: &str = "vocab";
pub const MLM_DIR: &str = "mlm";
pub const MASKING_DIR: &str = "masking";
pub const PIPELINE_MANIFEST_FILE: &str = "pipeline_manifest.json";

/// Output directory that remembers what was written into it.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Artifacts {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.track(rel);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        self.write(rel, &pretty_json(value)?)
    }

    fn track(&mut self, rel: &str) {
        let rel = PathBuf::from(rel);
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    Ok(json)
}

/// Reads an already-ingested corpus (e.g. a previous stage's `corpus.jsonl`).
/// Any schema failure is a data error.
pub fn read_corpus(path: &Path, source_default: Source) -> Result<Corpus> {
    let ingested = ingest_files(&[(path, source_default)])?;
    if let Some(e) = ingested.errors.first() {
        return Err(Error::data(format!(
            "{}: line {}: {} ({} bad lines)",
            path.display(),
            e.line,
            e.reason,
            ingested.errors.len()
        )));
    }
    Ok(ingested.corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub paragraphs: usize,
    pub rejected_lines: usize,
    pub duplicates_removed: usize,
}

pub fn ingest_stage(inputs: &[(PathBuf, Source)], remove_duplicates: bool, out: &mut Artifacts) -> Result<Corpus> {
    let ingested = ingest_files(inputs)?;
    let mut errors = Vec::new();
    ingested.write_error_report(&mut errors)?;
    let (corpus, removed) = if remove_duplicates {
        dedupe(&ingested.corpus)
    } else {
        (ingested.corpus.clone(), 0)
    };
    log::info!(
        "ingested {} paragraphs ({} rejected lines, {} duplicates removed)",
        corpus.len(),
        ingested.errors.len(),
        removed
    );
    out.write(CORPUS_FILE, &corpus.to_jsonl_bytes())?;
    out.write(INGEST_ERRORS_FILE, &errors)?;
    out.write_json(
        INGEST_SUMMARY_FILE,
        &IngestSummary {
            paragraphs: corpus.len(),
            rejected_lines: ingested.errors.len(),
            duplicates_removed: removed,
        },
    )?;
    Ok(corpus)
}

pub fn stats_stage(corpus: &Corpus, out: &mut Artifacts) -> Result<CorpusStats> {
    let stats = corpus_stats(corpus)?;
    out.write_json(STATS_FILE, &stats)?;
    out.write(STATS_TABLE_FILE, stats.render_table().as_bytes())?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub a: String,
    pub b: String,
    pub top_n: usize,
    pub mode: OverlapMode,
    pub a_size: usize,
    pub b_size: usize,
    pub intersection: usize,
    pub overlap_percent: f64,
}

/// Top-`top_n` lowercased unigram vocabulary of a corpus.
pub fn corpus_vocabulary(corpus: &Corpus, top_n: usize, label: &str) -> Result<VocabSet> {
    top_n_vocabulary(&term_frequencies_with(corpus, &WordTokenizer::default()), top_n, label)
}

pub fn overlap_report(a: &VocabSet, b: &VocabSet, top_n: usize, mode: OverlapMode) -> Result<OverlapReport> {
    let overlap_percent = vocabulary_overlap(a, b, mode)?;
    Ok(OverlapReport {
        a: a.label.clone(),
        b: b.label.clone(),
        top_n,
        mode,
        a_size: a.len(),
        b_size: b.len(),
        intersection: a.iter().filter(|t| b.contains(t)).count(),
        overlap_percent,
    })
}

pub fn overlap_stage(a: &VocabSet, b: &VocabSet, top_n: usize, mode: OverlapMode, out: &mut Artifacts) -> Result<OverlapReport> {
    let report = overlap_report(a, b, top_n, mode)?;
    out.write_json(OVERLAP_FILE, &report)?;
    Ok(report)
}

/// Texts of a downstream-task JSONL (each object needs a "text" field).
pub fn read_task_texts(path: &Path) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct TaskLine {
        text: String,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut texts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaskLine = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        texts.push(rec.text);
    }
    Ok(texts)
}

pub fn load_task_reference(path: &Path, vocab_size: usize) -> Result<TaskReference> {
    let texts = read_task_texts(path)?;
    TaskReference::from_texts(texts.iter().map(String::as_str), vocab_size)
}

pub fn select_stage(
    corpus: &Corpus,
    strategy: SelectionStrategy,
    task: Option<&TaskReference>,
    out: &mut Artifacts,
) -> Result<(SelectionResult, Corpus)> {
    let result = select(corpus, strategy, task)?;
    let selected = result.apply(corpus);
    let mut scores = Vec::new();
    result.write_scores_jsonl(&mut scores)?;
    out.write(&format!("{SELECTION_DIR}/scores.jsonl"), &scores)?;
    out.write(&format!("{SELECTION_DIR}/selected.jsonl"), &selected.to_jsonl_bytes())?;
    let summary: SelectionSummary = result.summary();
    out.write_json(&format!("{SELECTION_DIR}/summary.json"), &summary)?;
    log::info!("{}: kept {} of {}", strategy.kind, summary.kept_count, summary.total);
    Ok((result, selected))
}

pub fn augment_stage(
    corpus: &Corpus,
    base: &VocabSet,
    k: usize,
    tokenizer: &WordTokenizer,
    out: &mut Artifacts,
) -> Result<AugmentedVocab> {
    let table = term_frequencies_with(corpus, tokenizer);
    let aug = augment_vocabulary(base, &table, k);
    if aug.added.len() < k {
        log::warn!("only {} augmentation candidates available (asked for {k})", aug.added.len());
    }
    out.write_json(&format!("{VOCAB_DIR}/augmented.json"), &aug.report())?;
    let mut added = Vec::new();
    aug.write_added_tokens(&mut added)?;
    out.write(&format!("{VOCAB_DIR}/added_tokens.txt"), &added)?;
    Ok(aug)
}

pub fn split_stage(
    corpus: &Corpus,
    spec: &SplitSpec,
    created_at: &str,
    out: &mut Artifacts,
) -> Result<(Corpus, Corpus, MlmManifest)> {
    let (train, val) = split_train_val(corpus, spec)?;
    let meta = ExportMeta {
        spec,
        source_checksum: corpus.checksum(),
        created_at,
    };
    let manifest = export_mlm_dataset(&train, &val, &out.path(MLM_DIR), &meta)?;
    for f in ["train.jsonl", "val.jsonl", "manifest.json"] {
        out.track(&format!("{MLM_DIR}/{f}"));
    }
    Ok((train, val, manifest))
}

/// Word-level id space used only for masking previews: boundary and special
/// tokens first, then corpus tokens in rank order.
#[derive(Debug, Clone)]
pub struct PreviewVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl PreviewVocab {
    pub const BOS: u32 = 0;
    pub const PAD: u32 = 1;
    pub const EOS: u32 = 2;
    pub const UNK: u32 = 3;
    pub const MASK: u32 = 4;
    const SPECIALS: [&'static str; 5] = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"];

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let table = term_frequencies_with(corpus, &WordTokenizer::default());
        let tokens: Vec<String> = Self::SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(table.ranked().into_iter().map(|(t, _)| t.to_string()))
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        PreviewVocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or("<?>")
    }

    /// `<s> tokens… </s>`, truncated to `max_length` ids.
    pub fn encode(&self, text: &str, max_length: usize) -> Vec<u32> {
        let mut ids = vec![Self::BOS];
        WordTokenizer::default().for_each_token(text, |t| {
            if ids.len() < max_length - 1 {
                ids.push(self.index.get(t).copied().unwrap_or(Self::UNK));
            }
        });
        ids.push(Self::EOS);
        ids
    }

    pub fn masking_config(&self, cfg: &MaskPreviewConfig) -> MaskingConfig {
        MaskingConfig {
            mask_probability: cfg.mask_probability,
            replace_mask_fraction: cfg.replace_mask_fraction,
            replace_random_fraction: cfg.replace_random_fraction,
            keep_fraction: cfg.keep_fraction,
            special_token_ids: [Self::BOS, Self::PAD, Self::EOS].into_iter().collect(),
            mask_token_id: Self::MASK,
            vocab_size: self.tokens.len() as u32,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPreviewReport {
    pub sequences: usize,
    pub vocab_size: usize,
    pub config: MaskPreviewConfig,
    pub stats: MaskingStats,
    pub selected_rate: f64,
    pub mask_rate: f64,
    pub random_rate: f64,
    pub keep_rate: f64,
}

/// Masks every paragraph (sequence `i` uses generator stream `i`) and renders
/// the first few as aligned original / masked / label rows.
pub fn mask_preview(corpus: &Corpus, cfg: &MaskPreviewConfig) -> Result<(MaskPreviewReport, String)> {
    cfg.validate()?;
    let vocab = PreviewVocab::from_corpus(corpus);
    let mcfg = vocab.masking_config(cfg);
    let mut stats = MaskingStats::default();
    let mut text = String::new();
    for (i, p) in corpus.iter().enumerate() {
        let ids = vocab.encode(p.text(), cfg.max_length);
        let (batch, actions) = mask_sequence_traced(&ids, &mcfg, i as u64)?;
        stats.record(&ids, &actions, &mcfg);
        if i < cfg.preview_sequences {
            text.push_str(&render_alignment(p.id(), &vocab, &ids, &batch.input_ids, &actions));
        }
    }
    let (mask_rate, random_rate, keep_rate) = stats.action_rates();
    let report = MaskPreviewReport {
        sequences: corpus.len(),
        vocab_size: vocab.len(),
        config: cfg.clone(),
        stats,
        selected_rate: stats.selected_rate(),
        mask_rate,
        random_rate,
        keep_rate,
    };
    text.push_str(&format!(
        "selected {:.4} of {} eligible positions (mask {:.3} / random {:.3} / keep {:.3})\n",
        report.selected_rate, stats.eligible, mask_rate, random_rate, keep_rate
    ));
    Ok((report, text))
}

fn render_alignment(id: &str, vocab: &PreviewVocab, original: &[u32], masked: &[u32], actions: &[MaskAction]) -> String {
    let cols: Vec<[&str; 3]> = original
        .iter()
        .zip(masked)
        .zip(actions)
        .map(|((&o, &m), a)| {
            let label = if *a == MaskAction::Untouched { "·" } else { vocab.token(o) };
            [vocab.token(o), vocab.token(m), label]
        })
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("sequence {id}\n");
    for (row, name) in ["original", "masked", "label"].iter().enumerate() {
        let mut line = format!("  {name:<9}");
        for (c, w) in cols.iter().zip(&widths) {
            let cell = c[row];
            line.push(' ');
            line.push_str(cell);
            line.extend(std::iter::repeat_n(' ', w - cell.chars().count()));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn mask_preview_stage(corpus: &Corpus, cfg: &MaskPreviewConfig, out: &mut Artifacts) -> Result<(MaskPreviewReport, String)> {
    let (report, text) = mask_preview(corpus, cfg)?;
    out.write_json(&format!("{MASKING_DIR}/stats.json"), &report)?;
    out.write(&format!("{MASKING_DIR}/preview.txt"), text.as_bytes())?;
    Ok((report, text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub created_at: String,
    pub files: Vec<FileDigest>,
}

/// Runs every configured stage in order and writes a manifest of all
/// artifacts with their digests.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineManifest> {
    cfg.validate()?;
    let task = match &cfg.task {
        Some(path) => Some(load_task_reference(path, cfg.selection.reference_vocab_size)?),
        None => None,
    };
    let base_vocab = match &cfg.base_vocab {
        Some(path) => Some(VocabSet::read_file(path)?),
        None => None,
    };
    let reference = match &cfg.overlap_reference {
        Some(path) => Some(read_corpus(path, Source::Other)?),
        None => None,
    };

    let mut out = Artifacts::new(&cfg.out_dir)?;
    let inputs: Vec<(PathBuf, Source)> = cfg.inputs.iter().map(|i| (i.path.clone(), i.source)).collect();
    let corpus = ingest_stage(&inputs, cfg.dedupe, &mut out)?;
    stats_stage(&corpus, &mut out)?;
    if let Some(reference) = &reference {
        let a = corpus_vocabulary(&corpus, cfg.vocab.top_n, "corpus")?;
        let b = corpus_vocabulary(reference, cfg.vocab.top_n, "reference")?;
        overlap_stage(&a, &b, cfg.vocab.top_n, cfg.vocab.overlap_mode, &mut out)?;
    }
    let (_, selected) = select_stage(&corpus, cfg.selection.strategy()?, task.as_ref(), &mut out)?;
    if let Some(base) = &base_vocab {
        let tokenizer = WordTokenizer {
            lowercase: cfg.vocab.lowercase_augment,
        };
        augment_stage(&corpus, base, cfg.vocab.augment_k, &tokenizer, &mut out)?;
    }
    let (train, _, _) = split_stage(&selected, &cfg.split, &cfg.created_at, &mut out)?;
    mask_preview_stage(&train, &cfg.masking, &mut out)?;

    let mut files = Vec::new();
    let mut written = out.written().to_vec();
    written.sort();
    for rel in written {
        let bytes = std::fs::read(out.root().join(&rel)).map_err(|e| Error::io(out.root().join(&rel), e))?;
        files.push(FileDigest {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: crate::sha256_hex(&bytes),
        });
    }
    let manifest = PipelineManifest {
        created_at: cfg.created_at.clone(),
        files,
    };
    out.write_json(PIPELINE_MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}
