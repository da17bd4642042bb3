use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use domforge::carbon::{co2_emissions, format_kg, render_model_card, CarbonParams, ModelCardInput};
use domforge::config::{MaskPreviewConfig, PipelineConfig, SelectionConfig, VocabConfig};
use domforge::corpus::{Corpus, Source};
use domforge::evalkit::{
    aggregate_runs, build_fact_pairs, error_rate_reduction, read_claim_evidence, read_runs, relative_loss_reduction,
    render_results_table, write_jsonl, AggregateResult,
};
use domforge::mlm::{SplitSpec, DEFAULT_CREATED_AT};
use domforge::pipeline::{self, pretty_json, Artifacts};
use domforge::selection::{SelectionKind, SelectionStrategy};
use domforge::vocab::{OverlapMode, VocabSet, WordTokenizer};
use domforge::Error;

#[derive(Parser)]
#[command(name = "domforge", version, about = "Corpus curation and evaluation for domain-adaptive pretraining")]
struct Cli {
    /// JSON pipeline config; its values are defaults that flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Maximum worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest JSONL paragraph files into a single deduplicated corpus.
    Ingest(IngestArgs),
    /// Per-source paragraph counts and word-count quantiles.
    Stats(StatsArgs),
    /// Vocabulary overlap between two corpora (or a corpus and a vocab file).
    Overlap(OverlapArgs),
    /// Score paragraphs and keep a subset (full, sim, div, div_plus_sim).
    Select(SelectArgs),
    /// Append the most frequent new tokens to a base vocabulary.
    AugmentVocab(AugmentArgs),
    /// Seeded train/validation split and MLM dataset export.
    Split(SplitArgs),
    /// Mask a corpus and show aligned original/masked/label rows.
    MaskPreview(MaskPreviewArgs),
    /// Build claim [SEP] evidence pairs from claim/evidence records.
    Pairs(PairsArgs),
    /// Aggregate RunResult JSONL files into mean and std per model.
    Aggregate(AggregateArgs),
    /// Relative loss reduction and F1 error-rate reduction.
    Improvements(ImprovementArgs),
    /// Training emissions or a full climate performance model card.
    Carbon(CarbonArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input file, optionally tagged with its source: `news=path.jsonl`.
    #[arg(long = "input", value_name = "[SOURCE=]PATH")]
    inputs: Vec<String>,
    /// Source for untagged inputs and records without a "source" field.
    #[arg(long, default_value = "other")]
    source_default: String,
    #[arg(long)]
    no_dedupe: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Print the text table instead of JSON.
    #[arg(long)]
    table: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct OverlapArgs {
    #[arg(long)]
    a: PathBuf,
    /// Second corpus (JSONL); defaults to the config's overlap_reference.
    #[arg(long, conflicts_with = "b_vocab")]
    b: Option<PathBuf>,
    /// Token-per-line vocabulary used as-is instead of a second corpus.
    #[arg(long)]
    b_vocab: Option<PathBuf>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    keep_fraction: Option<f64>,
    /// Downstream-task JSONL; required for sim and div_plus_sim.
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    reference_vocab_size: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    base_vocab: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Lowercase tokens before ranking.
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stratified: bool,
    #[arg(long)]
    created_at: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MaskPreviewArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mask_probability: Option<f64>,
    /// Sequences shown in the preview.
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    /// `MODEL=runs.jsonl`, one per table row.
    #[arg(long = "runs", value_name = "MODEL=PATH", required = true)]
    runs: Vec<String>,
    #[arg(long, default_value = "Results")]
    title: String,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ImprovementArgs {
    #[arg(long, requires = "model_loss")]
    baseline_loss: Option<f64>,
    #[arg(long, requires = "baseline_loss")]
    model_loss: Option<f64>,
    #[arg(long, requires = "model_f1")]
    baseline_f1: Option<f64>,
    #[arg(long, requires = "baseline_f1")]
    model_f1: Option<f64>,
}

#[derive(Args)]
struct CarbonArgs {
    #[arg(long, required_unless_present = "card")]
    power_kw: Option<f64>,
    #[arg(long, required_unless_present = "card")]
    hours: Option<f64>,
    #[arg(long, required_unless_present = "card")]
    intensity: Option<f64>,
    /// Model-card input JSON; prints the nine-row card.
    #[arg(long, conflicts_with_all = ["power_kw", "hours", "intensity"])]
    card: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    keep_fraction: Option<f64>,
    /// Seed for both the split and the masking preview.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    created_at: Option<String>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DOMFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(Failure::Usage(e.render().to_string().trim().to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let (kind, message, code) = match f {
        Failure::Usage(m) => ("usage", m, 1),
        Failure::Data(m) => ("data", m, 2),
    };
    let err = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{err}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Data(e.to_string()))?;
    }
    let config = match &cli.config {
        Some(path) => Some(PipelineConfig::load(path)?),
        None => None,
    };
    let cfg = config.as_ref();
    match cli.command {
        Command::Ingest(a) => ingest(a, cfg),
        Command::Stats(a) => stats(a),
        Command::Overlap(a) => overlap(a, cfg),
        Command::Select(a) => select(a, cfg),
        Command::AugmentVocab(a) => augment(a, cfg),
        Command::Split(a) => split(a, cfg),
        Command::MaskPreview(a) => mask_preview(a, cfg),
        Command::Pairs(a) => pairs(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Improvements(a) => improvements(a),
        Command::Carbon(a) => carbon(a),
        Command::Pipeline(a) => run_pipeline(a, config),
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&PipelineConfig>) -> Option<PathBuf> {
    flag.or_else(|| cfg.map(|c| c.out_dir.clone()))
}

fn require_out_dir(flag: Option<PathBuf>, cfg: Option<&PipelineConfig>) -> CliResult<Artifacts> {
    let dir = out_dir(flag, cfg).ok_or_else(|| usage("--out-dir is required (or a --config with out_dir)"))?;
    Ok(Artifacts::new(dir)?)
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    let bytes = pretty_json(value)?;
    std::io::stdout().write_all(&bytes)?;
    Ok(())
}

fn read_corpus(path: &Path) -> CliResult<Corpus> {
    Ok(pipeline::read_corpus(path, Source::Other)?)
}

fn parse_input(spec: &str, default: Source) -> CliResult<(PathBuf, Source)> {
    if let Some((tag, path)) = spec.split_once('=') {
        if let Ok(source) = tag.parse::<Source>() {
            return Ok((PathBuf::from(path), source));
        }
    }
    Ok((PathBuf::from(spec), default))
}

fn ingest(a: IngestArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let default: Source = a.source_default.parse()?;
    let inputs: Vec<(PathBuf, Source)> = if !a.inputs.is_empty() {
        a.inputs.iter().map(|s| parse_input(s, default)).collect::<CliResult<_>>()?
    } else if let Some(cfg) = cfg {
        cfg.inputs.iter().map(|i| (i.path.clone(), i.source)).collect()
    } else {
        return Err(usage("at least one --input is required"));
    };
    let dedupe = !a.no_dedupe && cfg.is_none_or(|c| c.dedupe);
    let mut out = require_out_dir(a.out_dir, cfg)?;
    let corpus = pipeline::ingest_stage(&inputs, dedupe, &mut out)?;
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path(pipeline::INGEST_SUMMARY_FILE))?).map_err(Error::from)?;
    log::info!("wrote {} paragraphs to {}", corpus.len(), out.root().display());
    print_json(&summary)
}

fn stats(a: StatsArgs) -> CliResult {
    let corpus = read_corpus(&a.input)?;
    let stats = match a.out_dir {
        Some(dir) => pipeline::stats_stage(&corpus, &mut Artifacts::new(dir)?)?,
        None => domforge::corpus::corpus_stats(&corpus)?,
    };
    if a.table {
        print!("{}", stats.render_table());
        Ok(())
    } else {
        print_json(&stats)
    }
}

fn overlap(a: OverlapArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let defaults = cfg.map(|c| c.vocab.clone()).unwrap_or_default();
    let top_n = a.top_n.unwrap_or(defaults.top_n);
    let mode: OverlapMode = match a.mode {
        Some(m) => m.parse()?,
        None => defaults.overlap_mode,
    };
    let va = pipeline::corpus_vocabulary(&read_corpus(&a.a)?, top_n, "corpus")?;
    let b = a.b.or_else(|| cfg.and_then(|c| c.overlap_reference.clone()));
    let vb = match (&b, &a.b_vocab) {
        (_, Some(v)) => VocabSet::read_file(v)?,
        (Some(b), None) => pipeline::corpus_vocabulary(&read_corpus(b)?, top_n, "reference")?,
        (None, None) => return Err(usage("one of --b or --b-vocab is required")),
    };
    let report = match out_dir(a.out_dir, cfg) {
        Some(dir) => pipeline::overlap_stage(&va, &vb, top_n, mode, &mut Artifacts::new(dir)?)?,
        None => pipeline::overlap_report(&va, &vb, top_n, mode)?,
    };
    print_json(&report)
}

fn select(a: SelectArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let defaults = cfg.map(|c| c.selection.clone()).unwrap_or_default();
    let kind: SelectionKind = match &a.strategy {
        Some(s) => s.parse()?,
        None => defaults.strategy,
    };
    let strategy = SelectionStrategy::new(kind, a.keep_fraction.unwrap_or(defaults.keep_fraction))?;
    let task_path = a.task.or_else(|| cfg.and_then(|c| c.task.clone()));
    if kind.needs_task() && task_path.is_none() {
        return Err(usage(format!("--strategy {kind} requires --task")));
    }
    let task = match &task_path {
        Some(p) => Some(pipeline::load_task_reference(
            p,
            a.reference_vocab_size.unwrap_or(defaults.reference_vocab_size),
        )?),
        None => None,
    };
    let corpus = read_corpus(&a.input)?;
    let mut out = require_out_dir(a.out_dir, cfg)?;
    let (result, _) = pipeline::select_stage(&corpus, strategy, task.as_ref(), &mut out)?;
    print_json(&result.summary())
}

fn augment(a: AugmentArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let defaults: VocabConfig = cfg.map(|c| c.vocab.clone()).unwrap_or_default();
    let base_path = a
        .base_vocab
        .or_else(|| cfg.and_then(|c| c.base_vocab.clone()))
        .ok_or_else(|| usage("--base-vocab is required"))?;
    let base = VocabSet::read_file(&base_path)?;
    let corpus = read_corpus(&a.input)?;
    let tokenizer = WordTokenizer {
        lowercase: a.lowercase || defaults.lowercase_augment,
    };
    let mut out = require_out_dir(a.out_dir, cfg)?;
    let aug = pipeline::augment_stage(&corpus, &base, a.k.unwrap_or(defaults.augment_k), &tokenizer, &mut out)?;
    let report = aug.report();
    print_json(&json!({
        "base_size": report.base_size,
        "added_count": report.added.len(),
        "final_size": report.final_size,
    }))
}

fn split(a: SplitArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let mut spec: SplitSpec = cfg.map(|c| c.split).unwrap_or_default();
    if let Some(f) = a.train_fraction {
        spec.train_fraction = f;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.stratified |= a.stratified;
    let created_at = a
        .created_at
        .or_else(|| cfg.map(|c| c.created_at.clone()))
        .unwrap_or_else(|| DEFAULT_CREATED_AT.to_string());
    spec.validate()?;
    let corpus = read_corpus(&a.input)?;
    let mut out = require_out_dir(a.out_dir, cfg)?;
    let (_, _, manifest) = pipeline::split_stage(&corpus, &spec, &created_at, &mut out)?;
    print_json(&manifest)
}

fn mask_preview(a: MaskPreviewArgs, cfg: Option<&PipelineConfig>) -> CliResult {
    let mut mcfg: MaskPreviewConfig = cfg.map(|c| c.masking.clone()).unwrap_or_default();
    if let Some(s) = a.seed {
        mcfg.seed = s;
    }
    if let Some(p) = a.mask_probability {
        mcfg.mask_probability = p;
    }
    if let Some(n) = a.sequences {
        mcfg.preview_sequences = n;
    }
    if let Some(m) = a.max_length {
        mcfg.max_length = m;
    }
    mcfg.validate()?;
    let corpus = read_corpus(&a.input)?;
    let (_, text) = match out_dir(a.out_dir, cfg) {
        Some(dir) => pipeline::mask_preview_stage(&corpus, &mcfg, &mut Artifacts::new(dir)?)?,
        None => pipeline::mask_preview(&corpus, &mcfg)?,
    };
    print!("{text}");
    Ok(())
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn pairs(a: PairsArgs) -> CliResult {
    let records = read_claim_evidence(open(&a.input)?)?;
    let pairs = build_fact_pairs(&records)?;
    let summary = json!({
        "records": records.len(),
        "pairs": pairs.len(),
        "dropped_not_enough_info": records.len() - pairs.len(),
    });
    if let Some(dir) = a.out_dir {
        let mut out = Artifacts::new(dir)?;
        let mut buf = Vec::new();
        write_jsonl(&pairs, &mut buf)?;
        out.write("pairs.jsonl", &buf)?;
    }
    print_json(&summary)
}

fn aggregate(a: AggregateArgs) -> CliResult {
    let mut rows: Vec<(String, AggregateResult)> = Vec::new();
    for spec in &a.runs {
        let (model, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--runs expects MODEL=PATH, got '{spec}'")))?;
        let runs = read_runs(open(Path::new(path))?).map_err(|e| Failure::Data(format!("{path}: {e}")))?;
        rows.push((model.to_string(), aggregate_runs(&runs)?));
    }
    let table = render_results_table(&a.title, &rows);
    if let Some(dir) = a.out_dir {
        let mut out = Artifacts::new(dir)?;
        let json: Vec<_> = rows.iter().map(|(m, r)| json!({ "model": m, "result": r })).collect();
        out.write_json("aggregate.json", &json)?;
        out.write("aggregate.txt", table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn improvements(a: ImprovementArgs) -> CliResult {
    let mut report = serde_json::Map::new();
    if let (Some(b), Some(m)) = (a.baseline_loss, a.model_loss) {
        report.insert("relative_loss_reduction".into(), json!(relative_loss_reduction(b, m)?));
    }
    if let (Some(b), Some(m)) = (a.baseline_f1, a.model_f1) {
        report.insert("error_rate_reduction".into(), json!(error_rate_reduction(b, m)?));
    }
    if report.is_empty() {
        return Err(usage("give --baseline-loss/--model-loss and/or --baseline-f1/--model-f1"));
    }
    print_json(&report)
}

fn carbon(a: CarbonArgs) -> CliResult {
    let mut out = match a.out_dir {
        Some(dir) => Some(Artifacts::new(dir)?),
        None => None,
    };
    if let Some(card_path) = a.card {
        let text = std::fs::read_to_string(&card_path)
            .map_err(|e| Failure::Data(format!("{}: {e}", card_path.display())))?;
        let input: ModelCardInput =
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", card_path.display())))?;
        let card = render_model_card(&input)?;
        if let Some(out) = out.as_mut() {
            out.write_json("model_card.json", &card)?;
            out.write("model_card.txt", card.render_text().as_bytes())?;
        }
        print!("{}", card.render_text());
        return Ok(());
    }
    let params = CarbonParams::new(a.power_kw.unwrap(), a.hours.unwrap(), a.intensity.unwrap());
    let grams = co2_emissions(&params)?;
    let report = json!({ "params": params, "grams_co2e": grams, "rendered": format_kg(grams) });
    if let Some(out) = out.as_mut() {
        out.write_json("carbon.json", &report)?;
    }
    print_json(&report)
}

fn run_pipeline(a: PipelineArgs, config: Option<PipelineConfig>) -> CliResult {
    let mut cfg = config.ok_or_else(|| usage("pipeline requires --config"))?;
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    if let Some(s) = a.strategy {
        cfg.selection = SelectionConfig {
            strategy: s.parse()?,
            ..cfg.selection
        };
    }
    if let Some(f) = a.keep_fraction {
        cfg.selection.keep_fraction = f;
    }
    if let Some(seed) = a.seed {
        cfg.split.seed = seed;
        cfg.masking.seed = seed;
    }
    if let Some(c) = a.created_at {
        cfg.created_at = c;
    }
    let manifest = pipeline::run_pipeline(&cfg)?;
    print_json(&json!({
        "out_dir": cfg.out_dir,
        "files": manifest.files.len(),
    }))
}
