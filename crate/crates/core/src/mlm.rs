//! Masked-language-modeling data preparation: seeded train/validation split,
//! token masking (preview and statistics), and dataset export.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Source};
use crate::error::{Error, Result};

/// Label value at positions that are not predicted.
pub const IGNORE_INDEX: i64 = -100;

/// Deterministic generator for `(seed, stream)`. ChaCha is counter based, so
/// every stream is reproducible independently of the others.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each source separately, allocating the train count across
    /// sources by largest remainder.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratified: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn train_count(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).round() as usize
    }
}

/// Splits paragraphs into disjoint train and validation corpora with
/// `|train| = round(train_fraction · N)`. Both halves keep corpus order.
pub fn split_train_val(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let n = corpus.len();
    if n < 2 {
        return Err(Error::data(format!("corpus too small to split ({n} paragraphs)")));
    }
    let n_train = spec.train_count(n);
    let mut rng = seeded_rng(spec.seed, 0);
    let mut in_train = vec![false; n];

    if spec.stratified {
        let mut groups: BTreeMap<Source, Vec<usize>> = BTreeMap::new();
        for (i, p) in corpus.iter().enumerate() {
            groups.entry(p.source()).or_default().push(i);
        }
        let quotas = largest_remainder(
            &groups.values().map(Vec::len).collect::<Vec<_>>(),
            spec.train_fraction,
            n_train,
        );
        for (mut members, quota) in groups.into_values().zip(quotas) {
            members.shuffle(&mut rng);
            for &i in &members[..quota] {
                in_train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
    }

    let mut flags = in_train.iter();
    let train = corpus.filtered(|_| *flags.next().unwrap());
    let mut flags = in_train.iter();
    let val = corpus.filtered(|_| !*flags.next().unwrap());
    Ok((train, val))
}

/// Integer quotas proportional to `sizes · fraction` summing to `target`.
fn largest_remainder(sizes: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = quotas.iter().sum();
    for &i in order.iter().cycle().take(sizes.len() * 2) {
        if assigned >= target {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            assigned += 1;
        }
    }
    quotas
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    pub mask_probability: f64,
    pub replace_mask_fraction: f64,
    pub replace_random_fraction: f64,
    pub keep_fraction: f64,
    pub special_token_ids: BTreeSet<u32>,
    pub mask_token_id: u32,
    pub vocab_size: u32,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_probability: 0.15,
            replace_mask_fraction: 0.8,
            replace_random_fraction: 0.1,
            keep_fraction: 0.1,
            special_token_ids: BTreeSet::new(),
            mask_token_id: 0,
            vocab_size: 1,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("mask_probability", self.mask_probability)?;
        unit("replace_mask_fraction", self.replace_mask_fraction)?;
        unit("replace_random_fraction", self.replace_random_fraction)?;
        unit("keep_fraction", self.keep_fraction)?;
        let sum = self.replace_mask_fraction + self.replace_random_fraction + self.keep_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mask/random/keep fractions sum to {sum}, expected 1"
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        if self.mask_token_id >= self.vocab_size {
            return Err(Error::invalid(format!(
                "mask_token_id {} is outside the vocabulary (size {})",
                self.mask_token_id, self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedBatch {
    pub input_ids: Vec<u32>,
    /// Original id at predicted positions, [`IGNORE_INDEX`] elsewhere.
    pub labels: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAction {
    Untouched,
    Masked,
    Randomized,
    Kept,
}

/// Masks one sequence using the generator stream for `sequence_index`.
pub fn mask_sequence(token_ids: &[u32], cfg: &MaskingConfig, sequence_index: u64) -> Result<MaskedBatch> {
    mask_sequence_traced(token_ids, cfg, sequence_index).map(|(batch, _)| batch)
}

/// Masks `token_ids` with stream 0 of `cfg.seed`.
pub fn mask_tokens(token_ids: &[u32], cfg: &MaskingConfig) -> Result<MaskedBatch> {
    mask_sequence(token_ids, cfg, 0)
}

/// As [`mask_sequence`], also returning what happened at every position.
pub fn mask_sequence_traced(
    token_ids: &[u32],
    cfg: &MaskingConfig,
    sequence_index: u64,
) -> Result<(MaskedBatch, Vec<MaskAction>)> {
    cfg.validate()?;
    if let Some((pos, id)) = token_ids.iter().enumerate().find(|(_, &id)| id >= cfg.vocab_size) {
        return Err(Error::invalid(format!(
            "token id {id} at position {pos} is outside the vocabulary (size {})",
            cfg.vocab_size
        )));
    }
    let mut rng = seeded_rng(cfg.seed, sequence_index);
    let mask_cut = cfg.replace_mask_fraction;
    let random_cut = cfg.replace_mask_fraction + cfg.replace_random_fraction;

    let mut input_ids = token_ids.to_vec();
    let mut labels = vec![IGNORE_INDEX; token_ids.len()];
    let mut actions = vec![MaskAction::Untouched; token_ids.len()];
    for (i, &id) in token_ids.iter().enumerate() {
        if cfg.special_token_ids.contains(&id) {
            continue;
        }
        if rng.gen::<f64>() >= cfg.mask_probability {
            continue;
        }
        labels[i] = id as i64;
        let r: f64 = rng.gen();
        actions[i] = if r < mask_cut {
            input_ids[i] = cfg.mask_token_id;
            MaskAction::Masked
        } else if r < random_cut {
            input_ids[i] = rng.gen_range(0..cfg.vocab_size);
            MaskAction::Randomized
        } else {
            MaskAction::Kept
        };
    }
    Ok((MaskedBatch { input_ids, labels }, actions))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskingStats {
    pub positions: u64,
    pub eligible: u64,
    pub selected: u64,
    pub masked: u64,
    pub randomized: u64,
    pub kept: u64,
}

impl MaskingStats {
    pub fn record(&mut self, token_ids: &[u32], actions: &[MaskAction], cfg: &MaskingConfig) {
        self.positions += token_ids.len() as u64;
        self.eligible += token_ids
            .iter()
            .filter(|id| !cfg.special_token_ids.contains(id))
            .count() as u64;
        for a in actions {
            match a {
                MaskAction::Untouched => {}
                MaskAction::Masked => self.masked += 1,
                MaskAction::Randomized => self.randomized += 1,
                MaskAction::Kept => self.kept += 1,
            }
        }
        self.selected = self.masked + self.randomized + self.kept;
    }

    /// Selected share of eligible (non-special) positions.
    pub fn selected_rate(&self) -> f64 {
        ratio(self.selected, self.eligible)
    }

    /// Shares of the selected positions that were masked, randomized, kept.
    pub fn action_rates(&self) -> (f64, f64, f64) {
        (
            ratio(self.masked, self.selected),
            ratio(self.randomized, self.selected),
            ratio(self.kept, self.selected),
        )
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmManifest {
    pub train_count: usize,
    pub val_count: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
    /// SHA-256 of the canonical JSONL of the corpus that was split.
    pub source_checksum: String,
    pub train_checksum: String,
    pub val_checksum: String,
    pub created_at: String,
}

/// Timestamp written when the caller does not supply one; exports never read
/// the wall clock.
pub const DEFAULT_CREATED_AT: &str = "1970-01-01T00:00:00Z";

pub struct ExportMeta<'a> {
    pub spec: &'a SplitSpec,
    pub source_checksum: String,
    pub created_at: &'a str,
}

/// Writes `train.jsonl`, `val.jsonl` and `manifest.json` into `out_dir`.
pub fn export_mlm_dataset(train: &Corpus, val: &Corpus, out_dir: &Path, meta: &ExportMeta<'_>) -> Result<MlmManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let train_bytes = train.to_jsonl_bytes();
    let val_bytes = val.to_jsonl_bytes();
    write_file(&out_dir.join("train.jsonl"), &train_bytes)?;
    write_file(&out_dir.join("val.jsonl"), &val_bytes)?;
    let manifest = MlmManifest {
        train_count: train.len(),
        val_count: val.len(),
        train_fraction: meta.spec.train_fraction,
        seed: meta.spec.seed,
        stratified: meta.spec.stratified,
        source_checksum: meta.source_checksum.clone(),
        train_checksum: crate::sha256_hex(&train_bytes),
        val_checksum: crate::sha256_hex(&val_bytes),
        created_at: meta.created_at.to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(&out_dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_paragraphs((0..n).map(|i| {
            let source = if i % 3 == 0 { Source::News } else { Source::Reports };
            Paragraph::new(format!("p{i:05}"), source, format!("text {i}")).unwrap()
        }))
        .unwrap()
    }

    fn ids(c: &Corpus) -> HashSet<String> {
        c.iter().map(|p| p.id().to_string()).collect()
    }

    #[test]
    fn split_eight_two() {
        let spec = SplitSpec { seed: 3, ..Default::default() };
        let (train, val) = split_train_val(&corpus(10), &spec).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        let (train2, val2) = split_train_val(&corpus(10), &spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn split_disjoint_and_exhaustive_over_seeds() {
        let c = corpus(1001);
        let all = ids(&c);
        for seed in 0..50 {
            for stratified in [false, true] {
                let spec = SplitSpec { train_fraction: 0.8, seed, stratified };
                let (train, val) = split_train_val(&c, &spec).unwrap();
                let (t, v) = (ids(&train), ids(&val));
                assert!(t.is_disjoint(&v));
                assert_eq!(&t | &v, all);
                assert_eq!(train.len(), 801);
            }
        }
    }

    #[test]
    fn seeds_differ() {
        let c = corpus(100);
        let a = split_train_val(&c, &SplitSpec { seed: 1, ..Default::default() }).unwrap();
        let b = split_train_val(&c, &SplitSpec { seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a.0, b.0);
    }

    #[test]
    fn split_errors() {
        assert!(split_train_val(&corpus(1), &SplitSpec::default()).is_err());
        let bad = SplitSpec { train_fraction: 1.0, ..Default::default() };
        assert!(split_train_val(&corpus(5), &bad).unwrap_err().is_usage());
    }

    #[test]
    fn stratified_preserves_source_shares() {
        let c = corpus(30); // 10 news, 20 reports
        let spec = SplitSpec { train_fraction: 0.8, seed: 9, stratified: true };
        let (train, _) = split_train_val(&c, &spec).unwrap();
        let news = train.iter().filter(|p| p.source() == Source::News).count();
        assert_eq!(news, 8);
        assert_eq!(train.len(), 24);
    }

    #[test]
    fn largest_remainder_hits_target() {
        assert_eq!(largest_remainder(&[3, 3, 3], 0.5, 5), [2, 2, 1]);
        assert_eq!(largest_remainder(&[1, 1], 0.5, 1), [1, 0]);
    }

    fn cfg() -> MaskingConfig {
        MaskingConfig {
            special_token_ids: [0, 1].into_iter().collect(),
            mask_token_id: 3,
            vocab_size: 100,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let ids: Vec<u32> = (0..50).collect();
        let c = MaskingConfig { mask_probability: 0.0, ..cfg() };
        let b = mask_tokens(&ids, &c).unwrap();
        assert_eq!(b.input_ids, ids);
        assert!(b.labels.iter().all(|&l| l == IGNORE_INDEX));
    }

    #[test]
    fn full_probability_all_mask() {
        let ids: Vec<u32> = (0..50).collect();
        let c = MaskingConfig {
            mask_probability: 1.0,
            replace_mask_fraction: 1.0,
            replace_random_fraction: 0.0,
            keep_fraction: 0.0,
            ..cfg()
        };
        let b = mask_tokens(&ids, &c).unwrap();
        for (i, &id) in ids.iter().enumerate() {
            if id <= 1 {
                assert_eq!(b.input_ids[i], id);
                assert_eq!(b.labels[i], IGNORE_INDEX);
            } else {
                assert_eq!(b.input_ids[i], 3);
                assert_eq!(b.labels[i], id as i64);
            }
        }
    }

    #[test]
    fn masking_is_deterministic_per_stream() {
        let ids: Vec<u32> = (2..90).collect();
        let a = mask_sequence(&ids, &cfg(), 4).unwrap();
        assert_eq!(a, mask_sequence(&ids, &cfg(), 4).unwrap());
        assert_ne!(a, mask_sequence(&ids, &cfg(), 5).unwrap());
    }

    #[test]
    fn masking_config_errors() {
        let bad = MaskingConfig { keep_fraction: 0.2, ..cfg() };
        assert!(mask_tokens(&[2], &bad).is_err());
        assert!(mask_tokens(&[100], &cfg()).is_err());
        let bad_mask = MaskingConfig { mask_token_id: 100, ..cfg() };
        assert!(bad_mask.validate().is_err());
    }

    #[test]
    fn export_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let (train, val) = split_train_val(&corpus(10), &SplitSpec::default()).unwrap();
        let spec = SplitSpec::default();
        let meta = ExportMeta {
            spec: &spec,
            source_checksum: corpus(10).checksum(),
            created_at: DEFAULT_CREATED_AT,
        };
        let m = export_mlm_dataset(&train, &val, dir.path(), &meta).unwrap();
        assert_eq!((m.train_count, m.val_count), (8, 2));
        let on_disk: MlmManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(on_disk, m);
        let again = export_mlm_dataset(&train, &val, dir.path(), &meta).unwrap();
        assert_eq!(again.train_checksum, m.train_checksum);
    }

    #[test]
    fn export_reports_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let spec = SplitSpec::default();
        let meta = ExportMeta {
            spec: &spec,
            source_checksum: String::new(),
            created_at: DEFAULT_CREATED_AT,
        };
        let err = export_mlm_dataset(&corpus(2), &corpus(0), &blocker.join("sub"), &meta).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
