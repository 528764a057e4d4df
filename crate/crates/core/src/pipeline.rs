//! Run configuration and the prepare step: ingest, normalize, pick
//! negatives, balance and split, then persist a manifest next to the
//! normalized matrix.
//!
//! Every random choice draws from a stream derived from the single run seed
//! (see [`crate::rng::stream`]).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::data::{ExpressionMatrix, GeneId, Label, LabeledDataset, PairExample, Split};
use crate::error::{Error, Result};
use crate::ingest::{
    identical_rows, label_pairs, parse_expression_tsv, parse_interactions_tsv, sample_negatives,
    write_expression_tsv, IngestStats, ParseOptions,
};
use crate::model::{GenerConfig, GridSpec};
use crate::preprocess::{normalize, stratified_split, subsample_both, undersample, NormalizationKind, SplitFractions};
use crate::rng::{derive_seed, stream};
use crate::trainer::TrainOptions;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MATRIX_FILE: &str = "matrix.norm.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    /// Uniform draws from gene pairs not listed as interacting, one per positive.
    #[default]
    Sampled,
    /// Pairs listed in `negatives_path`.
    FromFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub expression_path: PathBuf,
    pub interactions_path: PathBuf,
    #[serde(default)]
    pub negatives_path: Option<PathBuf>,
    #[serde(default)]
    pub normalization: NormalizationKind,
    #[serde(default)]
    pub negatives: NegativeSource,
    #[serde(default)]
    pub split_fractions: SplitFractions,
    #[serde(default)]
    pub subsample_both: Option<f64>,
    #[serde(default)]
    pub uppercase_genes: bool,
    /// Interaction files start with a header row.
    #[serde(default)]
    pub header: bool,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: GenerConfig,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    /// Parses a JSON config; relative data paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.data.expression_path);
        resolve(&mut cfg.data.interactions_path);
        if let Some(p) = &mut cfg.data.negatives_path {
            resolve(p);
        }
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// The run seed also seeds training.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.data.split_fractions.validate()?;
        if let Some(f) = self.data.subsample_both {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::ConfigInvalid(format!("subsample_both {f} not in (0, 1]")));
            }
        }
        if self.data.negatives == NegativeSource::FromFile && self.data.negatives_path.is_none() {
            return Err(Error::ConfigInvalid("negatives: from_file needs negatives_path".into()));
        }
        self.train.validate()
    }

    /// Model configuration with `length` taken from the matrix when unset.
    pub fn model_for(&self, matrix: &ExpressionMatrix) -> Result<GenerConfig> {
        let l = matrix.width();
        match self.model.length {
            0 => Ok(self.model.clone().with_length(l)),
            n if n == l => Ok(self.model.clone()),
            n => Err(Error::LengthMismatch {
                checkpoint: n,
                matrix: l,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTally {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// What the prepare step did, printed as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub positives: IngestStats,
    /// Present when negatives come from a file. Negatives that are also
    /// listed as positives count as duplicates.
    pub negatives: Option<IngestStats>,
    pub sampled_negatives: usize,
    pub normalization: NormalizationKind,
    pub identical_row_groups: usize,
    pub n_genes: usize,
    pub n_conditions: usize,
    /// Per-class split counts keyed by label (0 or 1).
    pub splits: BTreeMap<usize, SplitTally>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: ExpressionMatrix,
    pub dataset: LabeledDataset,
    pub summary: PrepareSummary,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let d = &cfg.data;
    let opts = ParseOptions {
        uppercase_genes: d.uppercase_genes,
        header: d.header,
    };
    let raw = parse_expression_tsv(open(&d.expression_path)?, opts)?;
    let groups = identical_rows(&raw);
    if !groups.is_empty() {
        warn!(groups = groups.len(), first = %groups[0][0], "genes with identical expression rows");
    }
    let matrix = normalize(&raw, d.normalization);
    let (positives, pos_stats) = parse_interactions_tsv(open(&d.interactions_path)?, &matrix, opts)?;
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let positive_set: HashSet<_> = positives.iter().cloned().collect();
    let (negatives, neg_stats) = match d.negatives {
        NegativeSource::Sampled => {
            let seed = derive_seed(cfg.seed, stream::NEGATIVES);
            (sample_negatives(&matrix, &positive_set, positives.len(), seed)?, None)
        }
        NegativeSource::FromFile => {
            let path = d.negatives_path.as_deref().expect("validated");
            let (mut negs, mut stats) = parse_interactions_tsv(open(path)?, &matrix, opts)?;
            let before = negs.len();
            negs.retain(|p| !positive_set.contains(p));
            stats.dropped_duplicate += before - negs.len();
            stats.kept = negs.len();
            (negs, Some(stats))
        }
    };
    let sampled_negatives = if neg_stats.is_none() { negatives.len() } else { 0 };
    let mut dataset = label_pairs(&positives, &negatives, MATRIX_FILE)?;
    if let Some(f) = d.subsample_both {
        dataset = subsample_both(&dataset, f, derive_seed(cfg.seed, stream::SUBSAMPLE))?;
    }
    let dataset = undersample(&dataset, derive_seed(cfg.seed, stream::UNDERSAMPLE))?;
    let dataset = stratified_split(&dataset, d.split_fractions, derive_seed(cfg.seed, stream::SPLIT))?;

    let summary = PrepareSummary {
        positives: pos_stats,
        negatives: neg_stats,
        sampled_negatives,
        normalization: d.normalization,
        identical_row_groups: groups.len(),
        n_genes: matrix.n_genes(),
        n_conditions: matrix.width(),
        splits: split_tally(&dataset),
    };
    info!(pairs = dataset.len(), "prepared dataset");
    Ok(Prepared {
        matrix,
        dataset,
        summary,
    })
}

pub fn split_tally(dataset: &LabeledDataset) -> BTreeMap<usize, SplitTally> {
    let mut out = BTreeMap::new();
    for label in [Label::NoInteraction, Label::Interaction] {
        out.insert(label.index(), SplitTally::default());
    }
    for p in &dataset.pairs {
        let t = out.get_mut(&p.label.index()).expect("both labels present");
        match p.split {
            Split::Train => t.train += 1,
            Split::Val => t.val += 1,
            Split::Test => t.test += 1,
            Split::Unassigned => {}
        }
    }
    out
}

impl Prepared {
    /// Writes the manifest and normalized matrix under `dir`. Both files are
    /// rendered before either is written.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut manifest = Vec::new();
        write_manifest(&self.dataset, &mut manifest).map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
        let mut matrix = Vec::new();
        write_expression_tsv(&self.matrix, &mut matrix).map_err(|e| Error::io(dir.join(MATRIX_FILE), e))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(MATRIX_FILE), &matrix)?;
        write_atomic(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Reads back what [`Prepared::write`] produced. The summary is rebuilt
    /// from the manifest and carries no ingest statistics.
    pub fn read(dir: &Path) -> Result<Self> {
        let matrix = parse_expression_tsv(open(&dir.join(MATRIX_FILE))?, ParseOptions::default())?;
        let dataset = read_manifest(open(&dir.join(MANIFEST_FILE))?, &matrix)?;
        let summary = PrepareSummary {
            positives: IngestStats::default(),
            negatives: None,
            sampled_negatives: 0,
            normalization: NormalizationKind::None,
            identical_row_groups: 0,
            n_genes: matrix.n_genes(),
            n_conditions: matrix.width(),
            splits: split_tally(&dataset),
        };
        Ok(Prepared {
            matrix,
            dataset,
            summary,
        })
    }
}

const MANIFEST_HEADER: &str = "gene_a\tgene_b\tlabel\tsplit";

pub fn write_manifest(dataset: &LabeledDataset, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{MANIFEST_HEADER}")?;
    for p in &dataset.pairs {
        writeln!(out, "{}\t{}\t{}\t{}", p.a(), p.b(), p.label.index(), p.split.as_str())?;
    }
    Ok(())
}

pub fn read_manifest(source: impl BufRead, matrix: &ExpressionMatrix) -> Result<LabeledDataset> {
    let mut lines = source.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == MANIFEST_HEADER => {}
        Some((_, Err(e))) => return Err(Error::io(MANIFEST_FILE, e)),
        _ => return Err(Error::MalformedRow(1)),
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(MANIFEST_FILE, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 4 {
            return Err(Error::MalformedRow(i + 1));
        }
        let label = match cells[2] {
            "0" => Label::NoInteraction,
            "1" => Label::Interaction,
            _ => return Err(Error::MalformedRow(i + 1)),
        };
        let mut pair = PairExample::new(GeneId::new(cells[0])?, GeneId::new(cells[1])?, label)?;
        pair.split = cells[3].parse()?;
        pairs.push(pair);
    }
    let dataset = LabeledDataset::new(pairs, MATRIX_FILE)?;
    dataset.validate_against(matrix)?;
    Ok(dataset)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, write_pairs_tsv, SynthSpec};

    fn write_synth(dir: &Path, spec: &SynthSpec) -> RunConfig {
        let (m, ds) = generate_synthetic(spec).unwrap();
        let mut expr = Vec::new();
        write_expression_tsv(&m, &mut expr).unwrap();
        std::fs::write(dir.join("expr.tsv"), expr).unwrap();
        let mut pos = Vec::new();
        write_pairs_tsv(
            ds.pairs.iter().filter(|p| p.label == Label::Interaction).map(|p| (p.a(), p.b())),
            &mut pos,
        )
        .unwrap();
        std::fs::write(dir.join("pos.tsv"), pos).unwrap();
        let mut neg = Vec::new();
        write_pairs_tsv(
            ds.pairs.iter().filter(|p| p.label == Label::NoInteraction).map(|p| (p.a(), p.b())),
            &mut neg,
        )
        .unwrap();
        std::fs::write(dir.join("neg.tsv"), neg).unwrap();
        RunConfig::from_json(
            r#"{"data": {"expression_path": "expr.tsv", "interactions_path": "pos.tsv", "negatives_path": "neg.tsv"}}"#,
            dir,
        )
        .unwrap()
    }

    fn spec() -> SynthSpec {
        SynthSpec {
            n_modules: 4,
            genes_per_module: 5,
            length: 12,
            noise_sigma: 0.5,
            seed: 1,
        }
    }

    #[test]
    fn config_defaults_and_paths() {
        let cfg = RunConfig::from_json(
            r#"{"data": {"expression_path": "e.tsv", "interactions_path": "/abs/i.tsv"}, "seed": 9}"#,
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.data.expression_path, Path::new("/base/e.tsv"));
        assert_eq!(cfg.data.interactions_path, Path::new("/abs/i.tsv"));
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.model, GenerConfig::default());
        assert_eq!(cfg.data.split_fractions, SplitFractions::default());
        assert!(RunConfig::from_json(r#"{"data": {}}"#, Path::new(".")).is_err());
        assert!(RunConfig::from_json(
            r#"{"data": {"expression_path": "e", "interactions_path": "i"}, "train": {"seed": 3}}"#,
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn prepare_sampled_and_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_synth(dir.path(), &spec());
        let sampled = prepare(&cfg).unwrap();
        assert_eq!(sampled.summary.positives.kept, 40);
        assert_eq!(sampled.summary.sampled_negatives, 40);
        assert_eq!(sampled.dataset.count(Label::Interaction), 40);
        assert_eq!(sampled.summary.splits[&1], SplitTally { train: 32, val: 4, test: 4 });

        cfg.data.negatives = NegativeSource::FromFile;
        let from_file = prepare(&cfg).unwrap();
        assert_eq!(from_file.summary.negatives.unwrap().kept, 40);
        assert_eq!(from_file.dataset.count(Label::NoInteraction), 40);
    }

    #[test]
    fn prepare_is_deterministic_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_synth(dir.path(), &spec());
        let a = prepare(&cfg).unwrap();
        let b = prepare(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let out = dir.path().join("run");
        a.write(&out).unwrap();
        let first = std::fs::read(out.join(MANIFEST_FILE)).unwrap();
        b.write(&out).unwrap();
        assert_eq!(first, std::fs::read(out.join(MANIFEST_FILE)).unwrap());
        let back = Prepared::read(&out).unwrap();
        assert_eq!(back.dataset.pairs, a.dataset.pairs);
        assert_eq!(back.matrix.values(), a.matrix.values());
        assert_eq!(back.summary.splits, a.summary.splits);
    }

    #[test]
    fn quantile_prepare_gives_equal_column_multisets() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_synth(dir.path(), &spec());
        cfg.data.normalization = NormalizationKind::Quantile;
        let p = prepare(&cfg).unwrap();
        let m = &p.matrix;
        let column = |c: usize| {
            let mut v: Vec<f64> = (0..m.n_genes()).map(|g| m.row(g)[c]).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let first = column(0);
        for c in 1..m.width() {
            for (a, b) in first.iter().zip(column(c)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_file_leaves_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_synth(dir.path(), &spec());
        cfg.data.expression_path = dir.path().join("missing.tsv");
        assert!(matches!(prepare(&cfg), Err(Error::Io { .. })));
        assert!(!dir.path().join("run").exists());
    }

    #[test]
    fn manifest_rejects_garbage() {
        let (m, _) = generate_synthetic(&spec()).unwrap();
        let bad_header = "a\tb\tc\td\n";
        assert!(read_manifest(bad_header.as_bytes(), &m).is_err());
        let bad_label = format!("{MANIFEST_HEADER}\nM000G000\tM000G001\t2\ttrain\n");
        assert!(matches!(read_manifest(bad_label.as_bytes(), &m), Err(Error::MalformedRow(2))));
        let unknown = format!("{MANIFEST_HEADER}\nM000G000\tX\t1\ttrain\n");
        assert!(matches!(read_manifest(unknown.as_bytes(), &m), Err(Error::UnknownGene(_))));
    }

    #[test]
    fn model_length_follows_matrix() {
        let (m, _) = generate_synthetic(&spec()).unwrap();
        let mut cfg = RunConfig::from_json(
            r#"{"data": {"expression_path": "e", "interactions_path": "i"}}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.model_for(&m).unwrap().length, 12);
        cfg.model.length = 536;
        assert!(matches!(
            cfg.model_for(&m),
            Err(Error::LengthMismatch { checkpoint: 536, matrix: 12 })
        ));
    }
}
