//! `gener`: prepare data, train, evaluate and predict from the command line.
//!
//! Exit codes: 0 ok, 2 configuration, 3 data, 4 training, 5 incompatible
//! checkpoint. Logs go to stderr as JSON lines; stdout carries only the
//! final JSON result.

use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gener_core::ingest::{generate_synthetic, identical_rows, write_expression_tsv, write_pairs_tsv, SynthSpec};
use gener_core::metrics::{export_curve_csv, render_curve_svg, MetricsReport};
use gener_core::model::{grid_search, leaderboard_csv};
use gener_core::pipeline::{prepare, write_atomic, Prepared, RunConfig};
use gener_core::trainer::{self, correlation_baseline, Checkpoint, Precision, RunOutcome};
use gener_core::{Architecture, Error, GeneId, Label, Split};
use tracing::info;

const MODEL_FILE: &str = "model.genr";
const HISTORY_FILE: &str = "history.csv";
const REPORT_FILE: &str = "report.json";
const LEADERBOARD_FILE: &str = "leaderboard.csv";
const PREDICTIONS_FILE: &str = "predictions.tsv";

#[derive(Parser)]
#[command(name = "gener", version, about = "Gene-pair interaction prediction from expression profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic module-structured expression matrix and interaction list.
    Synth(SynthArgs),
    /// Ingest, normalize, balance and split; writes manifest.tsv and matrix.norm.tsv.
    Prepare(PrepareArgs),
    /// Train one model on a prepared run directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split; writes the report and ROC/PR curves.
    Evaluate(EvaluateArgs),
    /// Train every grid point and keep the best by validation micro-AUROC.
    Gridsearch(GridArgs),
    /// Score pairs by absolute Pearson correlation of their expression rows.
    Baseline(BaselineArgs),
    /// Interaction probabilities for a list of gene pairs.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    modules: usize,
    #[arg(long, default_value_t = 10)]
    genes_per_module: usize,
    #[arg(long, default_value_t = 64)]
    length: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    uppercase_genes: bool,
    /// Interaction files start with a header row.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    subsample_both: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Gener,
    Cnn,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Gener => Architecture::Gener,
            ArchArg::Cnn => Architecture::CnnOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Fast32,
    Check64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Fast32 => Precision::Fast32,
            PrecisionArg::Check64 => Precision::Check64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Prepared run directory; defaults to `--out`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "gener")]
    arch: ArchArg,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Defaults to `model.genr` in the data directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "fast32")]
    precision: PrecisionArg,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value = "gener")]
    arch: ArchArg,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Tab-separated gene pairs, one per line.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    uppercase_genes: bool,
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value = "fast32")]
    precision: PrecisionArg,
}

/// A failure together with the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

fn classify(error: Error) -> Failure {
    let code = match &error {
        Error::ConfigInvalid(_) | Error::EmptyGrid | Error::Json(_) => 2,
        Error::EmptySplit(_) | Error::DivergedLoss(_) | Error::BatchTooSmall => 4,
        Error::LengthMismatch { .. } => 5,
        _ => 3,
    };
    Failure { code, error }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        classify(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Baseline(a) => baseline(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            tracing::error!(code = f.code, "{}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("GENER_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn emit(value: &impl serde::Serialize) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    // An unreadable config file is a configuration problem, not a data one.
    let mut cfg = RunConfig::load(path).map_err(|e| Failure { code: 2, error: e })?;
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    cfg.validate().map_err(|e| Failure { code: 2, error: e })?;
    Ok(cfg)
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = SynthSpec {
        n_modules: a.modules,
        genes_per_module: a.genes_per_module,
        length: a.length,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    spec.validate().map_err(|e| Failure { code: 2, error: e })?;
    let (matrix, dataset) = generate_synthetic(&spec)?;
    let mut expr = Vec::new();
    write_expression_tsv(&matrix, &mut expr).map_err(|e| Error::io("expression.tsv", e))?;
    let mut pos = Vec::new();
    let positives = dataset.pairs.iter().filter(|p| p.label == Label::Interaction);
    write_pairs_tsv(positives.map(|p| (p.a(), p.b())), &mut pos).map_err(|e| Error::io("interactions.tsv", e))?;
    let mut neg = Vec::new();
    let negatives = dataset.pairs.iter().filter(|p| p.label == Label::NoInteraction);
    write_pairs_tsv(negatives.map(|p| (p.a(), p.b())), &mut neg).map_err(|e| Error::io("negatives.tsv", e))?;
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join("expression.tsv"), &expr)?;
    write_atomic(&a.out.join("interactions.tsv"), &pos)?;
    write_atomic(&a.out.join("negatives.tsv"), &neg)?;
    let groups = identical_rows(&matrix);
    if !groups.is_empty() {
        info!(groups = groups.len(), "identical expression rows (zero noise)");
    }
    emit(&serde_json::json!({
        "spec": spec,
        "genes": matrix.n_genes(),
        "conditions": matrix.width(),
        "positives": dataset.count(Label::Interaction),
        "negatives": dataset.count(Label::NoInteraction),
        "identical_row_groups": groups.len(),
    }))
}

fn cmd_prepare(a: PrepareArgs) -> CliResult {
    let mut cfg = load_config(&a.config, a.seed)?;
    cfg.data.uppercase_genes |= a.uppercase_genes;
    cfg.data.header |= a.header;
    if a.subsample_both.is_some() {
        cfg.data.subsample_both = a.subsample_both;
    }
    cfg.validate().map_err(|e| Failure { code: 2, error: e })?;
    // Split failures here come from too little data, not from training.
    let prepared = prepare(&cfg).map_err(|e| match e {
        Error::EmptySplit(_) => Failure { code: 3, error: e },
        e => classify(e),
    })?;
    prepared.write(&a.out)?;
    emit(&prepared.summary)
}

fn write_run(out: &Path, run: &RunOutcome) -> CliResult {
    let report = serde_json::to_vec_pretty(&run.val_report).map_err(Error::from)?;
    let bytes = run.checkpoint.to_bytes()?;
    ensure_dir(out)?;
    write_atomic(&out.join(MODEL_FILE), &bytes)?;
    write_atomic(&out.join(HISTORY_FILE), run.history.to_csv().as_bytes())?;
    write_atomic(&out.join(REPORT_FILE), &report)?;
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let mut cfg = load_config(&a.config, a.seed)?;
    if let Some(p) = a.precision {
        cfg.train.precision = p.into();
    }
    let data = Prepared::read(a.data.as_deref().unwrap_or(&a.out))?;
    let model = cfg.model_for(&data.matrix)?;
    model.validate().map_err(|e| Failure { code: 2, error: e })?;
    let arch: Architecture = a.arch.into();
    info!(%arch, params_seed = cfg.seed, "training");
    let run = trainer::train_configured(arch, &model, &data.matrix, &data.dataset, &cfg.train, cfg.seed)?;
    write_run(&a.out, &run)?;
    emit(&run.val_report)
}

fn gridsearch(a: GridArgs) -> CliResult {
    let mut cfg = load_config(&a.config, a.seed)?;
    if let Some(p) = a.precision {
        cfg.train.precision = p.into();
    }
    let grid = cfg.grid.clone().ok_or_else(|| Failure {
        code: 2,
        error: Error::ConfigInvalid("config has no \"grid\" section".into()),
    })?;
    let data = Prepared::read(a.data.as_deref().unwrap_or(&a.out))?;
    let model = cfg.model_for(&data.matrix)?;
    let outcome = grid_search(
        &grid,
        &model,
        a.arch.into(),
        &data.matrix,
        &data.dataset,
        &cfg.train,
        cfg.seed,
        a.jobs,
    )?;
    write_run(&a.out, &outcome.best)?;
    write_atomic(&a.out.join(LEADERBOARD_FILE), leaderboard_csv(&outcome.leaderboard).as_bytes())?;
    emit(&outcome.best.val_report)
}

fn write_report(out: &Path, report: &MetricsReport) -> CliResult {
    let mut roc_csv = Vec::new();
    export_curve_csv(&report.roc, ("fpr", "tpr"), &mut roc_csv)?;
    let mut pr_csv = Vec::new();
    export_curve_csv(&report.pr, ("recall", "precision"), &mut pr_csv)?;
    let mut roc_svg = Vec::new();
    render_curve_svg(
        &report.roc,
        ("False positive rate", "True positive rate"),
        &format!("micro AUROC = {:.4}", report.auroc_micro),
        &mut roc_svg,
    )?;
    let mut pr_svg = Vec::new();
    render_curve_svg(
        &report.pr,
        ("Recall", "Precision"),
        &format!("micro AUPR = {:.4}", report.aupr_micro),
        &mut pr_svg,
    )?;
    let json = serde_json::to_vec_pretty(report).map_err(Error::from)?;
    ensure_dir(out)?;
    for (name, bytes) in [
        ("roc.csv", &roc_csv),
        ("pr.csv", &pr_csv),
        ("roc.svg", &roc_svg),
        ("pr.svg", &pr_svg),
        (REPORT_FILE, &json),
    ] {
        write_atomic(&out.join(name), bytes)?;
    }
    Ok(())
}

fn load_checkpoint(path: Option<&Path>, data_dir: &Path) -> CliResult<Checkpoint> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| data_dir.join(MODEL_FILE));
    Ok(Checkpoint::load(&path)?)
}

fn check_length(ckpt: &Checkpoint, data: &Prepared) -> CliResult {
    if ckpt.input_length() != data.matrix.width() {
        return Err(Error::LengthMismatch {
            checkpoint: ckpt.input_length(),
            matrix: data.matrix.width(),
        }
        .into());
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let data_dir = a.data.clone().unwrap_or_else(|| a.out.clone());
    let ckpt = load_checkpoint(a.checkpoint.as_deref(), &data_dir)?;
    let data = Prepared::read(&data_dir)?;
    check_length(&ckpt, &data)?;
    let settings = serde_json::json!({
        "architecture": ckpt.header.architecture,
        "model": ckpt.header.config,
        "seed": ckpt.header.seed,
    });
    let split: Split = a.split.into();
    let report = match Precision::from(a.precision) {
        Precision::Fast32 => trainer::evaluate(&mut ckpt.to_network::<f32>()?, &data.dataset, split, &data.matrix, settings),
        Precision::Check64 => trainer::evaluate(&mut ckpt.to_network::<f64>()?, &data.dataset, split, &data.matrix, settings),
    }
    .map_err(|e| match e {
        // Scoring an empty or one-class split is a data problem here.
        Error::EmptySplit(_) => Failure { code: 3, error: e },
        e => classify(e),
    })?;
    write_report(&a.out, &report)?;
    emit(&report)
}

fn baseline(a: BaselineArgs) -> CliResult {
    let data = Prepared::read(a.data.as_deref().unwrap_or(&a.out))?;
    let report = correlation_baseline(&data.dataset, a.split.into(), &data.matrix)
        .map_err(|e| Failure { code: 3, error: e })?;
    write_report(&a.out, &report)?;
    emit(&report)
}

fn read_pairs(path: &Path, uppercase: bool, header: bool) -> CliResult<Vec<(GeneId, GeneId)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut skip = header;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if std::mem::take(&mut skip) {
            continue;
        }
        let mut cells = line.split('\t');
        let (Some(x), Some(y)) = (cells.next(), cells.next()) else {
            return Err(Error::MalformedRow(i + 1).into());
        };
        let gene = |s: &str| GeneId::new(if uppercase { s.to_uppercase() } else { s.to_owned() });
        pairs.push((gene(x)?, gene(y)?));
    }
    Ok(pairs)
}

fn predict(a: PredictArgs) -> CliResult {
    let data_dir = a.data.clone().unwrap_or_else(|| a.out.clone());
    let ckpt = load_checkpoint(a.checkpoint.as_deref(), &data_dir)?;
    let data = Prepared::read(&data_dir)?;
    check_length(&ckpt, &data)?;
    let pairs = read_pairs(&a.pairs, a.uppercase_genes, a.header)?;
    let probs = match Precision::from(a.precision) {
        Precision::Fast32 => trainer::predict(&mut ckpt.to_network::<f32>()?, &pairs, &data.matrix)?,
        Precision::Check64 => trainer::predict(&mut ckpt.to_network::<f64>()?, &pairs, &data.matrix)?,
    };
    let mut out = String::from("gene_a\tgene_b\tprobability\n");
    for ((x, y), p) in pairs.iter().zip(&probs) {
        out.push_str(&format!("{x}\t{y}\t{p}\n"));
    }
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join(PREDICTIONS_FILE), out.as_bytes())?;
    emit(&serde_json::json!({ "pairs": pairs.len(), "output": PREDICTIONS_FILE }))
}
