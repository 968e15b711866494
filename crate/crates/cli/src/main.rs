//! Command-line entry point for the BP-LCZ pipeline: dataset synthesis and
//! ingestion, training (with ablation toggles), evaluation and figures.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

use bplcz::bands::{default_band_groups, format_band_config, parse_band_config, BandGroupSpec};
use bplcz::checkpoint::{load_checkpoint, save_checkpoint};
use bplcz::data::{balanced_subsample, load_so2sat, load_split_dir, make_synthetic, write_container, write_split_dir};
use bplcz::encoders::EncoderRegistry;
use bplcz::error::Error;
use bplcz::figures::{emit_confusion_figure, emit_embedding_projection};
use bplcz::manifest::{band_table_hash, RunManifest};
use bplcz::model::ModelConfig;
use bplcz::prompts::{catalog_from_file, default_catalog, CatalogBuild};
use bplcz::train::{evaluate, log_to_text, train, TrainSetup};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bplcz", version, about = "Band-grouped SAR/multi-spectral fusion for LCZ classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset container.
    Synth(SynthArgs),
    /// Build a balanced train/test split from a dataset container.
    Ingest(IngestArgs),
    /// Train a model on a cached split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a cached split.
    Eval(EvalArgs),
    /// Dump the full prompt catalog.
    Prompts(PromptsArgs),
    /// Dump the band-group table.
    Bands(BandsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of classes (2..=17).
    #[arg(long, default_value_t = 17)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    /// Gaussian noise scale added to the class channel means.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 47)]
    seed: u64,
    /// Output container path (.h5).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Input container with sen1/sen2/label datasets.
    #[arg(long)]
    input: PathBuf,
    /// Training samples drawn per class.
    #[arg(long, default_value_t = 1306)]
    per_class: usize,
    /// Test samples drawn from the remainder.
    #[arg(long, default_value_t = 12117)]
    test_size: usize,
    #[arg(long, default_value_t = 47)]
    seed: u64,
    /// Output split directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Split directory produced by `ingest`.
    #[arg(long)]
    split: PathBuf,
    /// Output run directory (checkpoint, log, manifest).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Similarity fusion weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Contrastive loss weight in the total objective.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the label-aware supervision matrix with the identity target.
    #[arg(long)]
    no_msm: bool,
    /// Disable the contrastive branch entirely (beta treated as 0).
    #[arg(long)]
    no_bgp: bool,
    /// Image encoder architecture (see `EncoderRegistry::builtin`).
    #[arg(long)]
    image_arch: Option<String>,
    /// Conv block widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    image_widths: Option<Vec<usize>>,
    #[arg(long)]
    text_arch: Option<String>,
    /// Shared embedding width d.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Optional hidden width of the classifier head.
    #[arg(long)]
    classifier_hidden: Option<usize>,
    /// Alternate band-group table (plain-text config).
    #[arg(long)]
    band_config: Option<PathBuf>,
    /// Extended class description file (class_id<TAB>description).
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Re-run an earlier job from its manifest (other tuning flags still
    /// override individual fields).
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split directory; evaluation uses its test half by default.
    #[arg(long)]
    split: PathBuf,
    /// Evaluate on the training half instead of the test half.
    #[arg(long)]
    use_train: bool,
    /// Output directory for the report and figures.
    #[arg(long)]
    out: PathBuf,
    /// Also write a row-normalized confusion heatmap.
    #[arg(long)]
    emit_confusion: bool,
    /// Also write a 2-D projection of fused features.
    #[arg(long)]
    emit_projection: bool,
    /// Samples per class in the projection.
    #[arg(long, default_value_t = 70)]
    per_class: usize,
    /// Seed for the projection subsample and layout.
    #[arg(long, default_value_t = 47)]
    seed: u64,
}

#[derive(Args)]
struct PromptsArgs {
    /// Extended class description file (class_id<TAB>description).
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Write the dump here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BandsArgs {
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let line = e.to_string();
            eprintln!("{}", line.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Argument(_) => 1,
                Error::Divergence { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(args) => {
            let samples = make_synthetic(args.classes, args.per_class, args.noise, args.seed)?;
            write_container(&samples, &args.out)?;
            println!("wrote {} samples to {}", samples.len(), args.out.display());
            Ok(())
        }
        Command::Ingest(args) => {
            let dataset = load_so2sat(&args.input)?;
            let split = balanced_subsample(
                &dataset,
                args.per_class,
                args.test_size,
                args.seed,
                &args.input.display().to_string(),
            )?;
            write_split_dir(&split, &args.out)?;
            println!(
                "split written to {}: {} train / {} test",
                args.out.display(),
                split.train.len(),
                split.test.len()
            );
            Ok(())
        }
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Prompts(args) => {
            let groups = default_band_groups();
            let build = load_catalog(&groups, args.descriptions.as_deref())?;
            warn_fallbacks(&build);
            let dump = build.catalog.dump();
            match args.out {
                Some(path) => std::fs::write(path, dump)?,
                None => print!("{dump}"),
            }
            Ok(())
        }
        Command::Bands(args) => {
            let table = format_band_config(&default_band_groups());
            match args.out {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}

fn load_catalog(groups: &[BandGroupSpec], descriptions: Option<&Path>) -> Result<CatalogBuild, Error> {
    match descriptions {
        Some(path) => catalog_from_file(groups, path),
        None => Ok(default_catalog(groups)),
    }
}

fn warn_fallbacks(build: &CatalogBuild) {
    if !build.fallback_classes.is_empty() {
        let ids: Vec<&str> =
            build.fallback_classes.iter().map(|&c| bplcz::data::paper_class_id(c)).collect();
        eprintln!(
            "warning: no extended description for classes {}; using bare class names",
            ids.join(", ")
        );
    }
}

fn run_train(args: TrainArgs) -> Result<(), Error> {
    let registry = EncoderRegistry::builtin();
    let split = load_split_dir(&args.split)?;

    // Base configuration: manifest when given, defaults otherwise.
    let base = match &args.from_manifest {
        Some(path) => Some(RunManifest::load(path)?),
        None => None,
    };
    let mut cfg = base.as_ref().map(|m| m.train.clone()).unwrap_or_default();
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }

    let groups = match &args.band_config {
        Some(path) => parse_band_config(&std::fs::read_to_string(path)?)?,
        None => default_band_groups(),
    };
    let build = load_catalog(&groups, args.descriptions.as_deref())?;
    warn_fallbacks(&build);

    let mut model_cfg = ModelConfig::new(groups);
    if let Some(m) = &base {
        model_cfg.encoder = m.encoder.clone();
        model_cfg.classifier_hidden = m.classifier_hidden;
    }
    if let Some(v) = &args.image_arch {
        model_cfg.encoder.image_arch = v.clone();
    }
    if let Some(v) = &args.image_widths {
        model_cfg.encoder.image_widths = v.clone();
    }
    if let Some(v) = &args.text_arch {
        model_cfg.encoder.text_arch = v.clone();
    }
    if let Some(v) = args.embed_dim {
        model_cfg.encoder.embed_dim = v;
    }
    if let Some(v) = args.classifier_hidden {
        model_cfg.classifier_hidden = Some(v);
    }

    let mut setup = TrainSetup::new(model_cfg, build.catalog.clone());
    match &base {
        Some(m) => {
            setup.supervision = m.supervision.clone();
            setup.contrastive = m.contrastive;
        }
        None => {}
    }
    if args.no_msm {
        setup.supervision = "identity".to_string();
    }
    if args.no_bgp {
        setup.contrastive = false;
    }

    let outcome = train(&split, &cfg, &setup, &registry)?;

    std::fs::create_dir_all(&args.out)?;
    save_checkpoint(&outcome.model, &args.out.join("checkpoint.bin"))?;
    std::fs::write(args.out.join("train_log.csv"), log_to_text(&outcome.log))?;
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        train: cfg,
        supervision: setup.supervision.clone(),
        contrastive: setup.contrastive,
        encoder: setup.model_cfg.encoder.clone(),
        classifier_hidden: setup.model_cfg.classifier_hidden,
        split_dir: args.split.display().to_string(),
        provenance: split.provenance.clone(),
        band_table_hash: band_table_hash(&setup.model_cfg.groups),
        prompt_catalog_hash: setup.catalog.hash_hex(),
    };
    manifest.save(&args.out.join("manifest.json"))?;

    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} epochs: l_cls={:.6} l_con={:.6} l={:.6} train_oa={:.4}",
            last.epoch, last.l_cls, last.l_con, last.loss, last.train_oa
        );
    } else {
        println!("trained 0 epochs (checkpoint equals initialization)");
    }
    println!("run artifacts in {}", args.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), Error> {
    let registry = EncoderRegistry::builtin();
    let model = load_checkpoint(&args.checkpoint, &registry)?;
    let split = load_split_dir(&args.split)?;
    let samples = if args.use_train { &split.train } else { &split.test };
    let report = evaluate(&model, &registry, samples, &split.provenance.norm)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.txt"), report.to_text())?;
    if args.emit_confusion {
        emit_confusion_figure(&report, &args.out.join("confusion.png"))?;
    }
    if args.emit_projection {
        emit_embedding_projection(
            &model,
            &registry,
            samples,
            &split.provenance.norm,
            args.per_class,
            args.seed,
            &args.out.join("projection.png"),
        )?;
    }
    println!("overall_accuracy={}", report.overall_accuracy);
    println!("kappa={}", report.kappa);
    println!("report in {}", args.out.display());
    Ok(())
}
