//! `sedinc`: data generation, training, incremental learning and evaluation.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sedinc::datagen::{
    dataset_load, dataset_save, export_annotations_csv, generate_dataset, Dataset, EventClass, FeatureNorm, Regime,
    SplitCounts, WindowSet,
};
use sedinc::format::write_file;
use sedinc::metrics::{evaluate, run_ablation, run_matrix, report_markdown, ClassSubset, F1Report};
use sedinc::models::{
    build_source, load_checkpoint, load_model, save_composite, save_model, train_adapter_tl, train_simple_tl,
    train_source, AdapterInput, Checkpoint,
};
use sedinc::nncore::Rng;
use sedinc::{Error, Result};

use config::RunConfig;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRAINING: u8 = 4;

#[derive(Parser)]
#[command(name = "sedinc", version, about = "Incremental sound event detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train, val and test soundscape files.
    GenData(GenDataArgs),
    /// Train a source model on a subset of the dataset's classes.
    TrainSource(TrainSourceArgs),
    /// Add one class to a trained source model.
    TrainIncremental(TrainIncrementalArgs),
    /// Segment F1 of a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// F1 of the adapter, target and merged outputs of a composite.
    Ablation(AblationArgs),
    /// Hold out every class in turn and tabulate all methods.
    RunMatrix(RunMatrixArgs),
}

/// Values that override the config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mels: Option<usize>,
    /// Spectrogram frames per second, also the window width.
    #[arg(long)]
    fps: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load_or_default(self.config.as_deref())?;
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(seed => seed, mels => mels, fps => frames_per_second, filters => filters, snr_db => snr_db,
             lr => lr, batch_size => batch_size, patience => patience, max_epochs => max_epochs);
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Clean,
    Noisy,
}

#[derive(Args)]
struct GenDataArgs {
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Soundscapes per split as `train,val,test`.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Output directory; files go to `<out>/datasets/`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct TrainSourceArgs {
    /// Directory holding `train.sedd` and `val.sedd`, directly or under `datasets/`.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated subset of the dataset's classes, in output order.
    #[arg(long, value_delimiter = ',', required = true)]
    classes: Vec<String>,
    /// Checkpoint path; the training log is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Simple,
    Adapter,
}

#[derive(Args)]
struct TrainIncrementalArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    new_class: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Feed the adapter source probabilities instead of logits.
    #[arg(long)]
    adapter_probabilities: bool,
    #[arg(long)]
    adapter_hidden: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    All,
    Ds,
    New,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// A `.sedd` file, or a dataset directory (the `--split` file is used).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    classes: SubsetArg,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    composite: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunMatrixArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainSource(a) => cmd_train_source(a),
        Command::TrainIncremental(a) => train_incremental(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablation(a) => ablation(a),
        Command::RunMatrix(a) => cmd_run_matrix(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_training_failure() {
        return EXIT_TRAINING;
    }
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Scenario { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

fn split_path(data: &Path, split: &str) -> PathBuf {
    if data.is_file() {
        return data.to_path_buf();
    }
    let nested = data.join("datasets").join(format!("{split}.sedd"));
    if nested.exists() {
        nested
    } else {
        data.join(format!("{split}.sedd"))
    }
}

fn load_split(data: &Path, split: &str) -> Result<Dataset> {
    dataset_load(&split_path(data, split))
}

/// The dataset's entries for `names`, in that order.
fn lookup_classes(dataset: &Dataset, names: &[String]) -> Result<Vec<EventClass>> {
    names
        .iter()
        .map(|n| {
            dataset.class_by_name(n).cloned().ok_or_else(|| {
                let known: Vec<&str> = dataset.classes.iter().map(|c| c.name.as_str()).collect();
                Error::Data(format!("class `{n}` is not in the dataset (has {known:?})"))
            })
        })
        .collect()
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = a.overrides.resolve()?;
    if let Some(c) = a.classes {
        cfg.classes = c;
    }
    if let Some(r) = a.regime {
        cfg.regime = match r {
            RegimeArg::Clean => Regime::Clean,
            RegimeArg::Noisy => Regime::Noisy,
        };
    }
    if let Some(c) = a.counts {
        let [train, val, test] = c[..] else {
            return Err(Error::Config(format!("--counts needs train,val,test, got {} values", c.len())));
        };
        cfg.counts = SplitCounts { train, val, test };
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    let classes = EventClass::list(&cfg.classes);
    let splits = generate_dataset(&classes, cfg.regime, cfg.counts, cfg.seed, &cfg.generator())?;
    let dir = cfg.out.join("datasets");
    for (name, d) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        dataset_save(d, &dir.join(format!("{name}.sedd")))?;
        export_annotations_csv(d, &dir.join(format!("{name}.annotations.csv")))?;
        let counts = d.event_counts();
        let mut line = format!("{name}: {} soundscapes, events", d.soundscapes.len());
        for (c, n) in d.classes.iter().zip(&counts) {
            write!(line, " {}={n}", c.name).unwrap();
        }
        if cfg.regime == Regime::Noisy {
            write!(line, ", empty {:.1}%", 100.0 * d.empty_fraction()).unwrap();
        }
        println!("{line}");
    }
    Ok(())
}

fn log_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    checkpoint.with_file_name(format!("{stem}.log.csv"))
}

fn cmd_train_source(a: TrainSourceArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let train = load_split(&a.data, "train")?;
    let val = load_split(&a.data, "val")?;
    let classes = lookup_classes(&train, &a.classes)?;
    let train_set = WindowSet::from_dataset(&train, &classes)?;
    let val_set = WindowSet::from_dataset(&val, &classes)?;
    let mut rng = Rng::new(cfg.seed);
    let mut model = build_source(&cfg.model(), &train_set, FeatureNorm::fit(&train), &mut rng)?;
    let log = train_source(&mut model, &train_set, &val_set, &cfg.train(), &mut rng)?;
    save_model(&model, &a.out)?;
    log.write_csv(&log_path(&a.out))?;
    println!(
        "trained {} classes for {} epochs (best {}), {} parameters -> {}",
        model.num_classes(),
        log.epochs_run(),
        log.best_epoch,
        model.param_count(),
        a.out.display()
    );
    Ok(())
}

fn train_incremental(a: TrainIncrementalArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let source = load_model(&a.source)?;
    if source.class_names.contains(&a.new_class) {
        return Err(Error::Config(format!("class `{}` is already learned by the source", a.new_class)));
    }
    let mut names = source.class_names.clone();
    names.push(a.new_class.clone());
    let train = load_split(&a.data, "train")?;
    let val = load_split(&a.data, "val")?;
    let classes = lookup_classes(&train, &names)?;
    let train_set = WindowSet::from_dataset(&train, &classes)?;
    let val_set = WindowSet::from_dataset(&val, &classes)?;
    let rng = Rng::new(cfg.seed);
    let log = match a.method {
        Method::Simple => {
            let (model, log) = train_simple_tl(&source, &a.new_class, &train_set, &val_set, &cfg.train(), &rng)?;
            save_model(&model, &a.out)?;
            log
        }
        Method::Adapter => {
            let input = if a.adapter_probabilities { AdapterInput::Probabilities } else { cfg.adapter_input };
            let hidden = a.adapter_hidden.unwrap_or(cfg.adapter_hidden);
            let (model, log) =
                train_adapter_tl(&source, &a.new_class, &train_set, &val_set, &cfg.train(), hidden, input, &rng)?;
            save_composite(&model, &a.out)?;
            log
        }
    };
    log.write_csv(&log_path(&a.out))?;
    println!(
        "trained for {} epochs (best {}) -> {}",
        log.epochs_run(),
        log.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn f1_table(report: &F1Report, names: &[String]) -> String {
    let mut s = String::from("class,precision,recall,f1\n");
    for c in &report.per_class {
        writeln!(s, "{},{:.4},{:.4},{:.4}", names[c.class], c.precision, c.recall, c.f1).unwrap();
    }
    let m = &report.micro;
    writeln!(s, "micro,{:.4},{:.4},{:.4}", m.precision(), m.recall(), report.micro_f1).unwrap();
    writeln!(s, "macro,,,{:.4}", report.macro_f1).unwrap();
    s
}

fn emit(text: &str, report: Option<&Path>) -> Result<()> {
    print!("{text}");
    match report {
        Some(p) => write_file(p, text.as_bytes()),
        None => Ok(()),
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let names = ckpt.class_names().to_vec();
    let data = load_split(&a.data, &a.split)?;
    let classes = lookup_classes(&data, &names)?;
    let set = WindowSet::from_dataset(&data, &classes)?;
    let subset = match a.classes {
        SubsetArg::All => ClassSubset::All,
        SubsetArg::Ds => ClassSubset::Ds,
        SubsetArg::New => ClassSubset::New,
    }
    .indices(names.len());
    if subset.is_empty() {
        return Err(Error::Config("a single-class model has no previously learned classes".into()));
    }
    let threshold = sedinc::metrics::DEFAULT_THRESHOLD;
    let report = match &ckpt {
        Checkpoint::Model(m) => evaluate(m, &set, &subset, threshold)?,
        Checkpoint::Composite(c) => evaluate(c, &set, &subset, threshold)?,
    };
    emit(&f1_table(&report, &names), a.report.as_deref())
}

fn ablation(a: AblationArgs) -> Result<()> {
    let model = match load_checkpoint(&a.composite)? {
        Checkpoint::Composite(c) => c,
        Checkpoint::Model(_) => {
            return Err(Error::Config(format!(
                "{} is a single-model checkpoint; the ablation needs an adapter composite",
                a.composite.display()
            )))
        }
    };
    let data = load_split(&a.data, &a.split)?;
    let classes = lookup_classes(&data, model.class_names())?;
    let set = WindowSet::from_dataset(&data, &classes)?;
    let s = run_ablation(&model, &set, sedinc::metrics::DEFAULT_THRESHOLD)?;
    emit(
        &format!("f1_A,f1_B,f1_C\n{:.4},{:.4},{:.4}\n", s.f1_a, s.f1_b, s.f1_c),
        a.report.as_deref(),
    )
}

fn cmd_run_matrix(a: RunMatrixArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let classes = EventClass::list(&cfg.classes);
    let result = run_matrix(&classes, &cfg.experiment(), cfg.seed, Some(&cfg.out))?;
    print!("{}", report_markdown(&result.rows()));
    Ok(())
}
