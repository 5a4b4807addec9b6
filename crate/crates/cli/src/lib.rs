//! The `polarcal` command-line tool.
//!
//! Every subcommand is a pure function of its input files, flags and seed.
//! Exit status is 0 on success, 1 for data errors and 2 for usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use polarcal::model::Warmup;
use polarcal::{
    BinaryMode, FeaturizerConfig, LabelSchema, PreprocessConfig, Preprocessor, RefineMode, TfMode,
    TrainConfig, WeightingMode,
};

mod commands;
pub mod config;
mod pipeline;
mod report;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn status(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<polarcal::Error> for CliError {
    fn from(e: polarcal::Error) -> Self {
        match e {
            polarcal::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "polarcal",
    version,
    about = "Imbalanced multi-label text classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print label statistics of a dataset
    Stats(StatsArgs),
    /// Split a dataset into train.jsonl and val.jsonl
    Split(SplitArgs),
    /// Balance a binary corpus with rows drawn from a donor corpus
    Merge(MergeArgs),
    /// Train the linear classifier
    Train(TrainArgs),
    /// Write per-label probabilities for a dataset
    Predict(PredictArgs),
    /// Tune per-label thresholds on validation probabilities
    Tune(TuneArgs),
    /// Score probabilities against gold labels
    Eval(EvalArgs),
    /// Split, train, tune on validation and evaluate on held-out data
    Pipeline(PipelineArgs),
    /// Generate a synthetic corpus with chosen label rates
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Random seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Flat key = value file of flag values; explicit flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct LabelArgs {
    /// Label preset: subtask1, subtask2 or subtask3
    #[arg(long)]
    schema: Option<String>,
    /// Comma-separated label names (takes precedence over --schema)
    #[arg(long)]
    labels: Option<String>,
}

impl LabelArgs {
    fn resolve(&self) -> CliResult<Option<LabelSchema>> {
        if let Some(list) = &self.labels {
            return Ok(Some(
                LabelSchema::from_csv(list).map_err(|e| CliError::Usage(e.to_string()))?,
            ));
        }
        match &self.schema {
            Some(name) => LabelSchema::preset(name).map(Some).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown schema '{name}' (expected subtask1, subtask2 or subtask3)"
                ))
            }),
            None => Ok(None),
        }
    }

    fn resolve_or_binary(&self) -> CliResult<LabelSchema> {
        Ok(self
            .resolve()?
            .unwrap_or_else(|| LabelSchema::preset("subtask1").expect("preset exists")))
    }
}

#[derive(Debug, Clone, Args)]
struct PreArgs {
    /// Keep at most this many whitespace tokens per text
    #[arg(long, default_value_t = 128)]
    max_tokens: usize,
    /// Emoji name table replacing the bundled one
    #[arg(long, value_name = "FILE")]
    emoji_table: Option<PathBuf>,
}

impl PreArgs {
    fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            max_tokens: self.max_tokens,
            emoji_table_path: self.emoji_table.clone(),
            ..Default::default()
        }
    }

    fn preprocessor(&self) -> CliResult<Preprocessor> {
        Ok(Preprocessor::new(self.config())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SplitMethod {
    /// Stratified for one label, iterative for several
    Auto,
    Stratified,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OutputFormat {
    Table,
    Machine,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Dataset file (JSONL)
    data: PathBuf,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
    /// `machine` prints one JSON record
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Dataset file (JSONL)
    data: PathBuf,
    /// Directory receiving train.jsonl and val.jsonl
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, value_enum, default_value_t = SplitMethod::Auto)]
    method: SplitMethod,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Binary corpus kept whole
    #[arg(long)]
    primary: PathBuf,
    /// Binary corpus supplying balancing rows
    #[arg(long)]
    donor: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
struct TrainFlags {
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().weight_decay)]
    weight_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    max_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().accumulation_steps)]
    accumulation_steps: usize,
    /// Share of optimizer steps spent warming up
    #[arg(long, default_value_t = 0.1)]
    warmup_ratio: f64,
    /// Absolute warmup length; overrides --warmup-ratio
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().max_grad_norm)]
    max_grad_norm: f64,
    /// Defaults to 0.1 for one label and 0 for several
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    patience: usize,
    #[arg(long, default_value_t = TrainConfig::default().pos_weight_cap)]
    pos_weight_cap: f64,
    /// none or balanced
    #[arg(long, default_value_t = WeightingMode::Balanced)]
    weighting: WeightingMode,
    /// Score used for one-label tasks: two-class-macro or positive-f1
    #[arg(long, default_value_t = BinaryMode::TwoClassMacro)]
    binary_mode: BinaryMode,
    #[arg(long, default_value_t = FeaturizerConfig::default().hash_dim)]
    hash_dim: usize,
    /// N-gram orders, any of 1 and 2
    #[arg(long, default_value = "1,2")]
    ngrams: String,
    #[arg(long, value_parser = ["binary", "count"], default_value = "binary")]
    tf_mode: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    l2_normalize: bool,
}

impl TrainFlags {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            accumulation_steps: self.accumulation_steps,
            warmup: match self.warmup_steps {
                Some(s) => Warmup::Steps(s),
                None => Warmup::Ratio(self.warmup_ratio),
            },
            max_grad_norm: self.max_grad_norm,
            label_smoothing: self.label_smoothing,
            patience: self.patience,
            seed,
            pos_weight_cap: self.pos_weight_cap,
            binary_mode: self.binary_mode,
        }
    }

    fn featurizer(&self) -> CliResult<FeaturizerConfig> {
        let mut unigrams = false;
        let mut bigrams = false;
        for part in self.ngrams.split(',').map(str::trim) {
            match part {
                "1" => unigrams = true,
                "2" => bigrams = true,
                other => {
                    return Err(CliError::Usage(format!(
                        "unsupported n-gram order '{other}' (expected 1 or 2)"
                    )))
                }
            }
        }
        let cfg = FeaturizerConfig {
            hash_dim: self.hash_dim,
            unigrams,
            bigrams,
            tf_mode: if self.tf_mode == "count" {
                TfMode::Count
            } else {
                TfMode::Binary
            },
            l2_normalize: self.l2_normalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Model file to write
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch history (TSV)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Full training report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset file (JSONL); labels are read with the model's label set
    #[arg(long)]
    data: PathBuf,
    /// Probability file to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
struct TuneFlags {
    /// Number of refinement sweeps over all labels
    #[arg(long, default_value_t = 1)]
    refine_passes: usize,
    /// sequential or independent
    #[arg(long, default_value_t = RefineMode::Sequential)]
    refine_mode: RefineMode,
}

#[derive(Debug, Args)]
struct TuneArgs {
    /// Validation probability file
    #[arg(long)]
    probs: PathBuf,
    /// Validation dataset file with gold labels
    #[arg(long)]
    gold: PathBuf,
    /// Thresholds file to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tune: TuneFlags,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Thresholds file; every label uses 0.5 when absent
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// `machine` prints one key=value line per metric
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    #[arg(long, default_value_t = BinaryMode::TwoClassMacro)]
    binary_mode: BinaryMode,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Dataset file (JSONL)
    #[arg(long)]
    data: PathBuf,
    /// Held-out evaluation file; without it a test split is carved from --data
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Directory receiving every artifact and manifest.json
    #[arg(long, default_value = "polarcal-run")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, value_enum, default_value_t = SplitMethod::Auto)]
    method: SplitMethod,
    #[command(flatten)]
    flags: TrainFlags,
    #[command(flatten)]
    tune: TuneFlags,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    pre: PreArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Dataset file to write
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3000)]
    instances: usize,
    /// Comma-separated positive rate per label
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Share of each label's cue-bearing rows whose label is swapped
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    common: Common,
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let outcome = config::expand_config_args(args).and_then(|args| {
        match command().try_get_matches_from(args) {
            Ok(m) => Cli::from_arg_matches(&m)
                .map_err(|e| CliError::Usage(e.to_string()))
                .map(Some),
            Err(e) if !e.use_stderr() => {
                let _ = write!(out, "{e}");
                Ok(None)
            }
            Err(e) => Err(CliError::Usage(e.to_string().trim_end().to_string())),
        }
    });
    let result = match outcome {
        Ok(Some(cli)) => dispatch(cli, out),
        Ok(None) => Ok(()),
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let text = e.to_string();
            if text.starts_with("error:") {
                let _ = writeln!(err, "{text}");
            } else {
                let _ = writeln!(err, "error: {text}");
            }
            e.status()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Stats(a) => commands::stats(&a, out),
        Command::Split(a) => commands::split(&a, out),
        Command::Merge(a) => commands::merge(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Predict(a) => commands::predict(&a, out),
        Command::Tune(a) => commands::tune(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Pipeline(a) => pipeline::pipeline(&a, out),
        Command::Synth(a) => commands::synth(&a, out),
    }
}
