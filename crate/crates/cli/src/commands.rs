use std::io::Write;
use std::path::Path;

use polarcal::{
    balanced_merge, generate_synthetic, iterative_stratified_split, predict_proba,
    stratified_split, summarize, train as train_model, tune_with, Dataset, LabelSchema,
    LinearModel, Preprocessor, ProbabilityMatrix, SplitConfig, SplitResult, SyntheticSpec,
    ThresholdVector, TrainReport, TuneOptions, TuneOutcome,
};
use sha2::{Digest, Sha256};

use crate::report;
use crate::{
    CliError, CliResult, EvalArgs, MergeArgs, OutputFormat, PredictArgs, SplitArgs, SplitMethod,
    StatsArgs, SynthArgs, TrainArgs, TrainFlags, TuneArgs, TuneFlags,
};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub(crate) fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("writing output: {e}")))
}

/// Loads a dataset, prefixing errors with the file name.
pub(crate) fn load(path: &Path, schema: &LabelSchema, pre: &Preprocessor) -> CliResult<Dataset> {
    let bytes = read_bytes(path)?;
    Dataset::from_jsonl(bytes.as_slice(), schema.clone(), pre)
        .map_err(|e| with_path(path, e.into()))
}

fn with_path(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        usage => usage,
    }
}

pub(crate) fn dataset_bytes(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf).expect("writing to memory");
    buf
}

pub(crate) fn model_bytes(model: &LinearModel) -> Vec<u8> {
    let mut buf = Vec::new();
    model.write_to(&mut buf).expect("writing to memory");
    buf
}

pub(crate) fn probs_bytes(pm: &ProbabilityMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    pm.write_tsv(&mut buf).expect("writing to memory");
    buf
}

pub(crate) fn thresholds_bytes(tv: &ThresholdVector, schema: &LabelSchema) -> Vec<u8> {
    let mut buf = Vec::new();
    tv.write_tsv(schema, &mut buf).expect("writing to memory");
    buf
}

pub(crate) fn history_bytes(report: &TrainReport) -> Vec<u8> {
    let mut buf = Vec::new();
    report
        .write_history_tsv(&mut buf)
        .expect("writing to memory");
    buf
}

pub(crate) fn load_model(path: &Path) -> CliResult<LinearModel> {
    let bytes = read_bytes(path)?;
    LinearModel::read_from(bytes.as_slice()).map_err(|e| with_path(path, e.into()))
}

pub(crate) fn load_probs(
    path: &Path,
    schema: Option<&LabelSchema>,
) -> CliResult<ProbabilityMatrix> {
    let bytes = read_bytes(path)?;
    ProbabilityMatrix::read_tsv(bytes.as_slice(), schema).map_err(|e| with_path(path, e.into()))
}

pub(crate) fn load_thresholds(path: &Path, schema: &LabelSchema) -> CliResult<ThresholdVector> {
    let bytes = read_bytes(path)?;
    ThresholdVector::read_tsv(bytes.as_slice(), schema).map_err(|e| with_path(path, e.into()))
}

pub(crate) fn split_dataset(
    ds: &Dataset,
    fraction: f64,
    method: SplitMethod,
    seed: u64,
) -> CliResult<SplitResult> {
    let cfg = SplitConfig {
        val_fraction: fraction,
        seed,
    };
    let iterative = match method {
        SplitMethod::Auto => !ds.schema().is_binary(),
        SplitMethod::Stratified => false,
        SplitMethod::Iterative => true,
    };
    Ok(if iterative {
        iterative_stratified_split(ds, &cfg)?
    } else {
        stratified_split(ds, &cfg)?
    })
}

pub(crate) fn fit(
    train: &Dataset,
    val: &Dataset,
    flags: &TrainFlags,
    seed: u64,
) -> CliResult<(LinearModel, TrainReport)> {
    let tcfg = flags.train_config(seed);
    let fcfg = flags.featurizer()?;
    Ok(train_model(train, val, &tcfg, &fcfg, flags.weighting)?)
}

pub(crate) fn tune_options(flags: &TuneFlags) -> CliResult<TuneOptions> {
    if flags.refine_passes == 0 {
        return Err(CliError::Usage("--refine-passes must be at least 1".into()));
    }
    Ok(TuneOptions {
        passes: flags.refine_passes,
        mode: flags.refine_mode,
        ..Default::default()
    })
}

/// Tunes thresholds on `pm` against `gold`, whose ids must line up with it.
pub(crate) fn tune_on(
    pm: &ProbabilityMatrix,
    gold: &Dataset,
    opts: &TuneOptions,
) -> CliResult<TuneOutcome> {
    polarcal::evaluate(pm, gold, &ThresholdVector::uniform(pm.width(), 0.5))?;
    Ok(tune_with(pm, &gold.label_matrix(), opts)?)
}

pub(crate) fn stats(a: &StatsArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = a.labels.resolve_or_binary()?;
    let ds = load(&a.data, &schema, &a.pre.preprocessor()?)?;
    let stats = summarize(&ds)?;
    match a.format {
        OutputFormat::Table => emit(out, &report::stats_table(&stats)),
        OutputFormat::Machine => {
            let json = serde_json::to_string(&stats).expect("stats serialize");
            emit(out, &format!("{json}\n"))
        }
    }
}

pub(crate) fn split(a: &SplitArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = a.labels.resolve_or_binary()?;
    let ds = load(&a.data, &schema, &a.pre.preprocessor()?)?;
    let result = split_dataset(&ds, a.val_fraction, a.method, a.common.seed)?;
    create_dir(&a.out_dir)?;
    write_bytes(
        &a.out_dir.join("train.jsonl"),
        &dataset_bytes(&result.train),
    )?;
    write_bytes(&a.out_dir.join("val.jsonl"), &dataset_bytes(&result.val))?;
    emit(out, &report::split_table(&ds, &result))
}

pub(crate) fn merge(a: &MergeArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = a.labels.resolve_or_binary()?;
    let pre = a.pre.preprocessor()?;
    let primary = load(&a.primary, &schema, &pre)?;
    let donor = load(&a.donor, &schema, &pre)?;
    let merged = balanced_merge(&primary, &donor, a.common.seed)?;
    write_bytes(&a.out, &dataset_bytes(&merged))?;
    let pos = merged.positive_counts()[0];
    emit(
        out,
        &format!(
            "instances\t{}\npositives\t{pos}\nnegatives\t{}\nfrom_donor\t{}\n",
            merged.len(),
            merged.len() - pos,
            merged.len() - primary.len()
        ),
    )
}

pub(crate) fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = a.labels.resolve_or_binary()?;
    let pre = a.pre.preprocessor()?;
    let train = load(&a.train, &schema, &pre)?;
    let val = load(&a.val, &schema, &pre)?;
    let (model, rep) = fit(&train, &val, &a.flags, a.common.seed)?;
    write_bytes(&a.model_out, &model_bytes(&model))?;
    if let Some(path) = &a.history {
        write_bytes(path, &history_bytes(&rep))?;
    }
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&rep).expect("report serialize");
        write_bytes(path, format!("{json}\n").as_bytes())?;
    }
    emit(out, &report::train_summary(&rep))
}

pub(crate) fn predict(a: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let ds = load(&a.data, &model.schema, &a.pre.preprocessor()?)?;
    let pm = predict_proba(&model, &ds)?;
    write_bytes(&a.out, &probs_bytes(&pm))?;
    emit(
        out,
        &format!("rows\t{}\nlabels\t{}\n", pm.len(), pm.width()),
    )
}

pub(crate) fn tune(a: &TuneArgs, out: &mut dyn Write) -> CliResult<()> {
    let explicit = a.labels.resolve()?;
    let pm = load_probs(&a.probs, explicit.as_ref())?;
    let gold = load(&a.gold, &pm.schema, &a.pre.preprocessor()?)?;
    let outcome = tune_on(&pm, &gold, &tune_options(&a.tune)?)?;
    write_bytes(&a.out, &thresholds_bytes(&outcome.thresholds, &pm.schema))?;
    emit(out, &report::tune_table(&outcome, &pm.schema))
}

pub(crate) fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let explicit = a.labels.resolve()?;
    let pm = load_probs(&a.probs, explicit.as_ref())?;
    let gold = load(&a.gold, &pm.schema, &a.pre.preprocessor()?)?;
    let tv = match &a.thresholds {
        Some(path) => load_thresholds(path, &pm.schema)?,
        None => ThresholdVector::uniform(pm.width(), 0.5),
    };
    let metrics = polarcal::evaluate(&pm, &gold, &tv)?;
    match a.format {
        OutputFormat::Table => emit(out, &report::eval_table(&metrics, a.binary_mode)),
        OutputFormat::Machine => emit(out, &report::eval_machine(&metrics, a.binary_mode)),
    }
}

pub(crate) fn synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let k = a.rates.len();
    let schema = match a.labels.resolve()? {
        Some(s) => s,
        None => ["subtask1", "subtask2", "subtask3"]
            .iter()
            .filter_map(|p| LabelSchema::preset(p))
            .find(|s| s.len() == k)
            .map(Ok)
            .unwrap_or_else(|| LabelSchema::new((1..=k).map(|i| format!("label{i}"))))?,
    };
    let spec = SyntheticSpec {
        schema,
        n_instances: a.instances,
        rates: a.rates.clone(),
        noise: a.noise,
        seed: a.common.seed,
    };
    let ds = generate_synthetic(&spec)?;
    write_bytes(&a.out, &dataset_bytes(&ds))?;
    let stats = summarize(&ds)?;
    emit(out, &report::stats_table(&stats))
}
