//! `pipeline`: holdout → split → train → predict(val) → tune → predict(test) → eval.
//!
//! Every stage reads its inputs back from the run directory and the manifest
//! lists, per stage, the digest of each file it read and wrote. Tuning only
//! ever sees validation files. The manifest holds no paths or timestamps, so
//! identical inputs give byte-identical runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use polarcal::{evaluate, predict_proba, summarize, ThresholdVector};
use serde_json::{json, Value};

use crate::commands::{
    create_dir, dataset_bytes, fit, history_bytes, load, load_model, load_probs, load_thresholds,
    model_bytes, probs_bytes, read_bytes, sha256_hex, split_dataset, thresholds_bytes, tune_on,
    tune_options, write_bytes,
};
use crate::{report, CliError, CliResult, PipelineArgs};

struct Stage {
    name: &'static str,
    config: Value,
    inputs: Vec<Value>,
    outputs: Vec<Value>,
    metrics: Value,
}

impl Stage {
    fn new(name: &'static str, config: Value) -> Self {
        Self {
            name,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: Value::Null,
        }
    }

    fn read(&mut self, path: &Path) -> CliResult<()> {
        let bytes = read_bytes(path)?;
        self.inputs.push(file_entry(path, &bytes));
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_bytes(path, bytes)?;
        self.outputs.push(file_entry(path, bytes));
        Ok(())
    }

    fn into_json(self) -> Value {
        let config_text = serde_json::to_string(&self.config).expect("config serialize");
        json!({
            "stage": self.name,
            "config": self.config,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "metrics": self.metrics,
        })
    }
}

fn file_entry(path: &Path, bytes: &[u8]) -> Value {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    json!({ "file": name, "sha256": sha256_hex(bytes) })
}

fn method_name(m: crate::SplitMethod) -> &'static str {
    match m {
        crate::SplitMethod::Auto => "auto",
        crate::SplitMethod::Stratified => "stratified",
        crate::SplitMethod::Iterative => "iterative",
    }
}

pub(crate) fn pipeline(a: &PipelineArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = a.labels.resolve_or_binary()?;
    let pre_cfg = a.pre.config();
    let pre = a.pre.preprocessor()?;
    let seed = a.common.seed;
    let dir = &a.out_dir;
    create_dir(dir)?;
    let mut stages = Vec::new();

    let file = |name: &str| -> PathBuf { dir.join(name) };
    let (dev_path, test_path) = match &a.eval {
        Some(eval) => (a.data.clone(), eval.clone()),
        None => {
            let mut st = Stage::new(
                "holdout",
                json!({
                    "method": method_name(a.method),
                    "fraction": a.test_fraction,
                    "seed": seed,
                    "preprocess": pre_cfg,
                }),
            );
            st.read(&a.data)?;
            let ds = load(&a.data, &schema, &pre)?;
            let parts = split_dataset(&ds, a.test_fraction, a.method, seed)?;
            st.write(&file("dev.jsonl"), &dataset_bytes(&parts.train))?;
            st.write(&file("test.jsonl"), &dataset_bytes(&parts.val))?;
            st.metrics = json!({
                "instances": ds.len(),
                "dev_instances": parts.train.len(),
                "test_instances": parts.val.len(),
                "label_rates": summarize(&ds)?.per_label_positive_pct,
            });
            stages.push(st.into_json());
            (file("dev.jsonl"), file("test.jsonl"))
        }
    };

    let mut st = Stage::new(
        "split",
        json!({
            "method": method_name(a.method),
            "fraction": a.val_fraction,
            "seed": seed,
            "preprocess": pre_cfg,
        }),
    );
    st.read(&dev_path)?;
    let dev = load(&dev_path, &schema, &pre)?;
    let parts = split_dataset(&dev, a.val_fraction, a.method, seed)?;
    st.write(&file("train.jsonl"), &dataset_bytes(&parts.train))?;
    st.write(&file("val.jsonl"), &dataset_bytes(&parts.val))?;
    st.metrics = json!({
        "train_instances": parts.train.len(),
        "val_instances": parts.val.len(),
        "per_label_train_rate": parts.per_label_train_pct,
        "per_label_val_rate": parts.per_label_val_pct,
    });
    stages.push(st.into_json());

    let tcfg = a.flags.train_config(seed);
    let fcfg = a.flags.featurizer()?;
    let mut st = Stage::new(
        "train",
        json!({
            "train": tcfg,
            "featurizer": fcfg,
            "weighting": a.flags.weighting,
            "preprocess": pre_cfg,
        }),
    );
    st.read(&file("train.jsonl"))?;
    st.read(&file("val.jsonl"))?;
    let train = load(&file("train.jsonl"), &schema, &pre)?;
    let val = load(&file("val.jsonl"), &schema, &pre)?;
    let (model, rep) = fit(&train, &val, &a.flags, seed)?;
    st.write(&file("model.txt"), &model_bytes(&model))?;
    st.write(&file("history.tsv"), &history_bytes(&rep))?;
    st.metrics = json!({
        "epochs_run": rep.history.len(),
        "best_epoch": rep.best_epoch,
        "best_val_macro_f1": rep.best_val_macro_f1,
        "stopped_early": rep.stopped_early,
        "optimizer_steps": rep.optimizer_steps,
        "label_smoothing": rep.label_smoothing,
        "weights_used": rep.weights_used,
    });
    stages.push(st.into_json());

    let predict_stage = |name: &'static str, data: &Path, probs: &str| -> CliResult<Value> {
        let mut st = Stage::new(name, json!({ "preprocess": pre_cfg }));
        st.read(&file("model.txt"))?;
        st.read(data)?;
        let model = load_model(&file("model.txt"))?;
        let ds = load(data, &model.schema, &pre)?;
        let pm = predict_proba(&model, &ds)?;
        st.write(&file(probs), &probs_bytes(&pm))?;
        st.metrics = json!({ "rows": pm.len() });
        Ok(st.into_json())
    };
    stages.push(predict_stage(
        "predict_val",
        &file("val.jsonl"),
        "val.probs",
    )?);

    let opts = tune_options(&a.tune)?;
    let mut st = Stage::new("tune", json!(opts));
    st.read(&file("val.probs"))?;
    st.read(&file("val.jsonl"))?;
    let pm = load_probs(&file("val.probs"), Some(&schema))?;
    let gold = load(&file("val.jsonl"), &schema, &pre)?;
    let outcome = tune_on(&pm, &gold, &opts)?;
    st.write(
        &file("thresholds.tsv"),
        &thresholds_bytes(&outcome.thresholds, &schema),
    )?;
    st.metrics = json!({
        "val_macro_f1_default": outcome.default_macro_f1,
        "val_macro_f1_base": outcome.base_macro_f1,
        "val_macro_f1_tuned": outcome.tuned_macro_f1,
        "base_threshold": outcome.thresholds.base_theta,
        "thresholds": outcome.thresholds.theta,
    });
    stages.push(st.into_json());

    stages.push(predict_stage("predict_test", &test_path, "test.probs")?);

    let mode = a.flags.binary_mode;
    let mut st = Stage::new("eval", json!({ "binary_mode": mode.to_string() }));
    st.read(&file("test.probs"))?;
    st.read(&test_path)?;
    st.read(&file("thresholds.tsv"))?;
    let pm = load_probs(&file("test.probs"), Some(&schema))?;
    let gold = load(&test_path, &schema, &pre)?;
    let tv = load_thresholds(&file("thresholds.tsv"), &schema)?;
    let tuned = evaluate(&pm, &gold, &tv)?;
    let default = evaluate(&pm, &gold, &ThresholdVector::uniform(schema.len(), 0.5))?;
    let table = report::eval_table(&tuned, mode);
    st.write(&file("metrics.tsv"), table.as_bytes())?;
    st.metrics = json!({
        "test_score_default": default.score(mode),
        "test_score_tuned": tuned.score(mode),
        "test_macro_f1_default": default.macro_f1,
        "test_macro_f1_tuned": tuned.macro_f1,
        "test_micro_f1_tuned": tuned.micro_f1,
        "per_label_f1_tuned": tuned.per_label_f1,
    });
    stages.push(st.into_json());

    let manifest = json!({
        "tool": "polarcal",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "labels": schema.names(),
        "stages": stages,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialize");
    write_bytes(&file("manifest.json"), format!("{text}\n").as_bytes())?;

    let mut summary = table;
    summary.push_str(&format!(
        "\nscore_at_0.5\t{:.4}\nscore_tuned\t{:.4}\n",
        default.score(mode),
        tuned.score(mode)
    ));
    out.write_all(summary.as_bytes())
        .map_err(|e| CliError::Data(format!("writing output: {e}")))
}
