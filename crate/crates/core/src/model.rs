//! Multi-label linear classifier over hashed n-gram features.
//!
//! Every label has its own logistic output `σ(w_l·x + b_l)`. Training
//! minimizes weighted binary cross-entropy with optional label smoothing:
//!
//! ```text
//! y' = y(1 − ε) + ε/2
//! ℓ  = −[ a_l · y' · log σ(z) + c_l · (1 − y') · log(1 − σ(z)) ]
//! ```
//!
//! averaged over batch × labels, where `a_l`/`c_l` are the positive/negative
//! term weights of label `l` ([`LossWeights`]). The optimizer is minibatch
//! SGD with gradient accumulation, global-norm clipping, linear warmup then
//! cosine decay, and decoupled weight decay on `W` (not on the bias).
//! After every epoch the validation macro-F1 at threshold 0.5 decides
//! which epoch's parameters are kept and when to stop.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration::ProbabilityMatrix;
use crate::corpus::{Dataset, LabelSchema};
use crate::error::{Error, Result};
use crate::features::{featurize, FeaturizerConfig, SparseVector, TfMode};
use crate::metrics::{confusion, task_macro_f1, BinaryMode};
use crate::weighting::{
    class_weights, pos_weights, ClassWeights, PosWeights, DEFAULT_POS_WEIGHT_CAP,
};

const MODEL_MAGIC: &str = "polarcal-linear-model v1";

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Row-major `hash_dim × L`: the weights of feature `f` are
    /// `weights[f * L .. (f + 1) * L]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub featurizer: FeaturizerConfig,
    pub schema: LabelSchema,
}

impl LinearModel {
    pub fn zeros(featurizer: FeaturizerConfig, schema: LabelSchema) -> Self {
        let l = schema.len();
        Self {
            weights: vec![0.0; featurizer.hash_dim * l],
            bias: vec![0.0; l],
            featurizer,
            schema,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.featurizer.hash_dim
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        let l = self.n_labels();
        &self.weights[feature * l..(feature + 1) * l]
    }

    /// `w_l · x + b_l` for every label.
    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (f, v) in x.iter() {
            for (zl, w) in z.iter_mut().zip(self.row(f)) {
                *zl += w * v;
            }
        }
        z
    }

    pub fn predict_one(&self, text: &str) -> Vec<f64> {
        self.logits(&featurize(text, &self.featurizer))
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Text container: header, featurizer settings, labels, bias, then one
    /// line per feature row holding any non-zero weight. Values use the
    /// shortest representation that parses back to the same bits.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let fc = &self.featurizer;
        writeln!(out, "{MODEL_MAGIC}")?;
        writeln!(out, "hash_dim\t{}", fc.hash_dim)?;
        writeln!(out, "unigrams\t{}", fc.unigrams)?;
        writeln!(out, "bigrams\t{}", fc.bigrams)?;
        let tf = match fc.tf_mode {
            TfMode::Binary => "binary",
            TfMode::Count => "count",
        };
        writeln!(out, "tf_mode\t{tf}")?;
        writeln!(out, "l2_normalize\t{}", fc.l2_normalize)?;
        writeln!(out, "labels\t{}", self.schema.names().join("\t"))?;
        write!(out, "bias")?;
        for b in &self.bias {
            write!(out, "\t{b:?}")?;
        }
        writeln!(out)?;
        let l = self.n_labels();
        let rows: Vec<usize> = (0..self.dim())
            .filter(|&f| self.row(f).iter().any(|&w| w != 0.0))
            .collect();
        writeln!(out, "rows\t{}", rows.len())?;
        for f in rows {
            write!(out, "{f}")?;
            for w in &self.weights[f * l..(f + 1) * l] {
                write!(out, "\t{w:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| {
            l.map(|s| (i + 1, s)).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines.next().transpose()?.ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("model file ends before '{what}'"),
            })
        };
        let (line, magic) = next("header")?;
        if magic != MODEL_MAGIC {
            return Err(Error::Parse {
                line,
                message: format!("not a model file (header '{magic}')"),
            });
        }
        fn field(entry: (usize, String), key: &str) -> Result<(usize, String)> {
            let (line, text) = entry;
            match text.split_once('\t') {
                Some((k, v)) if k == key => Ok((line, v.to_string())),
                _ => Err(Error::Parse {
                    line,
                    message: format!("expected field '{key}'"),
                }),
            }
        }
        fn parse<T: std::str::FromStr>(entry: (usize, String)) -> Result<T> {
            entry.1.parse().map_err(|_| Error::Parse {
                line: entry.0,
                message: format!("bad value '{}'", entry.1),
            })
        }
        let hash_dim: usize = parse(field(next("hash_dim")?, "hash_dim")?)?;
        let unigrams: bool = parse(field(next("unigrams")?, "unigrams")?)?;
        let bigrams: bool = parse(field(next("bigrams")?, "bigrams")?)?;
        let (tf_line, tf) = field(next("tf_mode")?, "tf_mode")?;
        let tf_mode = match tf.as_str() {
            "binary" => TfMode::Binary,
            "count" => TfMode::Count,
            other => {
                return Err(Error::Parse {
                    line: tf_line,
                    message: format!("unknown tf_mode '{other}'"),
                })
            }
        };
        let l2_normalize: bool = parse(field(next("l2_normalize")?, "l2_normalize")?)?;
        let (_, labels) = field(next("labels")?, "labels")?;
        let schema = LabelSchema::new(labels.split('\t'))?;
        let l = schema.len();
        let featurizer = FeaturizerConfig {
            hash_dim,
            unigrams,
            bigrams,
            tf_mode,
            l2_normalize,
        };
        let mut model = LinearModel::zeros(featurizer, schema);

        let (bias_line, bias) = field(next("bias")?, "bias")?;
        let bias: Vec<f64> = bias
            .split('\t')
            .map(|v| parse((bias_line, v.to_string())))
            .collect::<Result<_>>()?;
        if bias.len() != l {
            return Err(Error::Parse {
                line: bias_line,
                message: format!("{} bias values for {l} labels", bias.len()),
            });
        }
        model.bias = bias;
        let n_rows: usize = parse(field(next("rows")?, "rows")?)?;
        for _ in 0..n_rows {
            let (line, text) = next("weight row")?;
            let mut parts = text.split('\t');
            let f: usize = parse((line, parts.next().unwrap_or_default().to_string()))?;
            if f >= hash_dim {
                return Err(Error::Parse {
                    line,
                    message: format!("feature {f} outside hash_dim {hash_dim}"),
                });
            }
            let values: Vec<f64> = parts
                .map(|v| parse((line, v.to_string())))
                .collect::<Result<_>>()?;
            if values.len() != l {
                return Err(Error::Parse {
                    line,
                    message: format!("{} weights for {l} labels", values.len()),
                });
            }
            model.weights[f * l..(f + 1) * l].copy_from_slice(&values);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite(
                "model file holds non-finite parameters".into(),
            ));
        }
        Ok(model)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// One featurized training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: SparseVector,
    pub y: Vec<bool>,
}

/// Multipliers of the positive and negative loss terms, per label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossWeights {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl LossWeights {
    pub fn uniform(n_labels: usize) -> Self {
        Self {
            pos: vec![1.0; n_labels],
            neg: vec![1.0; n_labels],
        }
    }

    pub fn from_pos(pw: &PosWeights) -> Self {
        Self {
            pos: pw.pw.clone(),
            neg: vec![1.0; pw.pw.len()],
        }
    }

    /// Binary task: class 0 weights the negative term, class 1 the positive.
    pub fn from_classes(cw: &ClassWeights) -> Self {
        Self {
            pos: vec![cw.w[1]],
            neg: vec![cw.w[0]],
        }
    }
}

/// Sparse gradient: only feature rows touched by the batch (or carrying
/// weight decay) are present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub rows: BTreeMap<usize, Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradient {
    fn zeros(n_labels: usize) -> Self {
        Self {
            rows: BTreeMap::new(),
            bias: vec![0.0; n_labels],
        }
    }

    pub fn norm(&self) -> f64 {
        self.rows
            .values()
            .flatten()
            .chain(&self.bias)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Dense copy of the weight gradient (`dim × L`).
    pub fn dense_weights(&self, dim: usize) -> Vec<f64> {
        let l = self.bias.len();
        let mut out = vec![0.0; dim * l];
        for (&f, g) in &self.rows {
            out[f * l..(f + 1) * l].copy_from_slice(g);
        }
        out
    }

    fn add_scaled(&mut self, other: &Gradient, k: f64) {
        for (&f, g) in &other.rows {
            let row = self.rows.entry(f).or_insert_with(|| vec![0.0; g.len()]);
            for (a, b) in row.iter_mut().zip(g) {
                *a += k * b;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += k * b;
        }
    }

    fn scale(&mut self, k: f64) {
        self.rows.values_mut().flatten().for_each(|g| *g *= k);
        self.bias.iter_mut().for_each(|g| *g *= k);
    }
}

/// Rescales `grad` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut Gradient, max_norm: f64) -> f64 {
    let norm = grad.norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

/// Loss and exact gradient of the weighted, smoothed BCE objective plus
/// `weight_decay · ½‖W‖²`.
pub fn loss_and_grad(
    model: &LinearModel,
    batch: &[Example],
    weights: &LossWeights,
    smoothing: f64,
    weight_decay: f64,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let l = model.n_labels();
    if weights.pos.len() != l || weights.neg.len() != l {
        return Err(Error::Shape(format!(
            "loss weights for {} labels, model has {l}",
            weights.pos.len()
        )));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::Config(format!(
            "label smoothing must lie in [0, 1), got {smoothing}"
        )));
    }
    if let Some(b) = model.bias.iter().find(|b| !b.is_finite()) {
        return Err(Error::NonFinite(format!("bias {b}")));
    }
    let scale = 1.0 / (batch.len() * l) as f64;
    let mut grad = Gradient::zeros(l);
    let mut loss = 0.0;
    for ex in batch {
        if ex.y.len() != l {
            return Err(Error::Shape(format!(
                "example has {} labels, model has {l}",
                ex.y.len()
            )));
        }
        for (f, v) in ex.x.iter() {
            if f >= model.dim() {
                return Err(Error::Shape(format!(
                    "feature {f} outside dimension {}",
                    model.dim()
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature {f} has value {v}")));
            }
            if let Some(w) = model.row(f).iter().find(|w| !w.is_finite()) {
                return Err(Error::NonFinite(format!("weight {w} on feature {f}")));
            }
        }
        let z = model.logits(&ex.x);
        let mut dz = vec![0.0; l];
        for j in 0..l {
            let y = if ex.y[j] { 1.0 } else { 0.0 };
            let t = y * (1.0 - smoothing) + 0.5 * smoothing;
            let (a, c) = (weights.pos[j], weights.neg[j]);
            // log σ(z) = −softplus(−z), log(1 − σ(z)) = −softplus(z)
            loss += a * t * softplus(-z[j]) + c * (1.0 - t) * softplus(z[j]);
            let s = sigmoid(z[j]);
            dz[j] = (-a * t * (1.0 - s) + c * (1.0 - t) * s) * scale;
        }
        for (f, v) in ex.x.iter() {
            let row = grad.rows.entry(f).or_insert_with(|| vec![0.0; l]);
            for (g, d) in row.iter_mut().zip(&dz) {
                *g += d * v;
            }
        }
        for (g, d) in grad.bias.iter_mut().zip(&dz) {
            *g += d;
        }
    }
    loss *= scale;

    if weight_decay != 0.0 {
        let mut penalty = 0.0;
        for f in 0..model.dim() {
            let w = model.row(f);
            if w.iter().all(|&x| x == 0.0) {
                continue;
            }
            let row = grad.rows.entry(f).or_insert_with(|| vec![0.0; l]);
            for (g, &x) in row.iter_mut().zip(w) {
                *g += weight_decay * x;
                penalty += x * x;
            }
        }
        loss += 0.5 * weight_decay * penalty;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    Ratio(f64),
    Steps(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    None,
    #[default]
    Balanced,
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightingMode::None),
            "balanced" => Ok(WeightingMode::Balanced),
            other => Err(Error::Config(format!(
                "unknown weighting mode '{other}' (expected none or balanced)"
            ))),
        }
    }
}

impl std::fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightingMode::None => "none",
            WeightingMode::Balanced => "balanced",
        })
    }
}

/// Optimizer settings. The loss is a mean over batch and labels and the
/// features are unit-normalized sparse vectors, so the default learning rate
/// corresponds to a per-row step of roughly `10 / 64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub warmup: Warmup,
    pub max_grad_norm: f64,
    /// `None` picks 0.1 for one label and 0.0 otherwise.
    pub label_smoothing: Option<f64>,
    pub patience: usize,
    pub seed: u64,
    pub pos_weight_cap: f64,
    pub binary_mode: BinaryMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 10.0,
            weight_decay: 1e-4,
            max_epochs: 10,
            batch_size: 32,
            accumulation_steps: 2,
            warmup: Warmup::Ratio(0.1),
            max_grad_norm: 1.0,
            label_smoothing: None,
            patience: 3,
            seed: 42,
            pos_weight_cap: DEFAULT_POS_WEIGHT_CAP,
            binary_mode: BinaryMode::TwoClassMacro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 {
            return bad("batch_size and accumulation_steps must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if !(self.max_grad_norm > 0.0) {
            return bad(format!(
                "max_grad_norm must be > 0, got {}",
                self.max_grad_norm
            ));
        }
        if let Some(e) = self.label_smoothing {
            if !(0.0..1.0).contains(&e) {
                return bad(format!("label_smoothing must lie in [0, 1), got {e}"));
            }
        }
        if let Warmup::Ratio(r) = self.warmup {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("warmup ratio must lie in [0, 1], got {r}"));
            }
        }
        Ok(())
    }

    pub fn smoothing_for(&self, n_labels: usize) -> f64 {
        self.label_smoothing
            .unwrap_or(if n_labels == 1 { 0.1 } else { 0.0 })
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        match self.warmup {
            Warmup::Ratio(r) => ((r * total_steps as f64).ceil() as usize).min(total_steps),
            Warmup::Steps(s) => s.min(total_steps),
        }
    }
}

/// Learning rate for optimizer step `step` (1-based): linear warmup to
/// `base` over `warmup` steps, then half-cosine decay to 0 at `total`.
pub fn learning_rate_at(step: usize, base: f64, warmup: usize, total: usize) -> f64 {
    if warmup > 0 && step <= warmup {
        return base * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return base;
    }
    let progress = ((step - warmup) as f64 / (total - warmup) as f64).min(1.0);
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightsUsed {
    None,
    Class(ClassWeights),
    Pos(PosWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub last_learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_macro_f1: Option<f64>,
    pub stopped_early: bool,
    pub optimizer_steps: usize,
    pub label_smoothing: f64,
    pub weights_used: WeightsUsed,
}

impl TrainReport {
    /// `epoch<TAB>train_loss<TAB>val_macro_f1<TAB>lr`, with a header line.
    pub fn write_history_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch\ttrain_loss\tval_macro_f1\tlearning_rate")?;
        for e in &self.history {
            writeln!(
                out,
                "{}\t{:.9}\t{:.9}\t{:.9e}",
                e.epoch, e.train_loss, e.val_macro_f1, e.last_learning_rate
            )?;
        }
        Ok(())
    }
}

pub fn featurize_dataset(ds: &Dataset, cfg: &FeaturizerConfig) -> Vec<Example> {
    ds.instances()
        .iter()
        .map(|inst| Example {
            x: featurize(&inst.text, cfg),
            y: inst.labels.clone(),
        })
        .collect()
}

fn loss_weights_for(
    train: &Dataset,
    mode: WeightingMode,
    cap: f64,
) -> Result<(LossWeights, WeightsUsed)> {
    let l = train.schema().len();
    Ok(match mode {
        WeightingMode::None => (LossWeights::uniform(l), WeightsUsed::None),
        WeightingMode::Balanced if l == 1 => {
            let pos = train.positive_counts()[0];
            let cw = class_weights(&[train.len() - pos, pos])?;
            (LossWeights::from_classes(&cw), WeightsUsed::Class(cw))
        }
        WeightingMode::Balanced => {
            let pw = pos_weights(&train.label_matrix(), cap)?;
            (LossWeights::from_pos(&pw), WeightsUsed::Pos(pw))
        }
    })
}

fn validation_score(model: &LinearModel, val: &[Example], mode: BinaryMode) -> Result<f64> {
    let pred: Vec<Vec<bool>> = val
        .iter()
        .map(|ex| {
            model
                .logits(&ex.x)
                .into_iter()
                .map(|z| sigmoid(z) >= 0.5)
                .collect()
        })
        .collect();
    let gold: Vec<Vec<bool>> = val.iter().map(|ex| ex.y.clone()).collect();
    Ok(task_macro_f1(&confusion(&pred, &gold)?, mode))
}

pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    tcfg: &TrainConfig,
    fcfg: &FeaturizerConfig,
    weighting: WeightingMode,
) -> Result<(LinearModel, TrainReport)> {
    tcfg.validate()?;
    fcfg.validate()?;
    if train_ds.schema() != val_ds.schema() {
        return Err(Error::Schema("train and validation schemas differ".into()));
    }
    if train_ds.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if val_ds.is_empty() {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let schema = train_ds.schema().clone();
    let l = schema.len();
    let smoothing = tcfg.smoothing_for(l);
    let (loss_weights, weights_used) = loss_weights_for(train_ds, weighting, tcfg.pos_weight_cap)?;

    let mut model = LinearModel::zeros(fcfg.clone(), schema);
    let mut report = TrainReport {
        history: Vec::new(),
        best_epoch: None,
        best_val_macro_f1: None,
        stopped_early: false,
        optimizer_steps: 0,
        label_smoothing: smoothing,
        weights_used,
    };
    if tcfg.max_epochs == 0 {
        return Ok((model, report));
    }

    let train_ex = featurize_dataset(train_ds, fcfg);
    let val_ex = featurize_dataset(val_ds, fcfg);
    let micro_per_epoch = train_ex.len().div_ceil(tcfg.batch_size);
    let steps_per_epoch = micro_per_epoch.div_ceil(tcfg.accumulation_steps);
    let total_steps = steps_per_epoch * tcfg.max_epochs;
    let warmup = tcfg.warmup_steps(total_steps);

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut best: Option<(f64, LinearModel)> = None;
    let mut since_best = 0;
    let mut step = 0;
    let mut lr = 0.0;
    let mut batch: Vec<Example> = Vec::with_capacity(tcfg.batch_size);

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_rows = 0usize;
        let mut acc = Gradient::zeros(l);
        let mut acc_micro = 0usize;

        let chunks: Vec<&[usize]> = order.chunks(tcfg.batch_size).collect();
        for (i, chunk) in chunks.iter().enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&r| train_ex[r].clone()));
            let (loss, grad) = loss_and_grad(&model, &batch, &loss_weights, smoothing, 0.0)?;
            epoch_loss += loss * chunk.len() as f64;
            epoch_rows += chunk.len();
            acc.add_scaled(&grad, 1.0);
            acc_micro += 1;

            if acc_micro == tcfg.accumulation_steps || i + 1 == chunks.len() {
                acc.scale(1.0 / acc_micro as f64);
                clip_grad_norm(&mut acc, tcfg.max_grad_norm);
                step += 1;
                lr = learning_rate_at(step, tcfg.learning_rate, warmup, total_steps);
                apply_update(&mut model, &acc, lr, tcfg.weight_decay)?;
                acc = Gradient::zeros(l);
                acc_micro = 0;
            }
        }

        let score = validation_score(&model, &val_ex, tcfg.binary_mode)?;
        report.history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / epoch_rows as f64,
            val_macro_f1: score,
            last_learning_rate: lr,
        });
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.clone()));
            report.best_epoch = Some(epoch);
            report.best_val_macro_f1 = Some(score);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                report.stopped_early = epoch < tcfg.max_epochs;
                break;
            }
        }
    }
    report.optimizer_steps = step;
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, report))
}

/// SGD step with decoupled weight decay on `W`.
fn apply_update(
    model: &mut LinearModel,
    grad: &Gradient,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let l = model.n_labels();
    if weight_decay != 0.0 {
        let keep = 1.0 - lr * weight_decay;
        model.weights.iter_mut().for_each(|w| *w *= keep);
    }
    for (&f, g) in &grad.rows {
        let row = &mut model.weights[f * l..(f + 1) * l];
        for (w, d) in row.iter_mut().zip(g) {
            *w -= lr * d;
        }
        if row.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("weights of feature {f} diverged")));
        }
    }
    for (b, d) in model.bias.iter_mut().zip(&grad.bias) {
        *b -= lr * d;
    }
    if model.bias.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("bias diverged".into()));
    }
    Ok(())
}

/// Probabilities for every instance of `ds`, rows in dataset order.
pub fn predict_proba(model: &LinearModel, ds: &Dataset) -> Result<ProbabilityMatrix> {
    if ds.schema() != &model.schema {
        return Err(Error::Schema(format!(
            "dataset labels {:?} differ from model labels {:?}",
            ds.schema().names(),
            model.schema.names()
        )));
    }
    let probs = ds
        .instances()
        .iter()
        .map(|inst| model.predict_one(&inst.text))
        .collect();
    let ids = ds.instances().iter().map(|i| i.id.clone()).collect();
    ProbabilityMatrix::new(ids, probs, model.schema.clone())
}
