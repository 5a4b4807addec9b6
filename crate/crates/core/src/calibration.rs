//! Per-label decision thresholds.
//!
//! Tuning runs in two stages on validation probabilities:
//!
//! 1. **Coarse global search** – one threshold shared by every label, chosen
//!    from `{0.20, 0.25, …, 0.80}` to maximize macro-F1.
//! 2. **Per-label refinement** – each label in schema order sweeps its own
//!    threshold over `[max(0.1, θ*−0.15), min(0.9, θ*+0.15)]` in 0.01 steps
//!    while the other thresholds stay at their current values.
//!
//! Every candidate is built as an integer multiple of the step, so 0.35 is
//! always `35.0 / 100.0` and never an accumulated sum. Ties go to the
//! smallest threshold. Predictions are positive when `p >= θ`.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::corpus::LabelSchema;
use crate::error::{Error, Result};
use crate::metrics::{macro_f1, ConfusionCounts, LabelCounts};

const LABELS_HEADER: &str = "#labels";

/// N×L positive-class probabilities keyed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    pub ids: Vec<String>,
    pub probs: Vec<Vec<f64>>,
    pub schema: LabelSchema,
}

impl ProbabilityMatrix {
    pub fn new(ids: Vec<String>, probs: Vec<Vec<f64>>, schema: LabelSchema) -> Result<Self> {
        if ids.len() != probs.len() {
            return Err(Error::Shape(format!(
                "{} ids vs {} probability rows",
                ids.len(),
                probs.len()
            )));
        }
        for (id, row) in ids.iter().zip(&probs) {
            if row.len() != schema.len() {
                return Err(Error::Shape(format!(
                    "row '{id}' has {} probabilities, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::NonFinite(format!(
                    "probability {p} for '{id}' is outside [0, 1]"
                )));
            }
        }
        Ok(Self { ids, probs, schema })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.len()
    }

    pub fn column(&self, label: usize) -> impl Iterator<Item = f64> + '_ {
        self.probs.iter().map(move |r| r[label])
    }

    /// A `#labels<TAB>name…` header, then one line per row:
    /// `id<TAB>p_1<TAB>…<TAB>p_L` with 17 significant digits.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{LABELS_HEADER}\t{}", self.schema.names().join("\t"))?;
        for (id, row) in self.ids.iter().zip(&self.probs) {
            out.write_all(id.as_bytes())?;
            for p in row {
                write!(out, "\t{p:.16e}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses [`write_tsv`](Self::write_tsv) output. Blank lines and other
    /// lines starting with `#` are ignored. The label set comes from the
    /// header when `schema` is `None`; when both exist they must agree.
    pub fn read_tsv<R: BufRead>(reader: R, schema: Option<&LabelSchema>) -> Result<Self> {
        let mut header: Option<LabelSchema> = None;
        let mut ids = Vec::new();
        let mut probs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if let Some(rest) = line.strip_prefix(LABELS_HEADER) {
                let names = rest.strip_prefix('\t').unwrap_or(rest).split('\t');
                header = Some(LabelSchema::new(names).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad probability '{f}'"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            ids.push((lineno, id));
            probs.push(row);
        }
        let schema = match (schema, header) {
            (Some(s), Some(h)) if *s != h => {
                return Err(Error::Schema(format!(
                    "probability file labels {:?} differ from {:?}",
                    h.names(),
                    s.names()
                )))
            }
            (Some(s), _) => s.clone(),
            (None, Some(h)) => h,
            (None, None) => {
                return Err(Error::Schema(
                    "probability file has no label header; give the labels explicitly".into(),
                ))
            }
        };
        for ((lineno, _), row) in ids.iter().zip(&probs) {
            if row.len() != schema.len() {
                return Err(Error::Parse {
                    line: *lineno,
                    message: format!(
                        "expected {} probabilities, found {}",
                        schema.len(),
                        row.len()
                    ),
                });
            }
        }
        let ids = ids.into_iter().map(|(_, id)| id).collect();
        Self::new(ids, probs, schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Default,
    CoarseOnly,
    Tuned,
    Oracle,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Default => "default",
            Provenance::CoarseOnly => "coarse_only",
            Provenance::Tuned => "tuned",
            Provenance::Oracle => "oracle",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "default" => Provenance::Default,
            "coarse_only" => Provenance::CoarseOnly,
            "tuned" => Provenance::Tuned,
            "oracle" => Provenance::Oracle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdVector {
    pub theta: Vec<f64>,
    pub base_theta: f64,
    pub provenance: Provenance,
}

impl ThresholdVector {
    pub fn uniform(n_labels: usize, theta: f64) -> Self {
        Self {
            theta: vec![theta; n_labels],
            base_theta: theta,
            provenance: Provenance::Default,
        }
    }

    /// Writes `__provenance__`, `__base__` and one `name<TAB>threshold` line
    /// per label, thresholds with 6 decimals.
    pub fn write_tsv<W: Write>(&self, schema: &LabelSchema, mut out: W) -> std::io::Result<()> {
        writeln!(out, "__provenance__\t{}", self.provenance.as_str())?;
        writeln!(out, "__base__\t{:.6}", self.base_theta)?;
        for (name, t) in schema.names().iter().zip(&self.theta) {
            writeln!(out, "{name}\t{t:.6}")?;
        }
        Ok(())
    }

    /// Reads a thresholds file; every schema label must appear exactly once.
    pub fn read_tsv<R: BufRead>(reader: R, schema: &LabelSchema) -> Result<Self> {
        let mut provenance = None;
        let mut base = None;
        let mut theta: Vec<Option<f64>> = vec![None; schema.len()];
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let bad = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected <name>TAB<value>".into()))?;
            if key == "__provenance__" {
                provenance = Some(
                    Provenance::parse(value.trim())
                        .ok_or_else(|| bad(format!("unknown provenance '{value}'")))?,
                );
                continue;
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad threshold '{value}'")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("threshold {v} outside [0, 1]")));
            }
            if key == "__base__" {
                base = Some(v);
                continue;
            }
            let i = schema.index_of(key).ok_or_else(|| Error::UnknownLabel {
                name: key.to_string(),
                line: lineno,
            })?;
            if theta[i].replace(v).is_some() {
                return Err(bad(format!("label '{key}' listed twice")));
            }
        }
        let theta = theta
            .into_iter()
            .zip(schema.names())
            .map(|(t, name)| {
                t.ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("no threshold for label '{name}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            base_theta: base.unwrap_or(0.5),
            provenance: provenance.unwrap_or(Provenance::Default),
            theta,
        })
    }
}

/// Candidate thresholds, in integer units of `1 / resolution`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub resolution: u32,
    /// Stage-1 grid (ascending).
    pub coarse: Vec<u32>,
    /// Stage-2 step.
    pub fine_step: u32,
    pub window_halfwidth: u32,
    pub window_clamp: (u32, u32),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 100,
            coarse: (20..=80).step_by(5).collect(),
            fine_step: 1,
            window_halfwidth: 15,
            window_clamp: (10, 90),
        }
    }
}

impl GridSpec {
    fn value(&self, units: u32) -> f64 {
        f64::from(units) / f64::from(self.resolution)
    }

    pub fn coarse_values(&self) -> Vec<f64> {
        self.coarse.iter().map(|&u| self.value(u)).collect()
    }

    /// Clamped refinement window `[lo, hi]` around `base`.
    pub fn window(&self, base: f64) -> (f64, f64) {
        let half = self.value(self.window_halfwidth);
        let lo = (base - half).max(self.value(self.window_clamp.0));
        let hi = (base + half).min(self.value(self.window_clamp.1));
        (lo, hi)
    }

    /// Multiples of the fine step inside the window, endpoints included.
    pub fn fine_values(&self, base: f64) -> Vec<f64> {
        let (lo, hi) = self.window(base);
        let res = f64::from(self.resolution);
        let first = (lo * res - 1e-9).ceil().max(0.0) as u32;
        let last = (hi * res + 1e-9).floor().max(0.0) as u32;
        let step = self.fine_step.max(1);
        let first = first.div_ceil(step) * step;
        (first..=last)
            .step_by(step as usize)
            .map(|u| self.value(u))
            .collect()
    }
}

/// Binarizes: 1 iff `p >= θ_label`.
pub fn apply_thresholds(pm: &ProbabilityMatrix, tv: &ThresholdVector) -> Result<Vec<Vec<bool>>> {
    if tv.theta.len() != pm.width() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} labels",
            tv.theta.len(),
            pm.width()
        )));
    }
    Ok(pm
        .probs
        .iter()
        .map(|row| row.iter().zip(&tv.theta).map(|(p, t)| p >= t).collect())
        .collect())
}

fn check_gold(pm: &ProbabilityMatrix, gold: &[Vec<bool>]) -> Result<()> {
    if gold.len() != pm.len() {
        return Err(Error::Shape(format!(
            "{} gold rows vs {} probability rows",
            gold.len(),
            pm.len()
        )));
    }
    if pm.is_empty() {
        return Err(Error::InsufficientData("no rows to tune on".into()));
    }
    if let Some(r) = gold.iter().position(|g| g.len() != pm.width()) {
        return Err(Error::Shape(format!(
            "gold row {r} has {} labels, expected {}",
            gold[r].len(),
            pm.width()
        )));
    }
    Ok(())
}

/// Confusion counts for one label at one threshold.
fn label_counts(
    pm: &ProbabilityMatrix,
    gold: &[Vec<bool>],
    label: usize,
    theta: f64,
) -> LabelCounts {
    let mut c = LabelCounts::default();
    for (row, g) in pm.probs.iter().zip(gold) {
        match (row[label] >= theta, g[label]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Macro-F1 with every label at its own threshold.
pub fn macro_f1_at(pm: &ProbabilityMatrix, gold: &[Vec<bool>], theta: &[f64]) -> f64 {
    let labels = (0..pm.width())
        .map(|l| label_counts(pm, gold, l, theta[l]))
        .collect();
    macro_f1(&ConfusionCounts { labels })
}

/// Stage 1: the grid value maximizing macro-F1 with all labels sharing it.
pub fn coarse_search(pm: &ProbabilityMatrix, gold: &[Vec<bool>], grid: &GridSpec) -> Result<f64> {
    check_gold(pm, gold)?;
    let mut best: Option<(f64, f64)> = None;
    for theta in grid.coarse_values() {
        let score = macro_f1_at(pm, gold, &vec![theta; pm.width()]);
        // Grid is ascending, so a strict comparison keeps the smallest θ on ties.
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((theta, score));
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::Config("empty coarse grid".into()))
}

/// How stage 2 treats the thresholds of the other labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Each sweep sees the already refined values of earlier labels.
    #[default]
    Sequential,
    /// Every sweep within a pass sees the thresholds from the start of the pass.
    Independent,
}

impl std::str::FromStr for RefineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(RefineMode::Sequential),
            "independent" => Ok(RefineMode::Independent),
            other => Err(Error::Config(format!(
                "unknown refine mode '{other}' (expected sequential or independent)"
            ))),
        }
    }
}

impl std::fmt::Display for RefineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RefineMode::Sequential => "sequential",
            RefineMode::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TuneOptions {
    pub grid: GridSpec,
    pub passes: usize,
    pub mode: RefineMode,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            passes: 1,
            mode: RefineMode::Sequential,
        }
    }
}

/// Stage 2, single sequential pass.
pub fn refine_per_label(
    pm: &ProbabilityMatrix,
    gold: &[Vec<bool>],
    base: f64,
    grid: &GridSpec,
) -> Result<ThresholdVector> {
    let opts = TuneOptions {
        grid: grid.clone(),
        ..Default::default()
    };
    refine_with(pm, gold, base, &opts)
}

pub fn refine_with(
    pm: &ProbabilityMatrix,
    gold: &[Vec<bool>],
    base: f64,
    opts: &TuneOptions,
) -> Result<ThresholdVector> {
    check_gold(pm, gold)?;
    if !(0.0..=1.0).contains(&base) {
        return Err(Error::Config(format!(
            "base threshold {base} outside [0, 1]"
        )));
    }
    let width = pm.width();
    let candidates = opts.grid.fine_values(base);
    let mut theta = vec![base; width];
    let mut counts: Vec<LabelCounts> = (0..width)
        .map(|l| label_counts(pm, gold, l, base))
        .collect();

    for _ in 0..opts.passes.max(1) {
        let frozen = counts.clone();
        let mut next_theta = theta.clone();
        let mut next_counts = counts.clone();
        for label in 0..width {
            let mut view = match opts.mode {
                RefineMode::Sequential => counts.clone(),
                RefineMode::Independent => frozen.clone(),
            };
            let mut best: Option<(f64, f64, LabelCounts)> = None;
            for &t in &candidates {
                view[label] = label_counts(pm, gold, label, t);
                let score = macro_f1(&ConfusionCounts {
                    labels: view.clone(),
                });
                if best.is_none_or(|(_, s, _)| score > s) {
                    best = Some((t, score, view[label]));
                }
            }
            if let Some((t, _, c)) = best {
                match opts.mode {
                    RefineMode::Sequential => {
                        theta[label] = t;
                        counts[label] = c;
                    }
                    RefineMode::Independent => {
                        next_theta[label] = t;
                        next_counts[label] = c;
                    }
                }
            }
        }
        if opts.mode == RefineMode::Independent {
            theta = next_theta;
            counts = next_counts;
        }
    }

    Ok(ThresholdVector {
        theta,
        base_theta: base,
        provenance: Provenance::Tuned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub thresholds: ThresholdVector,
    /// Macro-F1 with every label at 0.5.
    pub default_macro_f1: f64,
    /// Macro-F1 with every label at the stage-1 value.
    pub base_macro_f1: f64,
    pub tuned_macro_f1: f64,
}

/// Coarse search followed by one sequential refinement pass.
pub fn tune(pm: &ProbabilityMatrix, gold: &[Vec<bool>]) -> Result<ThresholdVector> {
    Ok(tune_with(pm, gold, &TuneOptions::default())?.thresholds)
}

pub fn tune_with(
    pm: &ProbabilityMatrix,
    gold: &[Vec<bool>],
    opts: &TuneOptions,
) -> Result<TuneOutcome> {
    let base = coarse_search(pm, gold, &opts.grid)?;
    let thresholds = refine_with(pm, gold, base, opts)?;
    let width = pm.width();
    Ok(TuneOutcome {
        default_macro_f1: macro_f1_at(pm, gold, &vec![0.5; width]),
        base_macro_f1: macro_f1_at(pm, gold, &vec![base; width]),
        tuned_macro_f1: macro_f1_at(pm, gold, &thresholds.theta),
        thresholds,
    })
}

pub const ORACLE_MAX_ROWS: usize = 200;
pub const ORACLE_MAX_LABELS: usize = 4;

/// Exhaustive optimum of macro-F1 over unrestricted per-label thresholds.
///
/// Per-label F1 depends only on that label's threshold, so each label is
/// optimized on its own over 0, 1 and every midpoint between consecutive
/// distinct probabilities. Only small inputs are accepted.
pub fn oracle_best_thresholds(
    pm: &ProbabilityMatrix,
    gold: &[Vec<bool>],
) -> Result<(ThresholdVector, f64)> {
    check_gold(pm, gold)?;
    if pm.len() > ORACLE_MAX_ROWS || pm.width() > ORACLE_MAX_LABELS {
        return Err(Error::Config(format!(
            "oracle limited to {ORACLE_MAX_ROWS} rows and {ORACLE_MAX_LABELS} labels, got {}×{}",
            pm.len(),
            pm.width()
        )));
    }
    let mut theta = Vec::with_capacity(pm.width());
    for label in 0..pm.width() {
        let mut distinct: Vec<f64> = pm.column(label).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut candidates = vec![0.0];
        candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        candidates.push(1.0);

        let mut best = (0.0, f64::NEG_INFINITY);
        for t in candidates {
            let f1 = label_counts(pm, gold, label, t).f1();
            if f1 > best.1 {
                best = (t, f1);
            }
        }
        theta.push(best.0);
    }
    let score = macro_f1_at(pm, gold, &theta);
    Ok((
        ThresholdVector {
            theta,
            base_theta: 0.5,
            provenance: Provenance::Oracle,
        },
        score,
    ))
}
