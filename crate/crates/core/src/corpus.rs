//! Dataset ingestion, social-media text normalization and corpus statistics.
//!
//! Records are read from JSONL files, one object per line:
//!
//! ```text
//! {"id": "eng_001", "text": "...", "label": 1}
//! {"id": "eng_002", "text": "...", "labels": ["political", "religious"]}
//! {"id": "eng_003", "text": "...", "labels": [1, 0, 1, 0, 0]}
//! ```
//!
//! Every record's text goes through [`Preprocessor::apply`] followed by
//! [`truncate`]; the original text is kept alongside as `raw_text`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

const BUNDLED_EMOJI_TABLE: &str = include_str!("../data/emoji.tsv");

/// Ordered label names. One label means the binary task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSchema {
    names: Vec<String>,
}

impl LabelSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Schema("at least one label is required".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Schema("empty label name".into()));
            }
            if name.contains(['\t', '\n', '\r']) {
                return Err(Error::Schema(format!(
                    "label name {name:?} contains a tab or newline"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate label name '{name}'")));
            }
        }
        Ok(Self { names })
    }

    /// Named label sets of the three polarization subtasks.
    pub fn preset(name: &str) -> Option<Self> {
        let names: &[&str] = match name {
            "subtask1" => &["polarization"],
            "subtask2" => &[
                "political",
                "racial/ethnic",
                "religious",
                "gender/sexual",
                "other",
            ],
            "subtask3" => &[
                "stereotype",
                "vilification",
                "dehumanization",
                "extreme_language",
                "lack_of_empathy",
                "invalidation",
            ],
            _ => return None,
        };
        Some(Self::new(names.iter().copied()).expect("preset schemas are valid"))
    }

    /// Parses a comma-separated list of label names.
    pub fn from_csv(list: &str) -> Result<Self> {
        Self::new(list.split(',').map(str::trim))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.names.len() == 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub raw_text: String,
    pub text: String,
    pub labels: Vec<bool>,
}

impl Instance {
    pub fn cardinality(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: LabelSchema,
    instances: Vec<Instance>,
}

impl Dataset {
    /// Builds a dataset, checking label widths and id uniqueness.
    pub fn new(schema: LabelSchema, instances: Vec<Instance>) -> Result<Self> {
        let width = schema.len();
        let mut ids = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.labels.len() != width {
                return Err(Error::Shape(format!(
                    "instance '{}' has {} labels, schema has {}",
                    inst.id,
                    inst.labels.len(),
                    width
                )));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Self { schema, instances })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.id.as_str()).collect()
    }

    /// Row-major N×L gold label matrix.
    pub fn label_matrix(&self) -> Vec<Vec<bool>> {
        self.instances.iter().map(|i| i.labels.clone()).collect()
    }

    /// Positive count per label.
    pub fn positive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.len()];
        for inst in &self.instances {
            for (c, &b) in counts.iter_mut().zip(&inst.labels) {
                *c += usize::from(b);
            }
        }
        counts
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            instances: rows.iter().map(|&r| self.instances[r].clone()).collect(),
        }
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    /// Parses JSONL records. Blank lines are skipped but still counted.
    pub fn from_jsonl<R: BufRead>(
        reader: R,
        schema: LabelSchema,
        pre: &Preprocessor,
    ) -> Result<Self> {
        let mut instances = Vec::new();
        let mut ids = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let inst = parse_record(&line, lineno, &schema, pre)?;
            if !ids.insert(inst.id.clone()) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate id '{}'", inst.id),
                });
            }
            instances.push(inst);
        }
        Ok(Self { schema, instances })
    }

    /// Writes one JSON object per instance with the raw text, so the output
    /// can be loaded again with [`load_dataset`].
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            let labels = if self.schema.is_binary() {
                ("label", Value::from(u8::from(inst.labels[0])))
            } else {
                (
                    "labels",
                    Value::from(inst.labels.iter().map(|&b| u8::from(b)).collect::<Vec<_>>()),
                )
            };
            let mut obj = serde_json::Map::new();
            obj.insert("id".into(), Value::from(inst.id.as_str()));
            obj.insert("text".into(), Value::from(inst.raw_text.as_str()));
            obj.insert(labels.0.into(), labels.1);
            serde_json::to_writer(&mut out, &obj)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a JSONL dataset file, preprocessing every text.
pub fn load_dataset(path: &Path, schema: &LabelSchema, pre: &Preprocessor) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_jsonl(BufReader::new(file), schema.clone(), pre)
}

fn parse_record(
    line: &str,
    lineno: usize,
    schema: &LabelSchema,
    pre: &Preprocessor,
) -> Result<Instance> {
    let bad = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| bad(format!("malformed record: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| bad("record is not a JSON object".into()))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string field 'id'".into()))?;
    let raw = obj
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string field 'text'".into()))?;

    let width = schema.len();
    let labels = match (obj.get("label"), obj.get("labels")) {
        (Some(_), Some(_)) => return Err(bad("both 'label' and 'labels' present".into())),
        (Some(v), None) => {
            if width != 1 {
                return Err(bad(format!(
                    "scalar 'label' requires a one-label schema, schema has {width}"
                )));
            }
            vec![parse_bit(v).ok_or_else(|| bad(format!("'label' must be 0 or 1, got {v}")))?]
        }
        (None, Some(Value::Array(items))) => {
            if items.iter().all(Value::is_string) {
                let mut bits = vec![false; width];
                for item in items {
                    let name = item.as_str().unwrap_or_default();
                    let idx = schema.index_of(name).ok_or_else(|| Error::UnknownLabel {
                        name: name.to_string(),
                        line: lineno,
                    })?;
                    bits[idx] = true;
                }
                bits
            } else {
                if items.len() != width {
                    return Err(bad(format!(
                        "'labels' vector has {} entries, schema has {width}",
                        items.len()
                    )));
                }
                items
                    .iter()
                    .map(|v| {
                        parse_bit(v).ok_or_else(|| {
                            bad(format!("'labels' entries must be 0/1 or names, got {v}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        }
        (None, Some(v)) => return Err(bad(format!("'labels' must be an array, got {v}"))),
        (None, None) => return Err(bad("missing 'label' or 'labels'".into())),
    };

    Ok(Instance {
        id: id.to_string(),
        raw_text: raw.to_string(),
        text: pre.process(raw),
        labels,
    })
}

fn parse_bit(v: &Value) -> Option<bool> {
    match v.as_u64() {
        Some(0) => Some(false),
        Some(1) => Some(true),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreprocessConfig {
    pub demojize: bool,
    /// Overrides the bundled emoji name table.
    pub emoji_table_path: Option<PathBuf>,
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub strip_hashtag_symbol: bool,
    pub lowercase: bool,
    pub max_tokens: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            demojize: true,
            emoji_table_path: None,
            strip_urls: true,
            strip_mentions: true,
            strip_hashtag_symbol: true,
            lowercase: true,
            max_tokens: 128,
        }
    }
}

/// Maps emoji code point sequences to their lowercase names.
///
/// Lookups ignore U+FE0F (emoji presentation selector); keys are stored
/// without it.
#[derive(Debug, Clone)]
pub struct EmojiTable {
    names: HashMap<String, String>,
    max_chars: usize,
}

impl EmojiTable {
    /// Table compiled into the library.
    pub fn bundled() -> Arc<EmojiTable> {
        static TABLE: OnceLock<Arc<EmojiTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| {
                Arc::new(EmojiTable::parse(BUNDLED_EMOJI_TABLE).expect("bundled emoji table"))
            })
            .clone()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `U+1F60A<TAB>smiling face with smiling eyes` lines. Multi-code
    /// point sequences list their code points separated by spaces.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = HashMap::new();
        let mut max_chars = 0;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (seq, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: lineno,
                message: "expected <codepoints>TAB<name>".into(),
            })?;
            let mut key = String::new();
            for cp in seq.split_whitespace() {
                let hex = cp
                    .strip_prefix("U+")
                    .or_else(|| cp.strip_prefix("u+"))
                    .unwrap_or(cp);
                let ch = u32::from_str_radix(hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("bad code point '{cp}'"),
                    })?;
                if ch != '\u{FE0F}' {
                    key.push(ch);
                }
            }
            if key.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "empty code point sequence".into(),
                });
            }
            let name = name
                .replace('_', " ")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            max_chars = max_chars.max(key.chars().count());
            names.insert(key, name);
        }
        Ok(Self { names, max_chars })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, seq: &str) -> Option<&str> {
        self.names.get(seq).map(String::as_str)
    }

    /// Replaces every known emoji with ` name ` and deletes emoji code points
    /// the table does not know.
    pub fn demojize(&self, text: &str) -> String {
        let chars: Vec<char> = text.chars().filter(|&c| c != '\u{FE0F}').collect();
        let mut out = String::with_capacity(text.len());
        let mut key = String::new();
        let mut i = 0;
        while i < chars.len() {
            let longest = self.max_chars.min(chars.len() - i);
            let mut matched = None;
            for len in (1..=longest).rev() {
                key.clear();
                key.extend(&chars[i..i + len]);
                if let Some(name) = self.names.get(&key) {
                    matched = Some((len, name));
                    break;
                }
            }
            match matched {
                Some((len, name)) => {
                    out.push(' ');
                    out.push_str(name);
                    out.push(' ');
                    i += len;
                }
                None => {
                    if !is_emoji_codepoint(chars[i]) {
                        out.push(chars[i]);
                    }
                    i += 1;
                }
            }
        }
        out
    }
}

/// Code points treated as emoji material when no table entry matches.
fn is_emoji_codepoint(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x200D
        | 0xFE0E..=0xFE0F
        | 0x20E3
        | 0xE0020..=0xE007F)
}

/// Text normalizer: demojize, strip URLs, mentions and `#`, lowercase,
/// collapse whitespace.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cfg: PreprocessConfig,
    emoji: Arc<EmojiTable>,
}

impl Preprocessor {
    pub fn new(cfg: PreprocessConfig) -> Result<Self> {
        if cfg.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        let emoji = match &cfg.emoji_table_path {
            Some(path) => Arc::new(EmojiTable::load(path)?),
            None => EmojiTable::bundled(),
        };
        Ok(Self { cfg, emoji })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.cfg
    }

    /// Normalizes and truncates to `max_tokens`.
    pub fn process(&self, raw: &str) -> String {
        truncate(&self.apply(raw), self.cfg.max_tokens)
    }

    /// Normalization without truncation.
    pub fn apply(&self, raw: &str) -> String {
        let cfg = &self.cfg;
        let text = if cfg.demojize {
            self.emoji.demojize(raw)
        } else {
            raw.to_string()
        };
        let text = if cfg.lowercase {
            text.to_lowercase()
        } else {
            text
        };
        let mut tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        // Deleting '#' can expose a URL or mention ("#@user"), so the token
        // filters run until nothing changes.
        loop {
            let before = tokens.len();
            tokens.retain(|t| {
                !(cfg.strip_urls && is_url_token(t) || cfg.strip_mentions && t.starts_with('@'))
            });
            let mut changed = tokens.len() != before;
            if cfg.strip_hashtag_symbol {
                for t in tokens.iter_mut() {
                    if t.contains('#') {
                        t.retain(|c| c != '#');
                        changed = true;
                    }
                }
                tokens.retain(|t| !t.is_empty());
            }
            if !changed {
                break;
            }
        }
        tokens.join(" ")
    }
}

fn is_url_token(token: &str) -> bool {
    let head: String = token
        .chars()
        .take(8)
        .collect::<String>()
        .to_ascii_lowercase();
    head.starts_with("http://") || head.starts_with("https://") || head.starts_with("www.")
}

/// Normalizes `raw` with the bundled emoji table. Use [`Preprocessor`] to
/// honor `emoji_table_path`.
pub fn preprocess(raw: &str, cfg: &PreprocessConfig) -> String {
    let pre = Preprocessor {
        cfg: cfg.clone(),
        emoji: EmojiTable::bundled(),
    };
    pre.apply(raw)
}

/// Keeps at most `max_tokens` whitespace tokens, joined by single spaces.
pub fn truncate(text: &str, max_tokens: usize) -> String {
    text.split_whitespace()
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ")
}

/// n_neg / n_pos for one label; `Infinite` when the label has no positives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImbalanceRatio {
    Finite(f64),
    Infinite,
}

impl ImbalanceRatio {
    pub fn value(self) -> f64 {
        match self {
            ImbalanceRatio::Finite(v) => v,
            ImbalanceRatio::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for ImbalanceRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImbalanceRatio::Finite(v) => write!(f, "{v:.4}"),
            ImbalanceRatio::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ImbalanceRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ImbalanceRatio::Finite(v) => s.serialize_f64(*v),
            ImbalanceRatio::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub labels: Vec<String>,
    pub n_instances: usize,
    pub per_label_positive: Vec<usize>,
    pub per_label_positive_pct: Vec<f64>,
    pub imbalance_ratio_per_label: Vec<ImbalanceRatio>,
    pub all_zero_rows: usize,
    /// Number of active labels → number of instances.
    pub label_cardinality_histogram: BTreeMap<usize, usize>,
}

pub fn summarize(ds: &Dataset) -> Result<CorpusStats> {
    if ds.is_empty() {
        return Err(Error::InsufficientData(
            "cannot summarize an empty dataset".into(),
        ));
    }
    let n = ds.len();
    let positives = ds.positive_counts();
    let mut histogram = BTreeMap::new();
    for inst in ds.instances() {
        *histogram.entry(inst.cardinality()).or_insert(0) += 1;
    }
    Ok(CorpusStats {
        labels: ds.schema().names().to_vec(),
        n_instances: n,
        per_label_positive_pct: positives.iter().map(|&p| p as f64 / n as f64).collect(),
        imbalance_ratio_per_label: positives
            .iter()
            .map(|&p| match p {
                0 => ImbalanceRatio::Infinite,
                p => ImbalanceRatio::Finite((n - p) as f64 / p as f64),
            })
            .collect(),
        all_zero_rows: histogram.get(&0).copied().unwrap_or(0),
        per_label_positive: positives,
        label_cardinality_histogram: histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn pre() -> Preprocessor {
        Preprocessor::new(cfg()).unwrap()
    }

    #[test]
    fn preprocess_social_media_post() {
        assert_eq!(
            preprocess("@user check https://t.co/ab #Hope  NOW", &cfg()),
            "check hope now"
        );
    }

    #[test]
    fn demojize_uses_table_name() {
        assert_eq!(
            preprocess("good 😊", &cfg()),
            "good smiling face with smiling eyes"
        );
        assert_eq!(preprocess("", &cfg()), "");
    }

    #[test]
    fn emoji_variation_selector_and_zwj_sequences() {
        assert_eq!(preprocess("❤️", &cfg()), "red heart");
        assert_eq!(preprocess("❤", &cfg()), "red heart");
        assert_eq!(preprocess("pride🏳️‍🌈flag", &cfg()), "pride rainbow flag flag");
    }

    #[test]
    fn unknown_emoji_is_deleted() {
        let table = EmojiTable::parse("U+1F60A\tsmiling face with smiling eyes\n").unwrap();
        assert_eq!(
            table.demojize("a😂b😊"),
            "ab smiling face with smiling eyes "
        );
    }

    #[test]
    fn emoji_table_parsing_rejects_garbage() {
        assert!(EmojiTable::parse("U+1F60A smiling\n").is_err());
        assert!(EmojiTable::parse("U+ZZZZ\tx\n").is_err());
        let t = EmojiTable::parse("# comment\n\nU+1F44D\tThumbs_Up\n").unwrap();
        assert_eq!(t.name("👍"), Some("thumbs up"));
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn hashtag_exposing_mention_is_removed() {
        assert_eq!(preprocess("a #@b #www.x.com c", &cfg()), "a c");
        assert_eq!(preprocess("HTTPS://Example.com Hi", &cfg()), "hi");
    }

    #[test]
    fn disabled_steps_are_skipped() {
        let c = PreprocessConfig {
            demojize: false,
            strip_urls: false,
            strip_mentions: false,
            strip_hashtag_symbol: false,
            lowercase: false,
            ..cfg()
        };
        assert_eq!(preprocess(" @A  #B http://x 😊 ", &c), "@A #B http://x 😊");
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate("a b c", 2), "a b");
        assert_eq!(truncate("a b", 128), "a b");
        assert_eq!(truncate("", 128), "");
    }

    #[test]
    fn zero_max_tokens_is_rejected() {
        let c = PreprocessConfig {
            max_tokens: 0,
            ..cfg()
        };
        assert!(Preprocessor::new(c).is_err());
    }

    fn subtask2() -> LabelSchema {
        LabelSchema::preset("subtask2").unwrap()
    }

    #[test]
    fn load_scalar_label() {
        let schema = LabelSchema::new(["polarized"]).unwrap();
        let ds = Dataset::from_jsonl(
            r#"{"id":"a","text":"hi","label":1}"#.as_bytes(),
            schema,
            &pre(),
        )
        .unwrap();
        assert_eq!(ds.instances()[0].labels, vec![true]);
        assert_eq!(ds.instances()[0].raw_text, "hi");
    }

    #[test]
    fn load_label_names_in_schema_order() {
        let line = r#"{"id":"b","text":"x","labels":["political","religious"]}"#;
        let ds = Dataset::from_jsonl(line.as_bytes(), subtask2(), &pre()).unwrap();
        assert_eq!(
            ds.instances()[0].labels,
            vec![true, false, true, false, false]
        );
    }

    #[test]
    fn load_label_vector() {
        let line = r#"{"id":"b","text":"x","labels":[0,1,0,0,1]}"#;
        let ds = Dataset::from_jsonl(line.as_bytes(), subtask2(), &pre()).unwrap();
        assert_eq!(
            ds.instances()[0].labels,
            vec![false, true, false, false, true]
        );
    }

    #[test]
    fn unknown_label_names_line() {
        let text = "{\"id\":\"a\",\"text\":\"x\",\"labels\":[]}\n{\"id\":\"b\",\"text\":\"x\",\"labels\":[\"politcal\"]}\n";
        let err = Dataset::from_jsonl(text.as_bytes(), subtask2(), &pre()).unwrap_err();
        assert_eq!(err.to_string(), "unknown label 'politcal' at line 2");
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        let schema = LabelSchema::new(["p"]).unwrap();
        let err = Dataset::from_jsonl("\n{oops\n".as_bytes(), schema.clone(), &pre()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let dup = "{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{\"id\":\"a\",\"text\":\"y\",\"label\":1}\n";
        let err = Dataset::from_jsonl(dup.as_bytes(), schema.clone(), &pre()).unwrap_err();
        assert!(err.to_string().contains("duplicate id 'a'"), "{err}");

        let bad = "{\"id\":\"a\",\"text\":\"x\",\"label\":2}\n";
        assert!(Dataset::from_jsonl(bad.as_bytes(), schema, &pre()).is_err());

        let short = "{\"id\":\"a\",\"text\":\"x\",\"labels\":[0,1]}\n";
        assert!(Dataset::from_jsonl(short.as_bytes(), subtask2(), &pre()).is_err());
    }

    #[test]
    fn jsonl_round_trip_keeps_raw_text() {
        let line = r#"{"id":"b","text":"Hello @x 😊","labels":["other"]}"#;
        let ds = Dataset::from_jsonl(line.as_bytes(), subtask2(), &pre()).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let again = Dataset::from_jsonl(buf.as_slice(), subtask2(), &pre()).unwrap();
        assert_eq!(ds, again);
        assert_eq!(
            again.instances()[0].text,
            "hello smiling face with smiling eyes"
        );
    }

    #[test]
    fn schema_validation() {
        assert!(LabelSchema::new(Vec::<String>::new()).is_err());
        assert!(LabelSchema::new(["a", "a"]).is_err());
        assert!(LabelSchema::new(["a\tb"]).is_err());
        assert!(LabelSchema::new([""]).is_err());
        assert_eq!(LabelSchema::preset("subtask3").unwrap().len(), 6);
        assert!(LabelSchema::preset("subtask1").unwrap().is_binary());
        assert_eq!(LabelSchema::from_csv("a, b").unwrap().names(), ["a", "b"]);
    }

    fn toy(labels: &[&[bool]]) -> Dataset {
        let schema = LabelSchema::new((0..labels[0].len()).map(|i| format!("l{i}"))).unwrap();
        let instances = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Instance {
                id: format!("i{i}"),
                raw_text: String::new(),
                text: String::new(),
                labels: l.to_vec(),
            })
            .collect();
        Dataset::new(schema, instances).unwrap()
    }

    #[test]
    fn summarize_single_label() {
        let ds = toy(&[&[true], &[false], &[false], &[false]]);
        let stats = summarize(&ds).unwrap();
        assert_eq!(stats.per_label_positive_pct, vec![0.25]);
        assert_eq!(
            stats.imbalance_ratio_per_label,
            vec![ImbalanceRatio::Finite(3.0)]
        );
        assert_eq!(stats.all_zero_rows, 3);
    }

    #[test]
    fn summarize_zero_positive_label_is_infinite() {
        let ds = toy(&[&[true, false], &[true, false], &[false, false]]);
        let stats = summarize(&ds).unwrap();
        assert_eq!(stats.imbalance_ratio_per_label[1], ImbalanceRatio::Infinite);
        assert_eq!(stats.label_cardinality_histogram.values().sum::<usize>(), 3);
        let json = serde_json::to_string(&stats).unwrap();
        assert!(json.contains("\"inf\""), "{json}");
    }

    #[test]
    fn summarize_empty_is_error() {
        let ds = Dataset::new(LabelSchema::new(["a"]).unwrap(), vec![]).unwrap();
        assert!(summarize(&ds).is_err());
    }
}
