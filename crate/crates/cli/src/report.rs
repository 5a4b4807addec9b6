//! Plain-text reports. Tables are tab-separated and print four decimals.

use std::fmt::Write;

use polarcal::{
    BinaryMode, CorpusStats, Dataset, LabelSchema, MetricsReport, SplitResult, TrainReport,
    TuneOutcome,
};

pub fn stats_table(s: &CorpusStats) -> String {
    let mut t = String::from("label\tpositives\tpositive_rate\timbalance_ratio\n");
    for (i, name) in s.labels.iter().enumerate() {
        let _ = writeln!(
            t,
            "{name}\t{}\t{:.4}\t{}",
            s.per_label_positive[i], s.per_label_positive_pct[i], s.imbalance_ratio_per_label[i]
        );
    }
    let _ = writeln!(t, "\ninstances\t{}", s.n_instances);
    let _ = writeln!(t, "all_zero_rows\t{}", s.all_zero_rows);
    t.push_str("\nactive_labels\tinstances\n");
    for (k, n) in &s.label_cardinality_histogram {
        let _ = writeln!(t, "{k}\t{n}");
    }
    t
}

pub fn split_table(all: &Dataset, r: &SplitResult) -> String {
    let mut t = String::from("part\tinstances");
    for name in all.schema().names() {
        let _ = write!(t, "\t{name}");
    }
    t.push('\n');
    let rows = [
        ("all", all.len(), polarcal::splitter::positive_rates(all)),
        ("train", r.train.len(), r.per_label_train_pct.clone()),
        ("val", r.val.len(), r.per_label_val_pct.clone()),
    ];
    for (part, n, rates) in rows {
        let _ = write!(t, "{part}\t{n}");
        for r in rates {
            let _ = write!(t, "\t{r:.4}");
        }
        t.push('\n');
    }
    t
}

pub fn train_summary(r: &TrainReport) -> String {
    let mut buf = Vec::new();
    r.write_history_tsv(&mut buf).expect("writing to memory");
    let mut t = String::from_utf8(buf).expect("utf-8 history");
    let _ = writeln!(t);
    match (r.best_epoch, r.best_val_macro_f1) {
        (Some(e), Some(f)) => {
            let _ = writeln!(t, "best_epoch\t{e}\nbest_val_macro_f1\t{f:.4}");
        }
        _ => t.push_str("best_epoch\tnone\n"),
    }
    let _ = writeln!(t, "stopped_early\t{}", r.stopped_early);
    let _ = writeln!(t, "optimizer_steps\t{}", r.optimizer_steps);
    let _ = writeln!(t, "label_smoothing\t{}", r.label_smoothing);
    t
}

pub fn tune_table(o: &TuneOutcome, schema: &LabelSchema) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "macro_f1_default\t{:.4}", o.default_macro_f1);
    let _ = writeln!(t, "macro_f1_base\t{:.4}", o.base_macro_f1);
    let _ = writeln!(t, "macro_f1_tuned\t{:.4}", o.tuned_macro_f1);
    let _ = writeln!(t, "base_threshold\t{:.2}", o.thresholds.base_theta);
    t.push_str("\nlabel\tthreshold\n");
    for (name, th) in schema.names().iter().zip(&o.thresholds.theta) {
        let _ = writeln!(t, "{name}\t{th:.2}");
    }
    t
}

pub fn eval_table(m: &MetricsReport, mode: BinaryMode) -> String {
    let mut t = String::from("label\tthreshold\tprecision\trecall\tf1\tsupport\n");
    for (i, name) in m.labels.iter().enumerate() {
        let _ = writeln!(
            t,
            "{name}\t{:.2}\t{:.4}\t{:.4}\t{:.4}\t{}",
            m.thresholds[i],
            m.per_label_precision[i],
            m.per_label_recall[i],
            m.per_label_f1[i],
            m.support[i]
        );
    }
    let _ = writeln!(t, "\nmacro_f1\t{:.4}", m.macro_f1);
    let _ = writeln!(t, "micro_f1\t{:.4}", m.micro_f1);
    if let Some(v) = m.two_class_macro_f1 {
        let _ = writeln!(t, "two_class_macro_f1\t{v:.4}");
        let _ = writeln!(t, "score[{mode}]\t{:.4}", m.score(mode));
    }
    t
}

pub fn eval_machine(m: &MetricsReport, mode: BinaryMode) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "macro_f1={}", m.macro_f1);
    let _ = writeln!(t, "micro_f1={}", m.micro_f1);
    if let Some(v) = m.two_class_macro_f1 {
        let _ = writeln!(t, "two_class_macro_f1={v}");
        let _ = writeln!(t, "score={}", m.score(mode));
    }
    for (i, name) in m.labels.iter().enumerate() {
        let _ = writeln!(t, "f1.{name}={}", m.per_label_f1[i]);
        let _ = writeln!(t, "precision.{name}={}", m.per_label_precision[i]);
        let _ = writeln!(t, "recall.{name}={}", m.per_label_recall[i]);
        let _ = writeln!(t, "support.{name}={}", m.support[i]);
        let _ = writeln!(t, "threshold.{name}={}", m.thresholds[i]);
    }
    t
}
