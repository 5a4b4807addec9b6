//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use polarcal::calibration::macro_f1_at;
use polarcal::model::Example;
use polarcal::{
    balanced_merge, confusion, generate_synthetic, iterative_stratified_split, loss_and_grad,
    macro_f1, micro_f1, oracle_best_thresholds, preprocess, tune, Dataset, FeaturizerConfig,
    Instance, LabelSchema, LinearModel, LossWeights, PreprocessConfig, ProbabilityMatrix,
    SparseVector, SplitConfig, SyntheticSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let mut argv = vec!["polarcal"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    std::env::set_current_dir(dir).map_err(|e| e.to_string())?;
    let status = polarcal_cli::run(argv, &mut out, &mut err);
    if status != 0 {
        return Err(format!(
            "{args:?} exited {status}: {}",
            String::from_utf8_lossy(&err)
        ));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn eval_metrics(run_dir: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(run_dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    manifest["stages"]
        .as_array()
        .and_then(|s| s.iter().find(|st| st["stage"] == "eval"))
        .map(|st| st["metrics"].clone())
        .ok_or_else(|| "manifest has no eval stage".to_string())
}

fn metric(m: &Value, key: &str) -> f64 {
    m[key].as_f64().unwrap_or(f64::NAN)
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn tuning_matches_oracle() -> Check {
    let start = Instant::now();
    let schema = LabelSchema::new(["a", "b", "c"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut equal, mut worst) = (0, f64::INFINITY);
    for case in 0..20 {
        let levels: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let k = rng.random_range(2..=12);
                (0..k)
                    .map(|_| rng.random_range(5..=95) as f64 / 100.0)
                    .collect()
            })
            .collect();
        let probs: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                levels
                    .iter()
                    .map(|lv| lv[rng.random_range(0..lv.len())])
                    .collect()
            })
            .collect();
        let gold: Vec<Vec<bool>> = probs
            .iter()
            .map(|row| row.iter().map(|&p| rng.random_bool(p)).collect())
            .collect();
        let ids = (0..50).map(|i| format!("r{i}")).collect();
        let pm = ProbabilityMatrix::new(ids, probs, schema.clone()).unwrap();
        let tuned = macro_f1_at(&pm, &gold, &tune(&pm, &gold).unwrap().theta);
        let (_, best) = oracle_best_thresholds(&pm, &gold).unwrap();
        ensure(tuned >= 0.95 * best, || {
            format!("case {case}: tuned {tuned:.4} vs oracle {best:.4}")
        })?;
        if (tuned - best).abs() <= 1e-12 {
            equal += 1;
        }
        worst = worst.min(if best > 0.0 { tuned / best } else { 1.0 });
    }
    ensure(equal >= 16, || {
        format!("equal to oracle in {equal}/20 cases")
    })?;
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "equal in {equal}/20, worst ratio {worst:.4}, {:.2?}",
        start.elapsed()
    ))
}

fn tuned_thresholds_beat_default() -> Check {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    cli(
        d,
        &[
            "synth",
            "--out",
            "data.jsonl",
            "--instances",
            "3000",
            "--rates",
            "0.357,0.1,0.05,0.022,0.08",
            "--noise",
            "0.1",
            "--seed",
            "42",
        ],
    )?;
    cli(
        d,
        &[
            "pipeline",
            "--data",
            "data.jsonl",
            "--schema",
            "subtask2",
            "--seed",
            "42",
            "--out-dir",
            "run",
        ],
    )?;
    let m = eval_metrics(&d.join("run"))?;
    let (at_half, tuned) = (
        metric(&m, "test_macro_f1_default"),
        metric(&m, "test_macro_f1_tuned"),
    );
    let gain = tuned - at_half;
    ensure(gain >= 0.15, || {
        format!("test macro-F1 {at_half:.4} -> {tuned:.4} (+{gain:.4})")
    })?;
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "test macro-F1 {at_half:.4} -> {tuned:.4} (+{gain:.4}), {:.2?}",
        start.elapsed()
    ))
}

fn class_weights_beat_unweighted() -> Check {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    cli(
        d,
        &[
            "synth",
            "--out",
            "data.jsonl",
            "--instances",
            "2000",
            "--rates",
            "0.05",
            "--noise",
            "0.05",
            "--seed",
            "42",
        ],
    )?;
    let mut scores = Vec::new();
    for mode in ["balanced", "none"] {
        cli(
            d,
            &[
                "pipeline",
                "--data",
                "data.jsonl",
                "--weighting",
                mode,
                "--seed",
                "42",
                "--out-dir",
                mode,
            ],
        )?;
        scores.push(metric(&eval_metrics(&d.join(mode))?, "test_score_default"));
    }
    let gain = scores[0] - scores[1];
    ensure(gain >= 0.05, || {
        format!("balanced {:.4} vs none {:.4}", scores[0], scores[1])
    })?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "macro-F1 at 0.5: balanced {:.4} vs none {:.4}, {:.2?}",
        scores[0],
        scores[1],
        start.elapsed()
    ))
}

fn gradients_match_finite_differences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 16;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let l = rng.random_range(1..=4);
        let schema = LabelSchema::new((0..l).map(|i| format!("l{i}"))).unwrap();
        let fc = FeaturizerConfig {
            hash_dim: dim,
            ..Default::default()
        };
        let mut model = LinearModel::zeros(fc, schema);
        model
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-2.0..2.0));
        model
            .bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-2.0..2.0));
        let batch: Vec<Example> = (0..rng.random_range(1..=8))
            .map(|_| Example {
                x: SparseVector::new(
                    (0..rng.random_range(1..=6))
                        .map(|_| (rng.random_range(0..dim as u32), rng.random_range(0.05..1.0)))
                        .collect(),
                ),
                y: (0..l).map(|_| rng.random_bool(0.3)).collect(),
            })
            .collect();
        let w = LossWeights {
            pos: (0..l).map(|_| rng.random_range(0.1..20.0)).collect(),
            neg: (0..l).map(|_| rng.random_range(0.1..5.0)).collect(),
        };
        let eps = rng.random_range(0.0..0.3);
        let wd = if rng.random_bool(0.5) {
            rng.random_range(0.0..0.1)
        } else {
            0.0
        };
        let loss = |m: &LinearModel| loss_and_grad(m, &batch, &w, eps, wd).unwrap().0;
        let (_, grad) = loss_and_grad(&model, &batch, &w, eps, wd).unwrap();
        let analytic: Vec<f64> = grad
            .dense_weights(dim)
            .into_iter()
            .chain(grad.bias.clone())
            .collect();
        let n_weights = model.weights.len();
        for (i, &a) in analytic.iter().enumerate() {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            if i < n_weights {
                plus.weights[i] += h;
                minus.weights[i] -= h;
            } else {
                plus.bias[i - n_weights] += h;
                minus.bias[i - n_weights] -= h;
            }
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            ensure(rel < 1e-4, || {
                format!("case {case} coord {i}: {a} vs {numeric}")
            })?;
        }
    }
    Ok(format!("100 tuples, worst relative error {worst:.2e}"))
}

fn iterative_split_preserves_rates() -> Check {
    let schema = LabelSchema::new(["a", "b", "c"]).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let ds = generate_synthetic(&SyntheticSpec {
            schema: schema.clone(),
            n_instances: 200,
            rates: vec![0.5, 0.1, 0.02],
            noise: 0.0,
            seed,
        })
        .unwrap();
        let cfg = SplitConfig {
            val_fraction: 0.2,
            seed,
        };
        let r = iterative_stratified_split(&ds, &cfg).unwrap();
        let global = polarcal::splitter::positive_rates(&ds);
        for (l, (&v, &g)) in r.per_label_val_pct.iter().zip(&global).enumerate() {
            worst = worst.max((v - g).abs());
            ensure((v - g).abs() <= 0.02 + 1e-12, || {
                format!("seed {seed} label {l}: val {v:.4} vs {g:.4}")
            })?;
        }
        let train: HashSet<&str> = r.train.ids().into_iter().collect();
        let val: HashSet<&str> = r.val.ids().into_iter().collect();
        let all: HashSet<&str> = ds.ids().into_iter().collect();
        ensure(train.is_disjoint(&val), || {
            format!("seed {seed}: train and val overlap")
        })?;
        ensure(
            train.len() + val.len() == ds.len()
                && train.union(&val).copied().collect::<HashSet<_>>() == all,
            || format!("seed {seed}: not a partition"),
        )?;
        let again = iterative_stratified_split(&ds, &cfg).unwrap();
        ensure(
            again.train.ids() == r.train.ids() && again.val.ids() == r.val.ids(),
            || format!("seed {seed}: not deterministic"),
        )?;
    }
    Ok(format!("20 seeds, largest validation rate gap {worst:.4}"))
}

fn metric_golden_values() -> Check {
    let m = |rows: &[[u8; 2]]| -> Vec<Vec<bool>> {
        rows.iter()
            .map(|r| r.iter().map(|&b| b == 1).collect())
            .collect()
    };
    let pred = m(&[[1, 0], [0, 0], [1, 1], [0, 1]]);
    let gold = m(&[[1, 0], [0, 1], [1, 1], [0, 0]]);
    let cc = confusion(&pred, &gold).unwrap();
    let (ma, mi) = (macro_f1(&cc), micro_f1(&cc));
    ensure(ma == 0.75 && mi == 0.75, || {
        format!("hand case macro {ma} micro {mi}")
    })?;
    let perfect = confusion(&gold, &gold).unwrap();
    ensure(
        macro_f1(&perfect) == 1.0 && micro_f1(&perfect) == 1.0,
        || "perfect case".into(),
    )?;
    let zeros = m(&[[0, 0]; 4]);
    let empty = confusion(&zeros, &zeros).unwrap();
    ensure(macro_f1(&empty) == 0.0 && micro_f1(&empty) == 0.0, || {
        "all-empty case".into()
    })?;
    let missed = confusion(&zeros, &gold).unwrap();
    ensure(macro_f1(&missed) == 0.0 && micro_f1(&missed) == 0.0, || {
        "no-prediction case".into()
    })?;
    Ok("hand case 0.75/0.75, perfect 1.0, zero-division 0".into())
}

fn merge_reaches_exact_balance() -> Check {
    let schema = LabelSchema::preset("subtask1").unwrap();
    let spec = |n, rate, seed| SyntheticSpec {
        schema: schema.clone(),
        n_instances: n,
        rates: vec![rate],
        noise: 0.0,
        seed,
    };
    let primary = generate_synthetic(&spec(3222, 0.36, 42)).unwrap();
    let donor_rows = generate_synthetic(&spec(8000, 0.5, 7))
        .unwrap()
        .into_instances()
        .into_iter()
        .map(|i| Instance {
            id: format!("donor-{}", i.id),
            ..i
        })
        .collect();
    let donor = Dataset::new(schema.clone(), donor_rows).unwrap();
    let merged = balanced_merge(&primary, &donor, 42).unwrap();
    let pos = merged.positive_counts()[0];
    ensure(merged.len() == 6444 && pos == 3222, || {
        format!("{} rows, {pos} positive", merged.len())
    })?;
    Ok(format!(
        "{} rows, {pos} positive, {} negative",
        merged.len(),
        merged.len() - pos
    ))
}

fn pipeline_is_deterministic() -> Check {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    cli(
        d,
        &[
            "synth",
            "--out",
            "toy.jsonl",
            "--instances",
            "800",
            "--rates",
            "0.357,0.1,0.05,0.022,0.08",
        ],
    )?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        outputs.push(cli(
            d,
            &[
                "pipeline",
                "--data",
                "toy.jsonl",
                "--schema",
                "subtask2",
                "--seed",
                "42",
                "--out-dir",
                run,
            ],
        )?);
    }
    ensure(outputs[0] == outputs[1], || {
        "standard output differs".into()
    })?;
    let files = [
        "manifest.json",
        "model.txt",
        "thresholds.tsv",
        "metrics.tsv",
        "history.tsv",
        "val.probs",
        "test.probs",
    ];
    for f in files {
        let a = std::fs::read(d.join("first").join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(d.join("second").join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical", files.len()))
}

fn preprocessing_conformance() -> Check {
    let golden = include_str!("../../core/tests/data/preprocess_golden.jsonl");
    let cfg = PreprocessConfig::default();
    let mut cases = 0;
    for line in golden.lines() {
        let row: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let (input, expected) = (
            row["input"].as_str().unwrap(),
            row["expected"].as_str().unwrap(),
        );
        let got = preprocess(input, &cfg);
        ensure(got == expected, || {
            format!("{input:?}: got {got:?}, expected {expected:?}")
        })?;
        cases += 1;
    }
    ensure(cases == 30, || format!("golden file has {cases} cases"))?;
    let pieces = [
        "Word",
        "#",
        "#tag",
        "@",
        "@who",
        "#@x",
        "http://a.b",
        "HTTPS://C",
        "www.d",
        "WWW.",
        " ",
        "\t",
        "\n",
        "😂",
        "❤️",
        "\u{fe0f}",
        "\u{200d}",
        "🏳️‍🌈",
        "👍🏽",
        "🇺🇸",
        "#️⃣",
        "\u{20e3}",
        "\u{1f8ff}",
        "é",
        "İ",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let x: String = (0..rng.random_range(0..30))
            .map(|_| pieces[rng.random_range(0..pieces.len())])
            .collect();
        let once = preprocess(&x, &cfg);
        ensure(preprocess(&once, &cfg) == once, || {
            format!("not idempotent on {x:?}")
        })?;
    }
    Ok("30 golden cases exact, idempotent on 1000 fuzzed inputs".into())
}

fn main() -> ExitCode {
    let checks: [Criterion; 9] = [
        (
            "threshold tuning matches the exhaustive oracle",
            tuning_matches_oracle,
        ),
        (
            "tuned thresholds beat uniform 0.5 on the five-label profile",
            tuned_thresholds_beat_default,
        ),
        (
            "balanced class weights beat no weighting at 95/5",
            class_weights_beat_unweighted,
        ),
        (
            "loss gradients match central differences",
            gradients_match_finite_differences,
        ),
        (
            "iterative stratification keeps label rates",
            iterative_split_preserves_rates,
        ),
        ("metric golden values", metric_golden_values),
        ("balanced merge of 3222 rows", merge_reaches_exact_balance),
        (
            "pipeline runs are byte-identical",
            pipeline_is_deterministic,
        ),
        (
            "preprocessing golden file and idempotence",
            preprocessing_conformance,
        ),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let cwd = std::env::current_dir().expect("current directory");
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        std::env::set_current_dir(&cwd).expect("restore directory");
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
