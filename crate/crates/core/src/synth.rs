//! Seeded synthetic corpora with controllable label imbalance.
//!
//! For every label, exactly `k = round(rate · N)` rows are drawn uniformly
//! without replacement and carry that label's cue words. Label noise then
//! swaps `round(noise · k)` of those rows with as many cue-free rows: the
//! former are labelled negative, the latter positive. Positive counts stay
//! exactly `k`, and both the precision and recall of the cue are `1 − noise`.
//! Filler words, mentions and links pad the text so the preprocessing path
//! is exercised as well.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Dataset, Instance, LabelSchema, Preprocessor};
use crate::error::{Error, Result};

const SYLLABLES: [&str; 16] = [
    "ka", "ri", "to", "ma", "lu", "se", "no", "pa", "vi", "de", "go", "hu", "ze", "bo", "fi", "ya",
];
const FILLER_WORDS: usize = 400;
const CUE_WORDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub schema: LabelSchema,
    pub n_instances: usize,
    pub rates: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.len() != self.schema.len() {
            return Err(Error::Config(format!(
                "{} rates for {} labels",
                self.rates.len(),
                self.schema.len()
            )));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::Config(format!("rates must lie in (0, 1), got {r}")));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!(
                "noise must lie in [0, 0.5), got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

fn pseudo_word(mut k: usize, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    w
}

fn filler_vocabulary() -> Vec<String> {
    (0..FILLER_WORDS).map(|k| pseudo_word(k, 3)).collect()
}

/// Cue words of `label`: four syllables, so they never collide with filler.
fn cue_vocabulary(label: usize) -> Vec<String> {
    (0..CUE_WORDS)
        .map(|k| pseudo_word(label * CUE_WORDS + k, 4))
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let filler = filler_vocabulary();
    let cues: Vec<Vec<String>> = (0..spec.schema.len()).map(cue_vocabulary).collect();
    let pre = Preprocessor::new(Default::default())?;
    let width = (spec.n_instances.max(1) as f64).log10().floor() as usize + 1;

    let n = spec.n_instances;
    let mut cue = vec![vec![false; spec.rates.len()]; n];
    let mut gold = cue.clone();
    let mut rows: Vec<usize> = (0..n).collect();
    for (l, &rate) in spec.rates.iter().enumerate() {
        rows.shuffle(&mut rng);
        let k = (rate * n as f64).round() as usize;
        let flips = ((spec.noise * k as f64).round() as usize).min(n - k);
        for &r in &rows[..k] {
            cue[r][l] = true;
        }
        // rows[..k] is a uniform sample, so its first `flips` entries and the
        // first `flips` cue-free rows are uniform picks as well.
        for &r in rows[flips..k].iter().chain(&rows[k..k + flips]) {
            gold[r][l] = true;
        }
    }

    let mut instances = Vec::with_capacity(n);
    for (i, (labels, cue)) in gold.into_iter().zip(cue).enumerate() {
        let mut words: Vec<String> = (0..rng.random_range(6..=18))
            .map(|_| filler.choose(&mut rng).unwrap().clone())
            .collect();
        for (l, &has_cue) in cue.iter().enumerate() {
            if has_cue {
                for _ in 0..rng.random_range(1..=2) {
                    words.push(cues[l].choose(&mut rng).unwrap().clone());
                }
            }
        }
        words.shuffle(&mut rng);
        if rng.random_bool(0.2) {
            words.insert(0, format!("@user{}", rng.random_range(0..100)));
        }
        if rng.random_bool(0.1) {
            words.push(format!("https://t.co/{:x}", rng.random::<u32>()));
        }
        if rng.random_bool(0.1) {
            let k = rng.random_range(0..words.len());
            words[k] = format!("#{}", words[k].to_uppercase());
        }
        let raw = words.join(" ");
        instances.push(Instance {
            id: format!("syn-{i:0width$}"),
            text: pre.process(&raw),
            raw_text: raw,
            labels,
        });
    }
    Dataset::new(spec.schema.clone(), instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::summarize;

    fn spec(rates: Vec<f64>, n: usize, noise: f64, seed: u64) -> SyntheticSpec {
        let schema = LabelSchema::new((0..rates.len()).map(|i| format!("l{i}"))).unwrap();
        SyntheticSpec {
            schema,
            n_instances: n,
            rates,
            noise,
            seed,
        }
    }

    #[test]
    fn balanced_rates_give_half_positives() {
        let ds = generate_synthetic(&spec(vec![0.5; 3], 2000, 0.0, 42)).unwrap();
        let stats = summarize(&ds).unwrap();
        assert_eq!(stats.per_label_positive_pct, vec![0.5; 3]);
    }

    #[test]
    fn rare_rate_at_english_scale() {
        let ds = generate_synthetic(&spec(vec![0.022], 3222, 0.0, 42)).unwrap();
        assert_eq!(ds.positive_counts(), vec![71]);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic(&spec(vec![0.3, 0.1], 300, 0.1, 7)).unwrap();
        let b = generate_synthetic(&spec(vec![0.3, 0.1], 300, 0.1, 7)).unwrap();
        let c = generate_synthetic(&spec(vec![0.3, 0.1], 300, 0.1, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_cues_match_gold() {
        let ds = generate_synthetic(&spec(vec![0.3, 0.2], 200, 0.0, 1)).unwrap();
        let cues: Vec<Vec<String>> = (0..2).map(cue_vocabulary).collect();
        for inst in ds.instances() {
            for (l, &gold) in inst.labels.iter().enumerate() {
                let has = inst.text.split(' ').any(|w| cues[l].iter().any(|c| c == w));
                assert_eq!(has, gold);
            }
        }
    }

    #[test]
    fn noise_swaps_a_fixed_share_of_positives() {
        let ds = generate_synthetic(&spec(vec![0.1], 1000, 0.2, 3)).unwrap();
        assert_eq!(ds.positive_counts(), vec![100]);
        let cues = cue_vocabulary(0);
        let (mut agree, mut cued) = (0, 0);
        for inst in ds.instances() {
            let has = inst.text.split(' ').any(|w| cues.iter().any(|c| c == w));
            cued += has as usize;
            agree += (has && inst.labels[0]) as usize;
        }
        assert_eq!(cued, 100);
        assert_eq!(agree, 80);
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let filler = filler_vocabulary();
        let mut all: Vec<String> = filler.clone();
        for l in 0..6 {
            all.extend(cue_vocabulary(l));
        }
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&spec(vec![0.0], 10, 0.0, 1)).is_err());
        assert!(generate_synthetic(&spec(vec![0.5], 10, 0.5, 1)).is_err());
        let mut s = spec(vec![0.5], 10, 0.0, 1);
        s.rates.push(0.2);
        assert!(generate_synthetic(&s).is_err());
    }
}
