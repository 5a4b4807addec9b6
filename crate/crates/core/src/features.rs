//! Hashed n-gram features.
//!
//! Each n-gram of whitespace tokens is hashed with 64-bit FNV-1a over its
//! UTF-8 bytes (bigrams are the two tokens joined by one space) and reduced
//! modulo `hash_dim`. The hash involves no platform- or process-dependent
//! state, so feature indices are stable everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfMode {
    Binary,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub hash_dim: usize,
    pub unigrams: bool,
    pub bigrams: bool,
    pub tf_mode: TfMode,
    pub l2_normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            hash_dim: 1 << 18,
            unigrams: true,
            bigrams: true,
            tf_mode: TfMode::Binary,
            l2_normalize: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hash_dim.is_power_of_two() || self.hash_dim < 1 << 10 {
            return Err(Error::Config(format!(
                "hash_dim must be a power of two >= 1024, got {}",
                self.hash_dim
            )));
        }
        if !self.unigrams && !self.bigrams {
            return Err(Error::Config(
                "at least one n-gram order is required".into(),
            ));
        }
        Ok(())
    }

    pub fn index_of(&self, ngram: &str) -> u32 {
        (fnv1a64(ngram.as_bytes()) % self.hash_dim as u64) as u32
    }
}

/// Sorted, duplicate-free sparse vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut indices: Vec<u32> = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        Self { indices, values }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }
}

pub fn featurize(text: &str, cfg: &FeaturizerConfig) -> SparseVector {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let mut add = |idx: u32| {
        let slot = acc.entry(idx).or_insert(0.0);
        match cfg.tf_mode {
            TfMode::Binary => *slot = 1.0,
            TfMode::Count => *slot += 1.0,
        }
    };
    if cfg.unigrams {
        for t in &tokens {
            add(cfg.index_of(t));
        }
    }
    if cfg.bigrams {
        let mut gram = String::new();
        for pair in tokens.windows(2) {
            gram.clear();
            gram.push_str(pair[0]);
            gram.push(' ');
            gram.push_str(pair[1]);
            add(cfg.index_of(&gram));
        }
    }
    let (indices, mut values): (Vec<u32>, Vec<f64>) = acc.into_iter().unzip();
    if cfg.l2_normalize {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
    }
    SparseVector { indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv1a_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_empty_vector() {
        assert!(featurize("", &FeaturizerConfig::default()).is_empty());
    }

    #[test]
    fn repeated_unigram_counts() {
        let cfg = FeaturizerConfig {
            bigrams: false,
            tf_mode: TfMode::Count,
            l2_normalize: false,
            ..Default::default()
        };
        let v = featurize("abc abc", &cfg);
        assert_eq!(v.indices, vec![cfg.index_of("abc")]);
        assert_eq!(v.values, vec![2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(FeaturizerConfig::default().validate().is_ok());
        let small = FeaturizerConfig {
            hash_dim: 512,
            ..Default::default()
        };
        assert!(small.validate().is_err());
        let odd = FeaturizerConfig {
            hash_dim: 3000,
            ..Default::default()
        };
        assert!(odd.validate().is_err());
        let none = FeaturizerConfig {
            unigrams: false,
            bigrams: false,
            ..Default::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn sparse_vector_new_merges_duplicates() {
        let v = SparseVector::new(vec![(5, 1.0), (2, 0.5), (5, 2.0)]);
        assert_eq!(v.indices, vec![2, 5]);
        assert_eq!(v.values, vec![0.5, 3.0]);
    }

    proptest! {
        #[test]
        fn featurize_invariants(words in prop::collection::vec("[a-z]{1,6}", 0..30), count in any::<bool>()) {
            let text = words.join(" ");
            let cfg = FeaturizerConfig {
                hash_dim: 1 << 10,
                tf_mode: if count { TfMode::Count } else { TfMode::Binary },
                ..Default::default()
            };
            let v = featurize(&text, &cfg);
            prop_assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.indices.iter().all(|&i| (i as usize) < cfg.hash_dim));
            prop_assert!(v.values.iter().all(|&x| x > 0.0));
            if v.is_empty() {
                prop_assert!(words.is_empty());
            } else {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            if !count && !v.is_empty() {
                let first = v.values[0];
                prop_assert!(v.values.iter().all(|&x| x == first));
                prop_assert!(first <= 1.0);
            }
        }
    }
}
