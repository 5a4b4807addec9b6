//! Loss weights for imbalanced labels.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_POS_WEIGHT_CAP: f64 = 100.0;

/// Per-class weights from the "balanced" rule
/// `w_i = n_samples / (n_classes · n_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

/// Per-label positive-term weights `n_neg / n_pos`, capped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosWeights {
    pub pw: Vec<f64>,
    /// Set where the cap bound or the label has no positives.
    pub capped: Vec<bool>,
}

pub fn class_weights(class_counts: &[usize]) -> Result<ClassWeights> {
    if class_counts.is_empty() {
        return Err(Error::InsufficientData("no classes given".into()));
    }
    if let Some(i) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::InsufficientData(format!(
            "class {i} has no samples; balanced weights are undefined"
        )));
    }
    let total: usize = class_counts.iter().sum();
    let k = class_counts.len() as f64;
    Ok(ClassWeights {
        w: class_counts
            .iter()
            .map(|&c| total as f64 / (k * c as f64))
            .collect(),
    })
}

/// `labels` is row-major N×L.
pub fn pos_weights(labels: &[Vec<bool>], cap: f64) -> Result<PosWeights> {
    if labels.is_empty() {
        return Err(Error::InsufficientData("no rows given".into()));
    }
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Config(format!(
            "pos-weight cap must be positive, got {cap}"
        )));
    }
    let width = labels[0].len();
    let mut positives = vec![0usize; width];
    for row in labels {
        if row.len() != width {
            return Err(Error::Shape("ragged label matrix".into()));
        }
        for (p, &b) in positives.iter_mut().zip(row) {
            *p += usize::from(b);
        }
    }
    let n = labels.len();
    let (pw, capped) = positives
        .iter()
        .map(|&pos| {
            if pos == 0 {
                return (cap, true);
            }
            let ratio = (n - pos) as f64 / pos as f64;
            if ratio > cap {
                (cap, true)
            } else {
                (ratio, false)
            }
        })
        .unzip();
    Ok(PosWeights { pw, capped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(pos: usize, neg: usize) -> Vec<Vec<bool>> {
        (0..pos + neg).map(|i| vec![i < pos]).collect()
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights(&[80, 20]).unwrap().w, vec![0.625, 2.5]);
        assert_eq!(class_weights(&[50, 50]).unwrap().w, vec![1.0, 1.0]);
        assert!(class_weights(&[10, 0]).is_err());
    }

    #[test]
    fn pos_weight_examples() {
        let w = pos_weights(&column(10, 90), 100.0).unwrap();
        assert_eq!(w.pw, vec![9.0]);
        assert_eq!(w.capped, vec![false]);
        assert_eq!(pos_weights(&column(50, 50), 100.0).unwrap().pw, vec![1.0]);
        let w = pos_weights(&column(0, 100), 100.0).unwrap();
        assert_eq!((w.pw, w.capped), (vec![100.0], vec![true]));
        let w = pos_weights(&column(1, 500), 100.0).unwrap();
        assert_eq!((w.pw, w.capped), (vec![100.0], vec![true]));
    }

    proptest! {
        #[test]
        fn class_weights_scale_invariant(counts in prop::collection::vec(1usize..500, 2..5), k in 1usize..20) {
            let a = class_weights(&counts).unwrap();
            let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
            let b = class_weights(&scaled).unwrap();
            for (x, y) in a.w.iter().zip(&b.w) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            let weighted: f64 = counts.iter().zip(&a.w).map(|(&c, w)| c as f64 * w).sum();
            let total: usize = counts.iter().sum();
            prop_assert!((weighted - total as f64).abs() <= 1e-9 * total as f64);
        }

        #[test]
        fn pos_weight_monotone_in_positives(neg in 0usize..200, pos in 1usize..50) {
            let more = pos_weights(&column(pos + 1, neg), 100.0).unwrap().pw[0];
            let fewer = pos_weights(&column(pos, neg), 100.0).unwrap().pw[0];
            prop_assert!(fewer >= more);
        }

        #[test]
        fn balanced_input_gives_unit_weights(n in 1usize..300) {
            prop_assert_eq!(class_weights(&[n, n]).unwrap().w, vec![1.0, 1.0]);
            prop_assert_eq!(pos_weights(&column(n, n), 100.0).unwrap().pw, vec![1.0]);
        }
    }
}
