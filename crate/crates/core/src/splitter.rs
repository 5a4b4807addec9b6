//! Train/validation splitting.
//!
//! [`stratified_split`] handles the binary task, [`iterative_stratified_split`]
//! the multi-label one (scarcest label first, demand-driven assignment), and
//! [`balanced_merge`] builds an exactly balanced binary corpus from a primary
//! dataset and a donor.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitConfig {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.2,
            seed: 42,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    #[serde(skip)]
    pub train: Dataset,
    #[serde(skip)]
    pub val: Dataset,
    pub per_label_train_pct: Vec<f64>,
    pub per_label_val_pct: Vec<f64>,
}

impl SplitResult {
    fn from_assignment(ds: &Dataset, in_val: &[bool]) -> Self {
        let (val_rows, train_rows): (Vec<usize>, Vec<usize>) =
            (0..ds.len()).partition(|&r| in_val[r]);
        let train = ds.select(&train_rows);
        let val = ds.select(&val_rows);
        Self {
            per_label_train_pct: positive_rates(&train),
            per_label_val_pct: positive_rates(&val),
            train,
            val,
        }
    }
}

/// Fraction of positives per label; zeros for an empty dataset.
pub fn positive_rates(ds: &Dataset) -> Vec<f64> {
    let n = ds.len();
    ds.positive_counts()
        .into_iter()
        .map(|c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect()
}

/// Splits `total` into integer parts proportional to `fractions` by
/// largest remainder. Equal remainders favor the lower index.
pub fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let sum: f64 = fractions.iter().sum();
    let quotas: Vec<f64> = fractions.iter().map(|f| total as f64 * f / sum).collect();
    // The epsilon keeps quotas like 0.2·5 = 0.99999… from flooring to zero.
    let mut parts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - parts[a] as f64;
        let rb = quotas[b] - parts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        parts[j] += 1;
    }
    parts
}

/// Class-stratified split for one-label datasets.
pub fn stratified_split(ds: &Dataset, cfg: &SplitConfig) -> Result<SplitResult> {
    cfg.validate()?;
    if !ds.schema().is_binary() {
        return Err(Error::Config(format!(
            "stratified_split needs a one-label schema (got {} labels); use iterative_stratified_split",
            ds.schema().len()
        )));
    }
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (r, inst) in ds.instances().iter().enumerate() {
        classes[usize::from(inst.labels[0])].push(r);
    }
    for (class, rows) in classes.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} instance(s); stratified splitting needs at least 2",
                rows.len()
            )));
        }
    }

    let f = cfg.val_fraction;
    let val_total = apportion(ds.len(), &[1.0 - f, f])[1];
    let quotas: Vec<f64> = classes.iter().map(|c| c.len() as f64 * f).collect();
    let mut val_counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let mut by_remainder = [0usize, 1];
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - val_counts[a] as f64;
        let rb = quotas[b] - val_counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = val_total.saturating_sub(val_counts.iter().sum());
    for &c in by_remainder.iter().cycle() {
        if missing == 0 {
            break;
        }
        if val_counts[c] < classes[c].len() {
            val_counts[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut in_val = vec![false; ds.len()];
    for (rows, &k) in classes.iter_mut().zip(&val_counts) {
        rows.shuffle(&mut rng);
        for &r in rows.iter().take(k) {
            in_val[r] = true;
        }
    }
    Ok(SplitResult::from_assignment(ds, &in_val))
}

/// Multi-label iterative stratification.
///
/// Desired sizes and per-label positive counts for each subset come from
/// largest-remainder apportionment. The label with the fewest unassigned
/// positives is processed first; each of its examples goes to the subset
/// with the largest remaining demand for that label, then the largest
/// remaining capacity, then a seeded random pick. Subsets whose capacity is
/// exhausted are not eligible, which keeps the subset sizes exact. Rows with
/// no positive label are shuffled and fill whatever capacity is left.
pub fn iterative_stratified_split(ds: &Dataset, cfg: &SplitConfig) -> Result<SplitResult> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InsufficientData(
            "cannot split an empty dataset".into(),
        ));
    }
    const TRAIN: usize = 0;
    const VAL: usize = 1;
    let f = cfg.val_fraction;
    let fractions = [1.0 - f, f];
    let n_labels = ds.schema().len();
    let rows = ds.instances();

    let mut capacity: Vec<i64> = apportion(ds.len(), &fractions)
        .into_iter()
        .map(|c| c as i64)
        .collect();
    let mut demand: Vec<Vec<i64>> = vec![vec![0; n_labels]; 2];
    for (label, &n) in ds.positive_counts().iter().enumerate() {
        for (subset, part) in apportion(n, &fractions).into_iter().enumerate() {
            demand[subset][label] = part as i64;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);

    let mut assigned: Vec<Option<usize>> = vec![None; ds.len()];
    let mut unassigned_pos = ds.positive_counts();
    while let Some(label) = (0..n_labels)
        .filter(|&l| unassigned_pos[l] > 0)
        .min_by_key(|&l| (unassigned_pos[l], l))
    {
        for &r in &order {
            if assigned[r].is_some() || !rows[r].labels[label] {
                continue;
            }
            let eligible: Vec<usize> = (0..2).filter(|&s| capacity[s] > 0).collect();
            let best_demand = eligible.iter().map(|&s| demand[s][label]).max().unwrap();
            let by_demand: Vec<usize> = eligible
                .into_iter()
                .filter(|&s| demand[s][label] == best_demand)
                .collect();
            let best_cap = by_demand.iter().map(|&s| capacity[s]).max().unwrap();
            let tied: Vec<usize> = by_demand
                .into_iter()
                .filter(|&s| capacity[s] == best_cap)
                .collect();
            let subset = *tied.choose(&mut rng).unwrap();

            assigned[r] = Some(subset);
            capacity[subset] -= 1;
            for (l, &on) in rows[r].labels.iter().enumerate() {
                if on {
                    demand[subset][l] -= 1;
                    unassigned_pos[l] -= 1;
                }
            }
        }
    }

    let mut leftovers: Vec<usize> = (0..ds.len()).filter(|&r| assigned[r].is_none()).collect();
    leftovers.shuffle(&mut rng);
    let val_room = capacity[VAL].max(0) as usize;
    for (k, &r) in leftovers.iter().enumerate() {
        assigned[r] = Some(if k < val_room { VAL } else { TRAIN });
    }

    let in_val: Vec<bool> = assigned.iter().map(|a| *a == Some(VAL)).collect();
    Ok(SplitResult::from_assignment(ds, &in_val))
}

/// Appends donor rows to `primary` so the result is exactly 50/50.
///
/// Draws, without replacement, as many donor negatives as `primary` has
/// positives and as many donor positives as it has negatives. `primary`
/// comes first and unchanged; the sampled donor rows follow in donor order.
pub fn balanced_merge(primary: &Dataset, donor: &Dataset, seed: u64) -> Result<Dataset> {
    if !primary.schema().is_binary() || !donor.schema().is_binary() {
        return Err(Error::Config(
            "balanced_merge needs one-label datasets".into(),
        ));
    }
    if primary.schema() != donor.schema() {
        return Err(Error::Schema(format!(
            "label names differ: {:?} vs {:?}",
            primary.schema().names(),
            donor.schema().names()
        )));
    }
    let primary_pos = primary.positive_counts()[0];
    let primary_neg = primary.len() - primary_pos;

    let (donor_pos, donor_neg): (Vec<usize>, Vec<usize>) =
        (0..donor.len()).partition(|&r| donor.instances()[r].labels[0]);
    let mut deficits = Vec::new();
    if donor_neg.len() < primary_pos {
        deficits.push(format!(
            "donor lacks {} label=0 rows",
            primary_pos - donor_neg.len()
        ));
    }
    if donor_pos.len() < primary_neg {
        deficits.push(format!(
            "donor lacks {} label=1 rows",
            primary_neg - donor_pos.len()
        ));
    }
    if !deficits.is_empty() {
        return Err(Error::InsufficientData(deficits.join("; ")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = donor_neg
        .choose_multiple(&mut rng, primary_pos)
        .copied()
        .chain(donor_pos.choose_multiple(&mut rng, primary_neg).copied())
        .collect();
    picked.sort_unstable();

    let mut instances = primary.instances().to_vec();
    instances.extend(picked.into_iter().map(|r| donor.instances()[r].clone()));
    Dataset::new(primary.schema().clone(), instances)
}
