//! Leakage-safe k-fold assignment of base scenarios.
//!
//! Base scenarios are shuffled once; folds are contiguous runs of the
//! shuffled order. Rotation `r` reads the order cyclically starting at fold
//! `r`'s first position and splits it 70/15/15 into train/val/test, so every
//! rotation is a partition of the scenarios and the k test sets are disjoint
//! whenever k divides the scenario count. Augmented variants never appear in
//! the assignment; they inherit their base scenario's fold and split.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::CoreError;
use crate::rng::stream_rng;
use crate::Result;

/// Role of a base scenario within one fold rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Fold structure over base scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Base ids in shuffled order; fold `f` is the run starting at
    /// `f * n / k`.
    pub order: Vec<String>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    fn fold_start(&self, f: usize) -> usize {
        f * self.n() / self.k
    }

    fn position(&self, base_id: &str) -> Option<usize> {
        self.order.iter().position(|b| b == base_id)
    }

    /// Fold index of a base scenario.
    pub fn fold_of(&self, base_id: &str) -> Option<usize> {
        let p = self.position(base_id)?;
        Some((p * self.k + self.k - 1) / self.n().max(1))
    }

    /// Split of a base scenario under rotation `r`.
    pub fn split_of(&self, base_id: &str, rotation: usize) -> Option<Split> {
        assert!(rotation < self.k, "rotation {rotation} out of range");
        let p = self.position(base_id)?;
        let n = self.n();
        let rel = (p + n - self.fold_start(rotation)) % n;
        Some(if rel < self.n_train {
            Split::Train
        } else if rel < self.n_train + self.n_val {
            Split::Val
        } else {
            Split::Test
        })
    }

    /// Base ids carrying `split` under rotation `r`, in shuffled order.
    pub fn base_ids_in(&self, rotation: usize, split: Split) -> Vec<&str> {
        self.order
            .iter()
            .filter(|b| self.split_of(b, rotation) == Some(split))
            .map(String::as_str)
            .collect()
    }
}

/// Shuffle the manifest's base scenarios and lay out k folds with a 70/15/15
/// train/val/test division per rotation. Fails when `k < 2`, when `k` exceeds
/// the scenario count, or when the scenario count is too small for all three
/// splits to be nonempty.
pub fn split_kfold(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(CoreError::invalid("k must be at least 2"));
    }
    let mut order: Vec<String> = manifest
        .base_ids()
        .into_iter()
        .map(str::to_string)
        .collect();
    order.sort_unstable();
    let n = order.len();
    if k > n {
        return Err(CoreError::invalid(format!(
            "k = {k} exceeds the {n} base scenarios"
        )));
    }

    use rand::Rng;
    let mut rng = stream_rng(seed, "kfold-shuffle", 0);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let n_val = ((0.15 * n as f64).round() as usize).max(1);
    let n_test = n_val;
    let n_train = n
        .checked_sub(n_val + n_test)
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CoreError::invalid(format!(
                "{n} base scenarios leave no training share after {n_val} val and {n_test} test"
            ))
        })?;

    Ok(FoldAssignment {
        k,
        seed,
        order,
        n_train,
        n_val,
        n_test,
    })
}

/// Stamp every record's fold and split from the assignment under one
/// rotation. Fails when a record's base scenario is missing from the
/// assignment.
pub fn apply_assignment(
    manifest: &mut DatasetManifest,
    fa: &FoldAssignment,
    rotation: usize,
) -> Result<()> {
    if rotation >= fa.k {
        return Err(CoreError::invalid(format!(
            "rotation {rotation} out of range for k = {}",
            fa.k
        )));
    }
    let mut lookup: HashMap<&str, (usize, Split)> = HashMap::with_capacity(fa.n());
    for b in &fa.order {
        let fold = fa.fold_of(b).expect("id from the assignment order");
        let split = fa.split_of(b, rotation).expect("id from the assignment order");
        lookup.insert(b, (fold, split));
    }
    for r in &manifest.records {
        if !lookup.contains_key(r.base_id.as_str()) {
            return Err(CoreError::invalid(format!(
                "base {} is not covered by the fold assignment",
                r.base_id
            )));
        }
    }
    for r in &mut manifest.records {
        let (fold, split) = lookup[r.base_id.as_str()];
        r.fold = Some(fold);
        r.split = Some(split);
    }
    Ok(())
}
