//! Geographically-aware train/test splitting of measurement points.
//!
//! Points are clustered by position with Lloyd's algorithm and whole clusters
//! go to one side or the other, so a spatially correlated region never leaks
//! across the split.

use rand::seq::SliceRandom;

use crate::error::CoreError;
use crate::rng::stream_rng;
use crate::Result;

use super::{CalibrationConfig, MeasurementSet};

/// Cluster-respecting split: point indices per side plus the clustering that
/// produced them (`cluster_of[i]` is point `i`'s cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct GeoSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub cluster_of: Vec<usize>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Lloyd's k-means on 2D points, deterministic per seed.
///
/// Initial centers are `k` distinct point indices drawn by a seeded shuffle;
/// each round assigns points to their nearest center (ties to the lowest
/// center index) and moves every non-empty cluster to its mean. Stops at the
/// first round that changes no assignment, or after 100 rounds.
pub fn kmeans(points: &[(f64, f64)], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > points.len() {
        return Err(CoreError::invalid(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    let first = points[0];
    if k >= 2 && points.iter().all(|&p| p == first) {
        return Err(CoreError::invalid(
            "all measurement positions coincide; no spatial clusters exist",
        ));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut stream_rng(seed, "kmeans-init", 0));
    let mut centers: Vec<(f64, f64)> = order[..k].iter().map(|&i| points[i]).collect();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &p) in points.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        for (c, s) in sums.iter().enumerate() {
            // An emptied cluster keeps its old center.
            if s.2 > 0 {
                centers[c] = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
    }
    Ok(assign)
}

/// Splits a measurement set into train/test by whole k-means clusters.
///
/// Clusters are taken into the train side in seeded random order until the
/// train fraction reaches `cfg.train_fraction`; everything else is test. At
/// least one non-empty cluster always stays on the test side, so a calibration
/// is never scored on its own training points.
pub fn geographic_split(
    meas: &MeasurementSet,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<GeoSplit> {
    cfg.validate()?;
    meas.validate()?;
    let n = meas.points.len();
    if n < 2 {
        return Err(CoreError::invalid(format!(
            "need at least 2 points to split, got {n}"
        )));
    }
    if cfg.n_clusters > n {
        return Err(CoreError::invalid(format!(
            "n_clusters {} exceeds point count {n}",
            cfg.n_clusters
        )));
    }
    let coords: Vec<(f64, f64)> = meas.points.iter().map(|p| (p.x_m, p.y_m)).collect();
    let cluster_of = kmeans(&coords, cfg.n_clusters, seed)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_clusters];
    for (i, &c) in cluster_of.iter().enumerate() {
        members[c].push(i);
    }
    let mut nonempty: Vec<usize> = (0..cfg.n_clusters).filter(|&c| !members[c].is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(CoreError::invalid(
            "clustering produced a single spatial cluster; nothing to hold out",
        ));
    }
    nonempty.shuffle(&mut stream_rng(seed, "cluster-order", 0));

    // The first cluster always lands in train (the target fraction is
    // positive); the guard keeps the last one for test, so both sides end
    // non-empty.
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut taken = 0usize;
    for (rank, &c) in nonempty.iter().enumerate() {
        let want_more = (taken as f64) < cfg.train_fraction * n as f64;
        let last_remaining = rank + 1 == nonempty.len();
        if want_more && !(last_remaining && test.is_empty()) {
            taken += members[c].len();
            train.extend(&members[c]);
        } else {
            test.extend(&members[c]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(GeoSplit {
        train,
        test,
        cluster_of,
    })
}
