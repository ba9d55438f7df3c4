//! Order statistics, empirical CDFs, and deterministic CSV serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CoreError;
use crate::Result;

/// Arithmetic mean. Empty input returns NaN.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Fewer than 2 values → 0.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Normal-approximation 95% confidence interval of the mean: (mean, half width).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let half = 1.96 * sample_std(values) / (values.len() as f64).sqrt();
    (m, half)
}

/// Linear-interpolation quantile on an ascending-sorted slice (the common
/// "type 7" definition: h = (n-1)q). `q` is clamped to [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = h - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Median via [`quantile_sorted`], copying and sorting the input.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Empirical cumulative distribution of a finite sample.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    /// Build from a sample. Rejects empty input and non-finite values.
    pub fn new(mut values: Vec<f64>) -> Result<Ecdf> {
        if values.is_empty() {
            return Err(CoreError::invalid("ECDF requires a non-empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("ECDF sample contains non-finite values"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample ≤ `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|&v| v <= x);
        k as f64 / self.sorted.len() as f64
    }

    pub fn median(&self) -> f64 {
        quantile_sorted(&self.sorted, 0.5)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.sorted, q)
    }

    /// All points are identical (a point mass).
    pub fn is_degenerate(&self) -> bool {
        self.sorted.first() == self.sorted.last()
    }

    /// Step points (value, cumulative probability), ascending.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &v)| (v, (i + 1) as f64 / n))
    }
}

/// Shortest-roundtrip decimal formatting; integral values keep a ".0" suffix
/// so CSV columns stay typed as floats.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() && x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// Write a CSV file with a header row. Fields must not contain commas.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "CSV row width mismatch");
        let _ = writeln!(out, "{}", row.join(","));
    }
    fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

/// Write labeled ECDFs as `metric,error,cumulative_prob` rows.
pub fn write_ecdf_csv<P: AsRef<Path>>(path: P, groups: &[(&str, &Ecdf)]) -> Result<()> {
    let mut rows = Vec::new();
    for (label, ecdf) in groups {
        for (value, prob) in ecdf.points() {
            rows.push(vec![label.to_string(), fmt_f64(value), fmt_f64(prob)]);
        }
    }
    write_csv(path, &["metric", "error", "cumulative_prob"], &rows)
}
