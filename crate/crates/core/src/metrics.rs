//! Vehicle-pair speed-deviation metric and field comparison.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::EulerianField;
use crate::tracker::WavePath;

/// Speed change between two successive points of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub path: usize,
    /// Index of the later point along the path (1 = first crossing after the origin).
    pub step: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationSet {
    pub values: Vec<Deviation>,
}

impl DeviationSet {
    pub fn signed(&self) -> Vec<f64> {
        self.values.iter().map(|d| d.value).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Successive speed differences `v_{p,i+1} - v_{p,i}` along every path, in order.
pub fn deviation_set(paths: &[WavePath]) -> DeviationSet {
    let mut values = Vec::new();
    for (p, path) in paths.iter().enumerate() {
        let speeds = path.speeds();
        for (i, w) in speeds.windows(2).enumerate() {
            values.push(Deviation {
                path: p,
                step: i + 1,
                value: w[1] - w[0],
            });
        }
    }
    DeviationSet { values }
}

/// Summary of absolute deviations [m/s].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub max: f64,
    pub min: f64,
}

impl DeviationStats {
    /// `(name, value)` pairs in report order.
    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("mean", self.mean),
            ("median", self.median),
            ("q1", self.q1),
            ("q3", self.q3),
            ("max", self.max),
            ("min", self.min),
        ]
    }
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `p (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_stats(devs: &DeviationSet) -> Result<DeviationStats> {
    if devs.is_empty() {
        return Err(Error::Empty("deviation set".into()));
    }
    let mut abs: Vec<f64> = devs.values.iter().map(|d| d.value.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mean = abs.iter().sum::<f64>() / abs.len() as f64;
    Ok(DeviationStats {
        mean,
        median: quantile_sorted(&abs, 0.5),
        q1: quantile_sorted(&abs, 0.25),
        q3: quantile_sorted(&abs, 0.75),
        max: abs[abs.len() - 1],
        min: abs[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub center: f64,
    pub density: f64,
}

/// Default bin width [m/s].
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// Density-normalised histogram of signed deviations. Bins are centred on
/// integer multiples of `width`, so a value of exactly 0 sits in the middle of
/// a bin. Empty bins between the extremes are included.
pub fn histogram(devs: &DeviationSet, width: f64) -> Result<Vec<HistogramBin>> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bin width must be > 0, got {width}"
        )));
    }
    if devs.is_empty() {
        return Ok(Vec::new());
    }
    let keys: Vec<i64> = devs
        .values
        .iter()
        .map(|d| (d.value / width).round() as i64)
        .collect();
    let lo = *keys.iter().min().unwrap();
    let hi = *keys.iter().max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for k in &keys {
        counts[(k - lo) as usize] += 1;
    }
    let norm = 1.0 / (keys.len() as f64 * width);
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| HistogramBin {
            center: (lo + i as i64) as f64 * width,
            density: c as f64 * norm,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldComponent {
    Rho,
    V,
}

/// Space-time root-mean-square difference of one component of two fields
/// defined on the same times and cells.
pub fn field_rmse(a: &EulerianField, b: &EulerianField, component: FieldComponent) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-9)
    {
        return Err(Error::GridMismatch(
            "fields are sampled at different times".into(),
        ));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ra, rb) in a.states.iter().zip(&b.states) {
        for (sa, sb) in ra.iter().zip(rb) {
            let d = match component {
                FieldComponent::Rho => sa.rho - sb.rho,
                FieldComponent::V => sa.v - sb.v,
            };
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("field".into()));
    }
    Ok((sum / n as f64).sqrt())
}
