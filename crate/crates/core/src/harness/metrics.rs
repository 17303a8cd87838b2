//! Mean absolute error maps and their histogram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Stack;

/// Upper edges of the first four histogram bins; the fifth is open.
pub const BIN_EDGES: [f64; 4] = [0.01, 0.015, 0.02, 0.025];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: [f64; 4],
    pub counts: [u64; 5],
    pub fractions: [f64; 5],
}

impl Histogram {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let mut counts = [0u64; 5];
        for v in values {
            let bin = BIN_EDGES.iter().position(|&e| v < e).unwrap_or(4);
            // the fourth bin is closed on the right
            let bin = if bin == 4 && v <= BIN_EDGES[3] { 3 } else { bin };
            counts[bin] += 1;
        }
        let total: u64 = counts.iter().sum();
        let fractions = counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 });
        Histogram { edges: BIN_EDGES, counts, fractions }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-pixel MAE over evaluated pixels.
    pub mae_mean: f64,
    /// Per-pixel MAE in row-major order; `None` where nothing was evaluated.
    pub mae_map: Vec<Option<f64>>,
    pub histogram: Histogram,
    pub evaluated_pixels: usize,
    pub evaluated_samples: usize,
}

/// Per-pixel MAE between `truth` and `estimate` over the samples where
/// `mask` is true. `mask` is indexed like the stacks' sample vectors.
pub fn evaluate_mae(truth: &Stack, estimate: &Stack, mask: &[bool]) -> Result<EvalReport> {
    if truth.height() != estimate.height()
        || truth.width() != estimate.width()
        || truth.values.len() != estimate.values.len()
    {
        return Err(Error::shape("truth and estimate differ in shape"));
    }
    if mask.len() != truth.values.len() {
        return Err(Error::shape(format!(
            "mask has {} entries for {} samples",
            mask.len(),
            truth.values.len()
        )));
    }
    let plane = truth.pixels();
    let mut sum = vec![0.0f64; plane];
    let mut count = vec![0usize; plane];
    for (o, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        sum[o % plane] += (truth.values[o] as f64 - estimate.values[o] as f64).abs();
        count[o % plane] += 1;
    }
    let evaluated_samples: usize = count.iter().sum();
    if evaluated_samples == 0 {
        return Err(Error::param("evaluation mask selects no samples"));
    }
    let mae_map: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let evaluated: Vec<f64> = mae_map.iter().flatten().copied().collect();
    let mae_mean = evaluated.iter().sum::<f64>() / evaluated.len() as f64;
    Ok(EvalReport {
        mae_mean,
        histogram: Histogram::from_values(evaluated.iter().copied()),
        evaluated_pixels: evaluated.len(),
        evaluated_samples,
        mae_map,
    })
}

/// Mask of the listed flat sample indices.
pub fn mask_from_indices(len: usize, indices: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    for &o in indices {
        *mask
            .get_mut(o)
            .ok_or_else(|| Error::param(format!("sample index {o} outside a stack of {len}")))? = true;
    }
    Ok(mask)
}

/// Mask of every unpadded sample where `truth` is valid.
pub fn whole_series_mask(truth: &Stack) -> Vec<bool> {
    let n = truth.data_len() * truth.pixels();
    (0..truth.values.len())
        .map(|o| o < n && truth.reliability[o].is_valid())
        .collect()
}
