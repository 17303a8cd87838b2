//! Scene-level reconstruction: tiling, per-patch completion, mosaicking and
//! per-pixel trend filtering, plus the linear-interpolation baseline.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{complete_patch, CompletionParams};
use crate::error::{Error, Result};
use crate::grid::{Patch, Reliability, Stack};
use crate::trend::{iterative_filter, FilterParams, SampleFlag, Series};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Side length of the square tiles; edge tiles may be smaller.
    pub patch_size: usize,
    pub completion: CompletionParams,
    pub filter: FilterParams,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            patch_size: 8,
            completion: CompletionParams::default(),
            filter: FilterParams::default(),
            workers: 0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::param(format!(
                "patch_size must be at least 2, got {}",
                self.patch_size
            )));
        }
        self.completion.validate()?;
        self.filter.validate()
    }

    fn run<R: Send>(&self, job: impl FnOnce() -> R + Send) -> Result<R> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(job))
    }
}

/// A rectangular block of the scene grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tile {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row0 + self.rows).contains(&row)
            && (self.col0..self.col0 + self.cols).contains(&col)
    }
}

/// Non-overlapping `size × size` tiles in row-major order covering the grid.
pub fn tiles(height: usize, width: usize, size: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for row0 in (0..height).step_by(size.max(1)) {
        for col0 in (0..width).step_by(size.max(1)) {
            out.push(Tile {
                row0,
                col0,
                rows: size.min(height - row0),
                cols: size.min(width - col0),
            });
        }
    }
    out
}

/// Linear interpolation between the nearest valid neighbours; leading and
/// trailing gaps take the nearest valid value.
pub fn prefill_linear(values: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    if values.len() != valid.len() {
        return Err(Error::shape(format!(
            "{} values but {} validity flags",
            values.len(),
            valid.len()
        )));
    }
    let known: Vec<usize> = (0..values.len()).filter(|&t| valid[t]).collect();
    let (&first, &last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptySeries),
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b - a) as f64;
        for t in a + 1..b {
            let f = (t - a) as f64 / span;
            out[t] = values[a] + f * (values[b] - values[a]);
        }
    }
    Ok(out)
}

/// Marks pixels with no valid sample as fill value and NODATA over the
/// whole series, and resets the padding steps.
fn blank_empty_pixels(out: &mut Stack, counts: &[usize]) {
    let (w, t_len) = (out.width(), out.time_len());
    for (px, _) in counts.iter().enumerate().filter(|(_, &c)| c == 0) {
        let (row, col) = (px / w, px % w);
        let fill = vec![out.fill_value; t_len];
        out.set_series(row, col, &fill, &vec![Reliability::NoData; t_len]);
    }
    out.clear_pad();
}

fn complete_tile(stack: &Stack, tile: Tile, params: &PipelineParams) -> Result<Patch> {
    let patch = stack.extract_patch(tile.row0, tile.col0, tile.rows, tile.cols);
    complete_patch(&patch, stack.nd(), &params.completion)
}

/// Tensor completion of the tiles selected by `select`; other tiles keep
/// their input values and codes.
///
/// Completed samples become GOOD. A tile whose completion fails is set to
/// fill value and NODATA, and so is every pixel without a valid sample.
pub fn fill_gaps_where(
    stack: &Stack,
    params: &PipelineParams,
    select: impl Fn(&Tile) -> bool + Sync,
) -> Result<Stack> {
    params.validate()?;
    let chosen: Vec<Tile> = tiles(stack.height(), stack.width(), params.patch_size)
        .into_iter()
        .filter(|t| select(t))
        .collect();
    let results: Vec<Result<Patch>> =
        params.run(|| chosen.par_iter().map(|&t| complete_tile(stack, t, params)).collect())?;

    let mut out = stack.clone();
    let t_len = stack.time_len();
    for (tile, result) in chosen.iter().zip(results) {
        let code = match result {
            Ok(patch) => {
                out.insert_patch(tile.row0, tile.col0, &patch);
                Reliability::Good
            }
            Err(e) => {
                if !matches!(e, Error::EmptyPatch) {
                    warn!(
                        "tile at ({}, {}) left unfilled: {e}",
                        tile.row0, tile.col0
                    );
                }
                for i in 0..tile.rows {
                    for j in 0..tile.cols {
                        let fill = vec![out.fill_value; t_len];
                        out.set_series(
                            tile.row0 + i,
                            tile.col0 + j,
                            &fill,
                            &vec![Reliability::NoData; t_len],
                        );
                    }
                }
                continue;
            }
        };
        for i in 0..tile.rows {
            for j in 0..tile.cols {
                for t in 0..t_len {
                    let o = out.index(t, tile.row0 + i, tile.col0 + j);
                    out.reliability[o] = code;
                }
            }
        }
    }
    blank_empty_pixels(&mut out, &stack.valid_counts());
    Ok(out)
}

/// Tensor completion of every tile.
pub fn fill_gaps(stack: &Stack, params: &PipelineParams) -> Result<Stack> {
    fill_gaps_where(stack, params, |_| true)
}

/// Runs the three-pass trend filter on every filled pixel of `filled`.
///
/// `source` supplies the original codes: GOOD samples are trusted, all others
/// (marginal or reconstructed) are treated as noisy. Padding steps are
/// excluded. A pixel whose filter fails keeps its completed values.
pub fn filter_scene(filled: &Stack, source: &Stack, params: &PipelineParams) -> Result<Stack> {
    params.validate()?;
    if !filled.same_grid(source) {
        return Err(Error::shape("filled and source stacks differ in shape"));
    }
    let n = filled.data_len();
    let mut out = filled.clone();
    if n < 3 {
        return Ok(out);
    }
    let (h, w) = (filled.height(), filled.width());
    let smoothed: Vec<Option<Vec<f64>>> = params.run(|| {
        (0..h * w)
            .into_par_iter()
            .map(|px| {
                let (row, col) = (px / w, px % w);
                let codes = filled.reliability_series(row, col);
                if codes[..n].iter().any(|&c| c == Reliability::NoData) {
                    return None;
                }
                let values: Vec<f64> = filled.series(row, col)[..n].iter().map(|&v| v as f64).collect();
                let flags = source.reliability_series(row, col)[..n]
                    .iter()
                    .map(|&c| SampleFlag::from(c))
                    .collect();
                let series = Series::new(values, flags).ok()?;
                match iterative_filter(&series, &params.filter) {
                    Ok(z) => Some(z),
                    Err(e) => {
                        warn!("pixel ({row}, {col}) left unfiltered: {e}");
                        None
                    }
                }
            })
            .collect()
    })?;
    for (px, z) in smoothed.into_iter().enumerate() {
        if let Some(z) = z {
            let (row, col) = (px / w, px % w);
            for (t, v) in z.into_iter().enumerate() {
                let o = out.index(t, row, col);
                out.values[o] = v as f32;
            }
        }
    }
    Ok(out)
}

/// Gap filling followed by trend filtering; the full reconstruction.
pub fn reconstruct_scene(stack: &Stack, params: &PipelineParams) -> Result<Stack> {
    let filled = fill_gaps(stack, params)?;
    filter_scene(&filled, stack, params)
}

/// Per-pixel linear interpolation in time over the unpadded steps.
pub fn linear_fill(stack: &Stack, workers: usize) -> Result<Stack> {
    let n = stack.data_len();
    let (h, w) = (stack.height(), stack.width());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let filled: Vec<Option<Vec<f64>>> = pool.install(|| {
        (0..h * w)
            .into_par_iter()
            .map(|px| {
                let (row, col) = (px / w, px % w);
                let values: Vec<f64> = stack.series(row, col)[..n].iter().map(|&v| v as f64).collect();
                let valid: Vec<bool> =
                    stack.reliability_series(row, col)[..n].iter().map(|c| c.is_valid()).collect();
                prefill_linear(&values, &valid).ok()
            })
            .collect()
    });
    let mut out = stack.clone();
    for (px, z) in filled.into_iter().enumerate() {
        if let Some(z) = z {
            let (row, col) = (px / w, px % w);
            for (t, v) in z.into_iter().enumerate() {
                let o = out.index(t, row, col);
                out.values[o] = v as f32;
                out.reliability[o] = Reliability::Good;
            }
        }
    }
    blank_empty_pixels(&mut out, &stack.valid_counts());
    Ok(out)
}
