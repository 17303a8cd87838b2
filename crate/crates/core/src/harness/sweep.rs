//! Parameter sweeps: add gaps, fill them with each method, score the MAE at
//! the added gaps only.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_mae, mask_from_indices};
use super::scenario::{apply_scenario, ScenarioOutcome, ScenarioSpec};
use crate::error::{Error, Result};
use crate::grid::Stack;
use crate::pipeline::{fill_gaps_where, linear_fill, PipelineParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Completion on the `(pixels × nd × ny)` rearranged tensor.
    Tensor,
    /// Completion on the raw `(rows × cols × T)` tensor.
    TensorOriginalForm,
    /// Per-pixel linear interpolation in time.
    Linear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tensor => "tensor",
            Method::TensorOriginalForm => "tensor-original",
            Method::Linear => "linear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tensor" => Ok(Method::Tensor),
            "tensor-original" | "original" => Ok(Method::TensorOriginalForm),
            "linear" => Ok(Method::Linear),
            other => Err(Error::param(format!(
                "unknown method {other:?} (expected tensor, tensor-original or linear)"
            ))),
        }
    }
}

/// One point of a sweep: a gap scenario and the tile size to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    /// Value written to the `setting` column.
    pub label: String,
    pub scenario: ScenarioSpec,
    pub patch_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub setting: String,
    pub method: Method,
    /// `None` when the setting failed.
    pub mae_mean: Option<f64>,
    pub seconds: f64,
}

/// Random-gap settings at the given missing rates (percent).
pub fn rate_settings(rates_percent: &[u32], patch_size: usize, seed: u64) -> Vec<SweepSetting> {
    rates_percent
        .iter()
        .map(|&r| SweepSetting {
            label: r.to_string(),
            scenario: ScenarioSpec::Random { target_rate: r as f64 / 100.0, seed },
            patch_size,
        })
        .collect()
}

/// Placement of the square block for gap-length sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockPlacement {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub t_start: usize,
}

impl BlockPlacement {
    /// A square of side `size` near the centre of the scene, starting a
    /// quarter into the middle year. The corner is snapped down to a
    /// multiple of `align` (the tile size) so the block covers whole tiles.
    pub fn centred(stack: &Stack, size: usize, align: usize) -> Self {
        let snap = |free: usize| (free / 2) / align.max(1) * align.max(1);
        BlockPlacement {
            x: snap(stack.width().saturating_sub(size)),
            y: snap(stack.height().saturating_sub(size)),
            size,
            t_start: (stack.ny() / 2) * stack.nd() + stack.nd() / 4,
        }
    }
}

pub fn gap_length_settings(lengths: &[usize], block: BlockPlacement, patch_size: usize) -> Vec<SweepSetting> {
    lengths
        .iter()
        .map(|&gap_length| SweepSetting {
            label: gap_length.to_string(),
            scenario: ScenarioSpec::Block {
                x: block.x,
                y: block.y,
                size: block.size,
                t_start: block.t_start,
                gap_length,
            },
            patch_size,
        })
        .collect()
}

/// Tile-size settings, all with the same random-gap scenario.
pub fn patch_size_settings(sizes: &[usize], target_rate: f64, seed: u64) -> Vec<SweepSetting> {
    sizes
        .iter()
        .map(|&patch_size| SweepSetting {
            label: patch_size.to_string(),
            scenario: ScenarioSpec::Random { target_rate, seed },
            patch_size,
        })
        .collect()
}

/// Fills the gaps of `outcome.stack` with `method` and returns the MAE at the
/// added gaps. Only tiles holding an added gap are completed.
pub fn score_method(outcome: &ScenarioOutcome, base: &Stack, method: Method, params: &PipelineParams) -> Result<f64> {
    if outcome.gaps.is_empty() {
        return Err(Error::param("scenario added no gaps to evaluate"));
    }
    let estimate = match method {
        Method::Linear => linear_fill(&outcome.stack, params.workers)?,
        Method::Tensor | Method::TensorOriginalForm => {
            let mut p = params.clone();
            p.completion.use_rearranged_form = method == Method::Tensor;
            let plane = base.pixels();
            let w = base.width();
            let mut touched = vec![false; plane];
            for &o in &outcome.gaps {
                touched[o % plane] = true;
            }
            fill_gaps_where(&outcome.stack, &p, |tile| {
                (tile.row0..tile.row0 + tile.rows)
                    .any(|r| (tile.col0..tile.col0 + tile.cols).any(|c| touched[r * w + c]))
            })?
        }
    };
    let mask = mask_from_indices(base.values.len(), &outcome.gaps)?;
    Ok(evaluate_mae(base, &estimate, &mask)?.mae_mean)
}

/// Runs every setting with every method, in order. A failing setting is
/// logged and reported with no MAE; the sweep continues.
pub fn run_sweep(
    base: &Stack,
    settings: &[SweepSetting],
    methods: &[Method],
    params: &PipelineParams,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for setting in settings {
        let outcome = apply_scenario(base, &setting.scenario);
        for &method in methods {
            let start = Instant::now();
            let p = PipelineParams { patch_size: setting.patch_size, ..params.clone() };
            let mae = outcome
                .as_ref()
                .map_err(|e| Error::param(e.to_string()))
                .and_then(|o| score_method(o, base, method, &p));
            let seconds = start.elapsed().as_secs_f64();
            let mae_mean = match mae {
                Ok(v) => {
                    info!("setting {} {method}: MAE {v:.5} in {seconds:.1}s", setting.label);
                    Some(v)
                }
                Err(e) => {
                    warn!("setting {} {method} failed: {e}", setting.label);
                    None
                }
            };
            rows.push(SweepRow { setting: setting.label.clone(), method, mae_mean, seconds });
        }
    }
    rows
}

/// Writes `setting,method,mae_mean,seconds`. Failed settings have `NaN` MAE.
/// Without `timing` the seconds column is left empty, so identical sweeps
/// give identical files.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "method", "mae_mean", "seconds"])?;
    for row in rows {
        let mae = row.mae_mean.map_or_else(|| "NaN".to_string(), |v| format!("{v:.9}"));
        let seconds = if timing { format!("{:.3}", row.seconds) } else { String::new() };
        w.write_record([row.setting.as_str(), row.method.name(), &mae, &seconds])?;
    }
    w.flush()?;
    Ok(())
}
