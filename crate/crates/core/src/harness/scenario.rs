//! Artificial gaps added to a stack for evaluation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Reliability, Stack};

/// Allowed distance between the achieved and requested missing fraction.
pub const RATE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Uniformly drawn valid samples become CLOUDY until the missing
    /// fraction of the stack reaches `target_rate`.
    Random { target_rate: f64, seed: u64 },
    /// A `size × size` square with top-left pixel `(row = y, col = x)` is
    /// CLOUDY for `gap_length` steps from `t_start`.
    Block {
        x: usize,
        y: usize,
        size: usize,
        t_start: usize,
        gap_length: usize,
    },
}

/// The stack with added gaps, the flat sample indices that were valid and
/// are now missing (ascending), and their original values.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub stack: Stack,
    pub gaps: Vec<usize>,
    pub withheld: Vec<f32>,
}

/// Missing fraction over the unpadded samples.
pub fn missing_rate(stack: &Stack) -> f64 {
    let n = stack.data_len() * stack.pixels();
    let missing = stack.reliability[..n].iter().filter(|c| !c.is_valid()).count();
    missing as f64 / n as f64
}

pub fn apply_scenario(stack: &Stack, spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    let n = stack.data_len() * stack.pixels();
    let mut gaps = match *spec {
        ScenarioSpec::Random { target_rate, seed } => {
            if !(target_rate > 0.0 && target_rate < 1.0) {
                return Err(Error::param(format!(
                    "target rate must lie in (0, 1), got {target_rate}"
                )));
            }
            let current = stack.reliability[..n].iter().filter(|c| !c.is_valid()).count();
            let wanted = (target_rate * n as f64).round() as usize;
            if (wanted as f64) < current as f64 - RATE_TOLERANCE * n as f64 {
                return Err(Error::param(format!(
                    "target rate {target_rate} is below the current missing rate {:.4}",
                    current as f64 / n as f64
                )));
            }
            let valid: Vec<usize> = (0..n).filter(|&o| stack.reliability[o].is_valid()).collect();
            let extra = wanted.saturating_sub(current);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, valid.len(), extra)
                .into_iter()
                .map(|k| valid[k])
                .collect::<Vec<_>>()
        }
        ScenarioSpec::Block { x, y, size, t_start, gap_length } => {
            if size == 0 || gap_length == 0 {
                return Err(Error::param("block size and gap length must be positive"));
            }
            if x + size > stack.width() || y + size > stack.height() || t_start + gap_length > stack.data_len() {
                return Err(Error::param(format!(
                    "block {size}x{size} at ({x}, {y}) over steps {t_start}..{} leaves the \
                     {}x{}x{} stack",
                    t_start + gap_length,
                    stack.width(),
                    stack.height(),
                    stack.data_len()
                )));
            }
            let mut out = Vec::new();
            for t in t_start..t_start + gap_length {
                for row in y..y + size {
                    for col in x..x + size {
                        let o = stack.index(t, row, col);
                        if stack.reliability[o].is_valid() {
                            out.push(o);
                        }
                    }
                }
            }
            out
        }
    };
    gaps.sort_unstable();

    let mut out = stack.clone();
    let withheld = gaps.iter().map(|&o| stack.values[o]).collect();
    for &o in &gaps {
        out.values[o] = stack.fill_value;
        out.reliability[o] = Reliability::Cloudy;
    }
    Ok(ScenarioOutcome { stack: out, gaps, withheld })
}
