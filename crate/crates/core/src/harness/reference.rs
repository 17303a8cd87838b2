//! One-year reference curves and simulated contamination.

use crate::error::{Error, Result};
use crate::grid::{Reliability, Stack};

/// Minimum number of GOOD samples across years for a day to be averaged.
pub const MIN_GOOD_PER_DAY: usize = 4;

/// Value of a MARGINAL sample relative to the reference.
pub const MARGINAL_FACTOR: f64 = 0.95;

/// Per-pixel mean of the GOOD samples at each step of the year.
///
/// Days with fewer than [`MIN_GOOD_PER_DAY`] GOOD samples are interpolated
/// linearly from the nearest qualifying days, treating the year as cyclic.
/// A pixel with no qualifying day is NODATA throughout. The result has one
/// year.
pub fn build_reference(stack: &Stack) -> Result<Stack> {
    if stack.ny() < MIN_GOOD_PER_DAY {
        return Err(Error::param(format!(
            "reference needs at least {MIN_GOOD_PER_DAY} years, stack has {}",
            stack.ny()
        )));
    }
    let (h, w, nd) = (stack.height(), stack.width(), stack.nd());
    let mut out = Stack::empty(h, w, nd, 1, stack.fill_value)?;
    for row in 0..h {
        for col in 0..w {
            let values = stack.series(row, col);
            let codes = stack.reliability_series(row, col);
            let curve = reference_curve(&values, &codes, nd);
            if let Some(curve) = curve {
                let v: Vec<f32> = curve.iter().map(|&x| x as f32).collect();
                out.set_series(row, col, &v, &vec![Reliability::Good; nd]);
            }
        }
    }
    Ok(out)
}

fn reference_curve(values: &[f32], codes: &[Reliability], nd: usize) -> Option<Vec<f64>> {
    let mut day: Vec<Option<f64>> = (0..nd)
        .map(|d| {
            let good: Vec<f64> = (d..values.len())
                .step_by(nd)
                .filter(|&t| codes[t] == Reliability::Good)
                .map(|t| values[t] as f64)
                .collect();
            (good.len() >= MIN_GOOD_PER_DAY).then(|| good.iter().sum::<f64>() / good.len() as f64)
        })
        .collect();
    let known: Vec<usize> = (0..nd).filter(|&d| day[d].is_some()).collect();
    if known.is_empty() {
        return None;
    }
    for d in 0..nd {
        if day[d].is_some() {
            continue;
        }
        // nearest qualifying days before and after, wrapping around the year
        let prev = (1..nd).map(|k| (d + nd - k) % nd).find(|&e| known.contains(&e))?;
        let next = (1..nd).map(|k| (d + k) % nd).find(|&e| known.contains(&e))?;
        let back = ((d + nd - prev) % nd) as f64;
        let ahead = ((next + nd - d) % nd) as f64;
        let (a, b) = (day[prev]?, day[next]?);
        day[d] = Some(if prev == next { a } else { a + (b - a) * back / (back + ahead) });
    }
    day.into_iter().collect()
}

/// Repeats a one-year stack over `ny` years with the given padding.
pub fn expand_reference(reference: &Stack, ny: usize, pad: usize) -> Result<Stack> {
    if reference.ny() != 1 {
        return Err(Error::shape(format!(
            "reference must span one year, has {}",
            reference.ny()
        )));
    }
    let plane = reference.pixels();
    let year = reference.nd() * plane;
    let total = (ny * reference.nd() - pad) * plane;
    let values: Vec<f32> = (0..total).map(|o| reference.values[o % year]).collect();
    let codes: Vec<Reliability> = (0..total).map(|o| reference.reliability[o % year]).collect();
    Stack::new(
        reference.height(),
        reference.width(),
        reference.nd(),
        values,
        codes,
        reference.fill_value,
    )
}

/// Observation a sensor with the given reliability codes would record if the
/// reference were the truth: GOOD copies it, MARGINAL scales it by
/// [`MARGINAL_FACTOR`], CLOUDY and NODATA are missing. Pixels without a
/// reference are NODATA throughout.
pub fn simulate_contamination(reference: &Stack, mask: &Stack) -> Result<Stack> {
    if reference.ny() != 1
        || reference.height() != mask.height()
        || reference.width() != mask.width()
        || reference.nd() != mask.nd()
    {
        return Err(Error::shape(
            "reference must be one year on the same grid and nd as the mask",
        ));
    }
    let truth = expand_reference(reference, mask.ny(), mask.pad())?;
    let mut out = mask.clone();
    out.fill_value = reference.fill_value;
    for o in 0..out.values.len() {
        let (r, c) = (truth.reliability[o], mask.reliability[o]);
        let (v, code) = match c {
            _ if r == Reliability::NoData => (out.fill_value, Reliability::NoData),
            Reliability::Good => (truth.values[o], c),
            Reliability::Marginal => ((truth.values[o] as f64 * MARGINAL_FACTOR) as f32, c),
            Reliability::Cloudy | Reliability::NoData => (out.fill_value, c),
        };
        out.values[o] = v;
        out.reliability[o] = code;
    }
    Ok(out)
}
