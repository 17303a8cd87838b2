//! Seeded synthetic vegetation-index scenes.
//!
//! Each pixel follows a double-logistic seasonal curve whose baseline,
//! amplitude and green-up/senescence dates vary smoothly in space. Every
//! year shifts the dates and scales the amplitude by a spatially smooth
//! perturbation, on top of a mild linear trend. Clouds are smooth random
//! fields thresholded per step, with more cover in the wet season; the
//! fringe of each cloud is MARGINAL with a downward-biased value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Reliability, Stack};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub nd: usize,
    pub ny: usize,
    pub seed: u64,
    /// Mean fraction of CLOUDY samples.
    pub cloud_rate: f64,
    /// Mean fraction of MARGINAL samples at cloud edges.
    pub marginal_rate: f64,
    /// Fraction of isolated NODATA samples.
    pub nodata_rate: f64,
    /// Standard deviation of the noise on GOOD samples.
    pub noise: f64,
    pub fill_value: f32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            height: 64,
            width: 64,
            nd: 23,
            ny: 18,
            seed: 1,
            cloud_rate: 0.23,
            marginal_rate: 0.08,
            nodata_rate: 0.01,
            noise: 0.004,
            fill_value: -1.0,
        }
    }
}

/// A synthetic scene: the noiseless truth and the contaminated observation.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub truth: Stack,
    pub observed: Stack,
}

/// Sum of random low-frequency cosines, rescaled to `[0, 1]` over the grid.
struct SmoothField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, count: usize, max_freq: f64) -> Self {
        let waves = (0..count)
            .map(|_| {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let freq = rng.gen_range(0.2..1.0) * max_freq;
                (
                    freq * angle.cos(),
                    freq * angle.sin(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        SmoothField { waves }
    }

    fn sample(&self, height: usize, width: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..height * width)
            .map(|px| {
                let (r, c) = ((px / width) as f64, (px % width) as f64);
                self.waves
                    .iter()
                    .map(|(fr, fc, phase, amp)| amp * (fr * r + fc * c + phase).cos())
                    .sum()
            })
            .collect();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        for x in &mut v {
            *x = (*x - lo) / span;
        }
        v
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Value of the `q`-quantile of `v` (nearest rank).
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    s[k]
}

pub fn synthesize(params: &SynthParams) -> Result<SynthScene> {
    let &SynthParams { height, width, nd, ny, .. } = params;
    if height == 0 || width == 0 || nd < 2 || ny == 0 {
        return Err(Error::param("synthetic scene needs positive dimensions and nd >= 2"));
    }
    for (name, rate) in [
        ("cloud_rate", params.cloud_rate),
        ("marginal_rate", params.marginal_rate),
        ("nodata_rate", params.nodata_rate),
    ] {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("{name} must lie in [0, 1), got {rate}")));
        }
    }
    if params.cloud_rate + params.marginal_rate >= 0.9 {
        return Err(Error::param("cloud_rate + marginal_rate must stay below 0.9"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let plane = height * width;
    let span = height.max(width) as f64;
    let field = |rng: &mut ChaCha8Rng, freq: f64| SmoothField::new(rng, 6, freq / span).sample(height, width);

    let base: Vec<f64> = field(&mut rng, 6.0).iter().map(|f| 0.12 + 0.2 * f).collect();
    let amp: Vec<f64> = field(&mut rng, 6.0).iter().map(|f| 0.25 + 0.4 * f).collect();
    let nd_f = nd as f64;
    let green_up: Vec<f64> = field(&mut rng, 5.0).iter().map(|f| nd_f * (0.22 + 0.12 * f)).collect();
    let season: Vec<f64> = field(&mut rng, 5.0).iter().map(|f| nd_f * (0.35 + 0.15 * f)).collect();
    let trend: Vec<f64> = field(&mut rng, 3.0).iter().map(|f| 0.004 * (f - 0.5)).collect();
    let steep = 0.9 * 23.0 / nd_f;

    let mut truth = vec![0f32; plane * nd * ny];
    for y in 0..ny {
        let year_shift = gaussian(&mut rng) * 0.04 * nd_f;
        let shift_field = field(&mut rng, 4.0);
        let amp_field = field(&mut rng, 4.0);
        let amp_scale = 1.0 + 0.08 * gaussian(&mut rng);
        for px in 0..plane {
            let start = green_up[px] + year_shift + 0.04 * nd_f * (shift_field[px] - 0.5);
            let end = start + season[px];
            let a = amp[px] * amp_scale * (1.0 + 0.1 * (amp_field[px] - 0.5));
            let level = base[px] + trend[px] * y as f64;
            for d in 0..nd {
                let x = d as f64;
                let v = level + a * (logistic(steep * (x - start)) - logistic(steep * (x - end)));
                truth[((y * nd + d) * height) * width + px] = v.clamp(-0.2, 0.95) as f32;
            }
        }
    }

    let t_len = nd * ny;
    let mut values = truth.clone();
    let mut codes = vec![Reliability::Good; values.len()];
    for t in 0..t_len {
        let d = (t % nd) as f64;
        // wet season peaks mid-year
        let wet = 1.0 + 0.6 * (std::f64::consts::TAU * (d / nd_f - 0.35)).cos();
        let cloudy = (params.cloud_rate * wet).min(0.85);
        let fringe = (params.marginal_rate * wet).min(0.95 - cloudy);
        let cloud = field(&mut rng, 8.0);
        let cut_cloud = quantile(&cloud, 1.0 - cloudy);
        let cut_fringe = quantile(&cloud, 1.0 - cloudy - fringe);
        for px in 0..plane {
            let o = t * plane + px;
            let c = cloud[px];
            if cloudy > 0.0 && c > cut_cloud {
                codes[o] = Reliability::Cloudy;
                values[o] = params.fill_value;
            } else if fringe > 0.0 && c > cut_fringe {
                codes[o] = Reliability::Marginal;
                let haze = rng.gen_range(0.85..0.98);
                values[o] = (truth[o] as f64 * haze) as f32;
            } else {
                values[o] = (truth[o] as f64 + params.noise * gaussian(&mut rng)) as f32;
            }
            if rng.gen::<f64>() < params.nodata_rate {
                codes[o] = Reliability::NoData;
                values[o] = params.fill_value;
            }
        }
    }

    let truth_codes = vec![Reliability::Good; truth.len()];
    Ok(SynthScene {
        truth: Stack::new(height, width, nd, truth, truth_codes, params.fill_value)?,
        observed: Stack::new(height, width, nd, values, codes, params.fill_value)?,
    })
}
