//! Oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorfill::grid::Tensor3;
use tensorfill::trend::second_diff_matrix;

/// Ordinary least-squares line through `(t, y_t)`.
pub fn affine_fit(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        sxy += (t as f64 - t_mean) * (v - y_mean);
        sxx += (t as f64 - t_mean).powi(2);
    }
    let slope = sxy / sxx;
    (0..y.len()).map(|t| y_mean + slope * (t as f64 - t_mean)).collect()
}

pub fn objective(y: &[f64], z: &[f64], lambda: f64) -> f64 {
    let d = second_diff_matrix(y.len()).unwrap();
    let dz = d * DVector::from_column_slice(z);
    0.5 * y.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + lambda * dz.lp_norm(1)
}

/// Worst violation of the optimality conditions of `½‖y − z‖² + λ‖Dz‖₁`.
///
/// The multiplier is recovered by least squares from `λDᵀg = y − z`; the
/// residual of that fit, `|g| ≤ 1`, and `g = sign(Dz)` off the zero set are
/// all folded into one number.
pub fn optimality_residual(y: &[f64], z: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let d = second_diff_matrix(n).unwrap();
    let r = DVector::from_fn(n, |i, _| y[i] - z[i]);
    let dt = d.transpose() * lambda;
    let g = (dt.transpose() * &dt).lu().solve(&(dt.transpose() * &r)).unwrap();
    let fit = (&dt * &g - &r).amax();
    let dz = &d * DVector::from_column_slice(z);
    let scale = z.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut worst = fit;
    for i in 0..n - 2 {
        worst = worst.max(g[i].abs() - 1.0);
        if dz[i].abs() > 1e-7 * scale {
            worst = worst.max((g[i] - dz[i].signum()).abs());
        }
    }
    worst
}

pub fn noisy_seasonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let phase = rng.gen_range(0.0..6.28);
    (0..n)
        .map(|t| 0.5 + 0.3 * (t as f64 * 0.27 + phase).sin() + rng.gen_range(-0.05..0.05))
        .collect()
}

/// Outer product of three random positive vectors; entries lie in [0.1, 0.9].
pub fn rank_one(shape: [usize; 3], seed: u64) -> Tensor3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..shape[0]).map(|_| rng.gen_range(0.47..0.96)).collect();
    let b: Vec<f64> = (0..shape[1]).map(|_| rng.gen_range(0.47..0.99)).collect();
    let c: Vec<f64> = (0..shape[2]).map(|_| rng.gen_range(0.47..0.99)).collect();
    Tensor3::from_fn(shape, |i, j, k| a[i] * b[j] * c[k])
}
