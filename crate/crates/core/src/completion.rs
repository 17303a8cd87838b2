//! Adaptive-weighted low-rank tensor completion.
//!
//! Solves `min Σ w_n r(X_(n))  s.t.  X_Ω = Y_Ω` by ADMM with one auxiliary
//! tensor and one dual per mode (the HaLRTC splitting). The mode weights are
//! re-estimated from the unfolding spectra of the current estimate: a mode
//! whose singular values concentrate in few components gets more weight.
//!
//! The rank surrogate `r` is either the nuclear norm or, by default, the
//! truncated nuclear norm that leaves each mode's leading `k_n` singular
//! values unpenalized. The nuclear norm pulls entries that lie in the span of
//! the dominant components toward zero, which ruins whole missing fibers
//! (a tile missing for several consecutive steps); the truncated form does
//! not.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fold, inverse_rearrange, rearrange, unfold, Mode, Patch, RearrangedTensor, Tensor3};

/// Upper bound on the ADMM penalty.
pub const RHO_MAX: f64 = 1e6;

const EIGEN_MAX_ITERS: usize = 10_000;

/// Mode weights; strictly positive and summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector([f64; 3]);

impl WeightVector {
    pub fn uniform() -> Self {
        WeightVector([1.0 / 3.0; 3])
    }

    pub fn new(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::param(format!("weights must be positive, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("weights must sum to 1, got {sum}")));
        }
        Ok(WeightVector(w))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn get(&self, mode: Mode) -> f64 {
        self.0[mode.index()]
    }
}

/// Penalty standing in for the rank of each unfolding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSurrogate {
    /// Sum of all singular values.
    Nuclear,
    /// Sum of the singular values past the mode's effective rank `k_n`;
    /// the leading `k_n` are not penalized.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    /// Fraction of the singular-value mass that defines a mode's effective rank.
    pub tau: f64,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub rho_growth: f64,
    pub max_iters: usize,
    /// Relative Frobenius change below which iteration stops.
    pub tol: f64,
    pub weight_update_every: usize,
    /// Solve on the `(pixels × nd × ny)` form rather than the raw patch.
    pub use_rearranged_form: bool,
    pub surrogate: RankSurrogate,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            tau: 0.85,
            rho: 1e-2,
            rho_growth: 1.05,
            max_iters: 100,
            tol: 1e-4,
            weight_update_every: 1,
            use_rearranged_form: true,
            surrogate: RankSurrogate::Truncated,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::param(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.rho_growth >= 1.0 && self.rho_growth.is_finite()) {
            return Err(Error::param(format!("rho_growth must be >= 1, got {}", self.rho_growth)));
        }
        if self.max_iters == 0 || self.weight_update_every == 0 {
            return Err(Error::param("max_iters and weight_update_every must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Descending spectrum of one unfolding and its effective rank.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSummary {
    pub singular_values: Vec<f64>,
    pub k: usize,
    /// `k / s`, where `s` is the number of singular values.
    pub k_norm: f64,
}

impl SpectrumSummary {
    pub fn new(singular_values: Vec<f64>, tau: f64) -> Result<Self> {
        let k = spectral_k(&singular_values, tau)?;
        let k_norm = k as f64 / singular_values.len() as f64;
        Ok(SpectrumSummary {
            singular_values,
            k,
            k_norm,
        })
    }
}

/// Eigen-decomposition of the smaller Gram matrix of `m`.
///
/// Returns `(eigenvectors, eigenvalues, wide)` where `wide` means the Gram
/// matrix is `m mᵀ` (left singular vectors), otherwise `mᵀ m`.
fn gram_eigen(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    let (rows, cols) = m.shape();
    let wide = rows <= cols;
    let gram = if wide { m * m.transpose() } else { m.transpose() * m };
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or(Error::SvdFailure { rows, cols })?;
    Ok((eig.eigenvectors, eig.eigenvalues.iter().copied().collect(), wide))
}

/// Singular values of `m`, descending. There are `min(rows, cols)` of them.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let gram = if rows <= cols { m * m.transpose() } else { m.transpose() * m };
    let mut sigma: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma
}

/// Singular value soft-thresholding: `U diag(max(σ - θ, 0)) Vᵀ`.
pub fn svt(m: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    svt_truncated(m, threshold, 0)
}

/// Soft-thresholding that leaves the `keep` largest singular values intact:
/// the proximal step of the truncated nuclear norm.
pub fn svt_truncated(m: &DMatrix<f64>, threshold: f64, keep: usize) -> Result<DMatrix<f64>> {
    if !(threshold >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {threshold}")));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(m.clone());
    }
    let (vectors, values, wide) = gram_eigen(m)?;

    // eigenvalues come unordered; rank them to find the leading `keep`
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let kept: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .filter_map(|(rank, &i)| {
            let sigma = values[i].max(0.0).sqrt();
            if rank < keep {
                (sigma > 0.0).then_some((i, 1.0))
            } else {
                (sigma > threshold).then(|| (i, (sigma - threshold) / sigma))
            }
        })
        .collect();
    if kept.is_empty() {
        return Ok(DMatrix::zeros(rows, cols));
    }

    let n = vectors.nrows();
    let basis = DMatrix::from_fn(n, kept.len(), |r, c| vectors[(r, kept[c].0)]);
    let mut scaled = basis.clone();
    for (c, &(_, f)) in kept.iter().enumerate() {
        scaled.column_mut(c).scale_mut(f);
    }
    // wide: U f Uᵀ M, tall: M V f Vᵀ
    Ok(if wide {
        scaled * (basis.transpose() * m)
    } else {
        (m * basis) * scaled.transpose()
    })
}

/// Smallest `k` whose leading singular values hold at least `tau` of the total.
pub fn spectral_k(sigma: &[f64], tau: f64) -> Result<usize> {
    if sigma.is_empty() {
        return Err(Error::param("empty spectrum"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param(format!("tau must lie in (0, 1), got {tau}")));
    }
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSpectrum);
    }
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s;
        if acc / total >= tau {
            return Ok(i + 1);
        }
    }
    Ok(sigma.len())
}

/// `w_n = (1/k̃_n) / Σ_j (1/k̃_j)`.
pub fn weights_from_normalized_ranks(k_norm: [f64; 3]) -> Result<WeightVector> {
    if k_norm.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
        return Err(Error::param(format!("normalized ranks must lie in (0, 1], got {k_norm:?}")));
    }
    let inv = k_norm.map(|k| 1.0 / k);
    let sum: f64 = inv.iter().sum();
    let mut w = inv.map(|v| v / sum);
    // renormalize once so the sum is 1 to the last ulp or two
    let s: f64 = w.iter().sum();
    w = w.map(|v| v / s);
    WeightVector::new(w)
}

/// Per-mode spectrum summaries of `x`; `None` for an all-zero unfolding.
pub fn mode_spectra(x: &Tensor3<f64>, tau: f64) -> Result<[Option<SpectrumSummary>; 3]> {
    let mut out: [Option<SpectrumSummary>; 3] = [None, None, None];
    for mode in Mode::ALL {
        let sigma = singular_values(&unfold(x, mode));
        out[mode.index()] = match SpectrumSummary::new(sigma, tau) {
            Ok(s) => Some(s),
            Err(Error::DegenerateSpectrum) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

/// Mode weights from the unfolding spectra of the current estimate.
///
/// A mode with an all-zero unfolding carries no low-rank evidence and is
/// assigned `k̃ = 1`.
pub fn update_weights(x: &Tensor3<f64>, tau: f64) -> Result<WeightVector> {
    weights_and_ranks(x, tau).map(|(w, _)| w)
}

/// Mode weights together with each mode's effective rank `k_n` (0 for an
/// all-zero unfolding).
pub fn weights_and_ranks(x: &Tensor3<f64>, tau: f64) -> Result<(WeightVector, [usize; 3])> {
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::param("weight update on a non-finite tensor"));
    }
    let spectra = mode_spectra(x, tau)?;
    let mut k_norm = [1.0; 3];
    let mut ranks = [0; 3];
    for (n, s) in spectra.iter().enumerate() {
        match s {
            Some(s) => {
                k_norm[n] = s.k_norm;
                ranks[n] = s.k;
            }
            None => warn!("mode {} unfolding is all zero; using k~ = 1", n + 1),
        }
    }
    Ok((weights_from_normalized_ranks(k_norm)?, ranks))
}

fn masked_mean<'a>(values: impl Iterator<Item = (&'a f64, &'a bool)>) -> Option<f64> {
    let (sum, n) = values
        .filter(|(_, &ok)| ok)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Starting point for the solver on a rearranged tensor.
///
/// A missing `(p, d, y)` takes the mean of the valid entries at the same
/// pixel and step across years, else the pixel mean, else the global mean.
pub fn initial_fill(rt: &RearrangedTensor) -> Result<Tensor3<f64>> {
    let [pixels, nd, ny] = rt.shape();
    let data = rt.data.as_slice();
    let omega = rt.omega.as_slice();
    let global = masked_mean(data.iter().zip(omega)).ok_or(Error::EmptyPatch)?;

    let mut out = rt.data.clone();
    for p in 0..pixels {
        let px = p * nd * ny..(p + 1) * nd * ny;
        let pixel_mean = masked_mean(data[px.clone()].iter().zip(&omega[px])).unwrap_or(global);
        for d in 0..nd {
            let fiber = (p * nd + d) * ny..(p * nd + d + 1) * ny;
            if omega[fiber.clone()].iter().all(|&v| v) {
                continue;
            }
            let fill = masked_mean(data[fiber.clone()].iter().zip(&omega[fiber.clone()]))
                .unwrap_or(pixel_mean);
            for o in fiber {
                if !omega[o] {
                    out.as_mut_slice()[o] = fill;
                }
            }
        }
    }
    Ok(out)
}

/// Starting point on the raw `(rows × cols × T)` patch: pixel mean, else
/// global mean. Uses no cross-year alignment.
fn initial_fill_raw(patch: &Patch) -> Result<Tensor3<f64>> {
    let t_len = patch.time_len();
    let data = patch.data.as_slice();
    let omega = patch.omega.as_slice();
    let global = masked_mean(data.iter().zip(omega)).ok_or(Error::EmptyPatch)?;
    let mut out = patch.data.clone();
    for px in 0..patch.rows() * patch.cols() {
        let r = px * t_len..(px + 1) * t_len;
        let fill = masked_mean(data[r.clone()].iter().zip(&omega[r.clone()])).unwrap_or(global);
        for o in r {
            if !omega[o] {
                out.as_mut_slice()[o] = fill;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Completion {
    pub tensor: RearrangedTensor,
    pub weights: WeightVector,
    pub iterations: usize,
}

/// The ADMM loop shared by both tensor forms.
fn solve(
    observed: &Tensor3<f64>,
    omega: &Tensor3<bool>,
    start: Tensor3<f64>,
    params: &CompletionParams,
) -> Result<(Tensor3<f64>, WeightVector, usize)> {
    params.validate()?;
    let shape = observed.shape();
    let mask = omega.as_slice();
    let obs = observed.as_slice();

    let mut ranks = match params.surrogate {
        RankSurrogate::Nuclear => [0; 3],
        RankSurrogate::Truncated => weights_and_ranks(&start, params.tau)?.1,
    };
    let mut x = start;
    let mut weights = WeightVector::uniform();
    let mut duals: Vec<Tensor3<f64>> = (0..3).map(|_| Tensor3::zeros(shape)).collect();
    let mut aux: Vec<Tensor3<f64>> = (0..3).map(|_| Tensor3::zeros(shape)).collect();
    let mut rho = params.rho;
    let mut iterations = 0;
    let fully_observed = mask.iter().all(|&v| v);

    for it in 1..=params.max_iters {
        iterations = it;
        for mode in Mode::ALL {
            let n = mode.index();
            let shifted = Tensor3::from_vec(
                shape,
                x.as_slice()
                    .iter()
                    .zip(duals[n].as_slice())
                    .map(|(xv, dv)| xv + dv / rho)
                    .collect(),
            )?;
            let shrunk = svt_truncated(&unfold(&shifted, mode), weights.get(mode) / rho, ranks[n])?;
            aux[n] = fold(&shrunk, mode, shape)?;
        }

        let mut next = Tensor3::zeros(shape);
        for (o, v) in next.as_mut_slice().iter_mut().enumerate() {
            *v = if mask[o] {
                obs[o]
            } else {
                (0..3)
                    .map(|n| aux[n].as_slice()[o] - duals[n].as_slice()[o] / rho)
                    .sum::<f64>()
                    / 3.0
            };
        }
        if next.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: it });
        }

        for n in 0..3 {
            let dual = duals[n].as_mut_slice();
            for ((d, m), xv) in dual.iter_mut().zip(aux[n].as_slice()).zip(next.as_slice()) {
                *d -= rho * (m - xv);
            }
        }
        rho = (rho * params.rho_growth).min(RHO_MAX);
        if it % params.weight_update_every == 0 {
            let (w, k) = weights_and_ranks(&next, params.tau)?;
            weights = w;
            if params.surrogate == RankSurrogate::Truncated {
                ranks = k;
            }
        }

        let change = next
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = x.frobenius_norm().max(f64::EPSILON);
        // consensus gap between the per-mode copies and the estimate
        let primal = aux
            .iter()
            .map(|m| {
                m.as_slice()
                    .iter()
                    .zip(next.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        x = next;
        if fully_observed || (change / scale < params.tol && primal / scale < params.tol) {
            break;
        }
    }
    Ok((x, weights, iterations))
}

/// Completes a rearranged tensor. The result equals the input exactly on Ω.
pub fn complete(rt: &RearrangedTensor, params: &CompletionParams) -> Result<Completion> {
    let start = initial_fill(rt)?;
    let (data, weights, iterations) = solve(&rt.data, &rt.omega, start, params)?;
    Ok(Completion {
        tensor: RearrangedTensor {
            data,
            omega: rt.omega.clone(),
        },
        weights,
        iterations,
    })
}

/// Fills the gaps of one patch. `nd` is the number of steps per year.
pub fn complete_patch(patch: &Patch, nd: usize, params: &CompletionParams) -> Result<Patch> {
    if patch.valid_count() == 0 {
        return Err(Error::EmptyPatch);
    }
    if patch.omega.as_slice().iter().all(|&v| v) {
        return Ok(patch.clone());
    }
    if params.use_rearranged_form {
        let rt = rearrange(patch, nd)?;
        let done = complete(&rt, params)?;
        inverse_rearrange(&done.tensor, patch.rows(), patch.cols())
    } else {
        let start = initial_fill_raw(patch)?;
        let (data, _, _) = solve(&patch.data, &patch.omega, start, params)?;
        Patch::new(data, patch.omega.clone())
    }
}
