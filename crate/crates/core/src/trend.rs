//! ℓ1 trend filtering and the three-pass upper-envelope procedure.
//!
//! `l1_trend_filter` minimizes `½‖y − z‖² + λ‖Dz‖₁` with `D` the second
//! difference operator. The solver is ADMM on the split `u = Dz`:
//!
//! ```text
//! z ← (I + ρDᵀD)⁻¹ (y + ρDᵀ(u − v))
//! u ← soft(Dz + v, λ/ρ)
//! v ← v + Dz − u
//! ```
//!
//! The z-step is a pentadiagonal solve. Periodically the knot pattern of `u`
//! seeds a primal-dual active-set refinement that solves the optimality
//! conditions exactly; its result is returned only once it passes the
//! subgradient test, so the output is the exact minimizer up to rounding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Reliability;

const ACTIVE_SET_ROUNDS: usize = 50;

/// Quality label of one sample for the replacement passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleFlag {
    Good,
    /// Marginal or reconstructed.
    Noisy,
}

impl From<Reliability> for SampleFlag {
    fn from(r: Reliability) -> Self {
        if r == Reliability::Good {
            SampleFlag::Good
        } else {
            SampleFlag::Noisy
        }
    }
}

/// One pixel's gap-free series with per-sample flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub flags: Vec<SampleFlag>,
}

impl Series {
    pub fn new(values: Vec<f64>, flags: Vec<SampleFlag>) -> Result<Self> {
        if values.len() != flags.len() {
            return Err(Error::shape(format!(
                "{} values but {} flags",
                values.len(),
                flags.len()
            )));
        }
        Ok(Series { values, flags })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Regularization weight. Filtering `a·y` with `a·λ` yields `a·z`.
    pub lambda: f64,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            lambda: 1.0,
            solver_tol: 1e-6,
            solver_max_iters: 2000,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iters == 0 {
            return Err(Error::param("solver tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Dense `(n−2) × n` second-difference matrix.
pub fn second_diff_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 3 {
        return Err(Error::param(format!("second differences need n >= 3, got {n}")));
    }
    let mut d = DMatrix::zeros(n - 2, n);
    for i in 0..n - 2 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -2.0;
        d[(i, i + 2)] = 1.0;
    }
    Ok(d)
}

fn diff2(z: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = z[i] - 2.0 * z[i + 1] + z[i + 2];
    }
}

/// `Dᵀ u` for `u` of length `n − 2`.
fn diff2_t(u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &ui) in u.iter().enumerate() {
        out[i] += ui;
        out[i + 1] -= 2.0 * ui;
        out[i + 2] += ui;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn soft(x: f64, k: f64) -> f64 {
    if x > k {
        x - k
    } else if x < -k {
        x + k
    } else {
        0.0
    }
}

/// Cholesky factor of a symmetric positive definite matrix with two
/// sub-diagonals.
struct BandCholesky {
    diag: Vec<f64>,
    sub1: Vec<f64>,
    sub2: Vec<f64>,
}

impl BandCholesky {
    /// `a0[i] = A[i][i]`, `a1[i] = A[i+1][i]`, `a2[i] = A[i+2][i]`.
    fn factor(a0: &[f64], a1: &[f64], a2: &[f64]) -> Option<Self> {
        let n = a0.len();
        let mut diag = vec![0.0; n];
        let mut sub1 = vec![0.0; n];
        let mut sub2 = vec![0.0; n];
        for i in 0..n {
            if i >= 2 {
                sub2[i] = a2[i - 2] / diag[i - 2];
            }
            if i >= 1 {
                sub1[i] = (a1[i - 1] - sub2[i] * sub1[i - 1]) / diag[i - 1];
            }
            let pivot = a0[i] - sub1[i] * sub1[i] - sub2[i] * sub2[i];
            if !(pivot > 0.0) {
                return None;
            }
            diag[i] = pivot.sqrt();
        }
        Some(BandCholesky { diag, sub1, sub2 })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut acc = b[i];
            if i >= 1 {
                acc -= self.sub1[i] * b[i - 1];
            }
            if i >= 2 {
                acc -= self.sub2[i] * b[i - 2];
            }
            b[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.sub1[i + 1] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.sub2[i + 2] * b[i + 2];
            }
            b[i] = acc / self.diag[i];
        }
    }
}

/// Factor of `I + ρDᵀD`.
fn factor_z_system(n: usize, rho: f64) -> Option<BandCholesky> {
    let mut a0 = vec![1.0; n];
    let mut a1 = vec![0.0; n.saturating_sub(1)];
    let mut a2 = vec![0.0; n.saturating_sub(2)];
    let c = [1.0, -2.0, 1.0];
    for r in 0..n - 2 {
        for a in 0..3 {
            a0[r + a] += rho * c[a] * c[a];
            for b in a + 1..3 {
                let v = rho * c[a] * c[b];
                match b - a {
                    1 => a1[r + a] += v,
                    _ => a2[r + a] += v,
                }
            }
        }
    }
    BandCholesky::factor(&a0, &a1, &a2)
}

/// Solves the optimality conditions for a fixed knot pattern: `g_i = s_i`
/// where `s_i != 0`, and `(Dz)_i = 0` elsewhere. Returns `(z, g)`.
fn solve_pattern(y: &[f64], lambda: f64, signs: &[i8]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let m = n - 2;
    let mut g: Vec<f64> = signs.iter().map(|&s| s as f64).collect();
    let free: Vec<usize> = (0..m).filter(|&i| signs[i] == 0).collect();

    if !free.is_empty() {
        // D_F D_Fᵀ g_F = D_F (y/λ − D_Sᵀ s_S)
        let mut rhs_full = vec![0.0; n];
        diff2_t(&g, &mut rhs_full);
        for (r, yi) in rhs_full.iter_mut().zip(y) {
            *r = yi / lambda - *r;
        }
        let mut d_rhs = vec![0.0; m];
        diff2(&rhs_full, &mut d_rhs);
        let mut b: Vec<f64> = free.iter().map(|&i| d_rhs[i]).collect();

        // principal submatrix of DDᵀ (6 on the diagonal, -4 and 1 off it)
        let k = free.len();
        let entry = |gap: usize| match gap {
            1 => -4.0,
            2 => 1.0,
            _ => 0.0,
        };
        let a0 = vec![6.0; k];
        let a1: Vec<f64> = (0..k.saturating_sub(1)).map(|a| entry(free[a + 1] - free[a])).collect();
        let a2: Vec<f64> = (0..k.saturating_sub(2)).map(|a| entry(free[a + 2] - free[a])).collect();
        BandCholesky::factor(&a0, &a1, &a2)?.solve_in_place(&mut b);
        for (&i, gi) in free.iter().zip(b) {
            g[i] = gi;
        }
    }

    let mut dtg = vec![0.0; n];
    diff2_t(&g, &mut dtg);
    let z = y.iter().zip(&dtg).map(|(yi, d)| yi - lambda * d).collect();
    Some((z, g))
}

/// Primal-dual active-set refinement of a knot pattern guessed by ADMM.
/// Returns the exact minimizer once the pattern satisfies the optimality
/// conditions, `None` if it does not settle within a few rounds.
fn refine(y: &[f64], lambda: f64, u: &[f64]) -> Option<Vec<f64>> {
    let m = u.len();
    let mut signs: Vec<i8> = u
        .iter()
        .map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 })
        .collect();
    let mut dz = vec![0.0; m];
    for _ in 0..ACTIVE_SET_ROUNDS {
        let (z, g) = solve_pattern(y, lambda, &signs)?;
        diff2(&z, &mut dz);
        let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut changed = false;
        for i in 0..m {
            match signs[i] {
                0 if g[i] > 1.0 + 1e-9 => {
                    signs[i] = 1;
                    changed = true;
                }
                0 if g[i] < -1.0 - 1e-9 => {
                    signs[i] = -1;
                    changed = true;
                }
                s if s != 0 && (s as f64) * dz[i] < -1e-12 * scale => {
                    signs[i] = 0;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            return Some(z);
        }
    }
    None
}

/// Minimizer of `½‖y − z‖² + λ‖Dz‖₁`.
pub fn l1_trend_filter(y: &[f64], params: &FilterParams) -> Result<Vec<f64>> {
    params.validate()?;
    let n = y.len();
    if n < 3 {
        return Err(Error::param(format!("series length must be >= 3, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("series contains non-finite values"));
    }
    if params.lambda == 0.0 {
        return Ok(y.to_vec());
    }

    let lambda = params.lambda;
    let m = n - 2;
    let tol = params.solver_tol;
    let y_scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);

    let mut rho = lambda / y_scale;
    let mut chol = factor_z_system(n, rho).ok_or(Error::FilterNonConvergence {
        iterations: 0,
        primal: f64::NAN,
        dual: f64::NAN,
    })?;

    let mut z = y.to_vec();
    let mut u = vec![0.0; m];
    diff2(y, &mut u);
    let mut v = vec![0.0; m];
    let mut dz = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let mut u_old = vec![0.0; m];
    let mut support_stable = 0usize;
    let mut converged_at: Option<usize> = None;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for it in 1..=params.solver_max_iters {
        for i in 0..m {
            tmp_m[i] = u[i] - v[i];
        }
        diff2_t(&tmp_m, &mut rhs);
        for i in 0..n {
            rhs[i] = y[i] + rho * rhs[i];
        }
        chol.solve_in_place(&mut rhs);
        z.copy_from_slice(&rhs);

        diff2(&z, &mut dz);
        u_old.copy_from_slice(&u);
        let k = lambda / rho;
        let mut support_changed = false;
        for i in 0..m {
            u[i] = soft(dz[i] + v[i], k);
            if (u[i] == 0.0) != (u_old[i] == 0.0) || u[i].signum() != u_old[i].signum() {
                support_changed = true;
            }
        }
        for i in 0..m {
            v[i] += dz[i] - u[i];
        }

        for i in 0..m {
            tmp_m[i] = dz[i] - u[i];
        }
        primal = norm(&tmp_m);
        for i in 0..m {
            tmp_m[i] = u[i] - u_old[i];
        }
        diff2_t(&tmp_m, &mut tmp_n);
        dual = rho * norm(&tmp_n);
        diff2_t(&v, &mut tmp_n);
        let eps_primal = tol * ((m as f64).sqrt() * y_scale + norm(&dz).max(norm(&u)));
        let eps_dual = tol * ((n as f64).sqrt() * y_scale + rho * norm(&tmp_n));

        support_stable = if support_changed { 0 } else { support_stable + 1 };
        if primal <= eps_primal && dual <= eps_dual {
            converged_at.get_or_insert(it);
        }
        if support_stable == 10 || it % 25 == 0 {
            if let Some(exact) = refine(y, lambda, &u) {
                return Ok(exact);
            }
        }

        // residual balancing
        let new_rho = if primal > 10.0 * dual {
            rho * 2.0
        } else if dual > 10.0 * primal {
            rho / 2.0
        } else {
            rho
        };
        if new_rho != rho && it < params.solver_max_iters / 2 {
            let ratio = rho / new_rho;
            v.iter_mut().for_each(|x| *x *= ratio);
            rho = new_rho;
            chol = factor_z_system(n, rho).ok_or(Error::FilterNonConvergence {
                iterations: it,
                primal,
                dual,
            })?;
        }
    }
    if let Some(exact) = refine(y, lambda, &u) {
        return Ok(exact);
    }
    if converged_at.is_some() {
        // knot set never settled exactly; the ADMM iterate is within tolerance
        return Ok(z);
    }
    Err(Error::FilterNonConvergence {
        iterations: params.solver_max_iters,
        primal,
        dual,
    })
}

/// The two replacement passes: filter, then lift every noisy sample that
/// lies strictly below the fitted curve onto it. Good samples never change.
pub fn replacement_passes(series: &Series, params: &FilterParams) -> Result<Vec<f64>> {
    let mut y = series.values.clone();
    for _ in 0..2 {
        let z = l1_trend_filter(&y, params)?;
        for ((yt, zt), flag) in y.iter_mut().zip(&z).zip(&series.flags) {
            if *flag == SampleFlag::Noisy && *yt < *zt {
                *yt = *zt;
            }
        }
    }
    Ok(y)
}

/// Two replacement passes followed by a final plain filter, whose output is
/// returned.
pub fn iterative_filter(series: &Series, params: &FilterParams) -> Result<Vec<f64>> {
    let lifted = replacement_passes(series, params)?;
    l1_trend_filter(&lifted, params)
}
