//! Bias–variance MSE analysis for the regularization weight μ.
//!
//! For a fully observed signal denoised by `(I + μℒ)⁻¹ y` with eigenpairs
//! `(λ_i, v_i)` of `ℒ`, the MSE splits into a squared bias
//! `Σ q_i² (v_iᵀ x̄)²` with `q_i = μλ_i / (1 + μλ_i)` and a variance
//! `σ_o² Σ h_i²` with `h_i = 1 / (1 + μλ_i)`. Replacing the projections by
//! their expectation under a planar-plus-perturbation model gives an upper
//! bound in terms of `K`, `λ_3`, `λ_K`, `σ_p²` and `σ_o²`, which
//! [`optimal_mu`] minimizes.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, GglrError, Result};
use crate::gradient::Direction;
use crate::grid::{column_major_index, ImageGrid, PixelMask};
use crate::solver::SolveConfig;
use crate::sparse::SparseMatrix;
use crate::structure_tensor::observable_gradients;

/// Matrices up to this order get a dense eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 4096;

/// Eigenvalues at or below `NULL_SPACE_RTOL · λ_K` are treated as zero.
pub const NULL_SPACE_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Signal length.
    pub k: usize,
    /// Smallest eigenvalue above the numerical null space.
    pub lambda3: f64,
    /// Largest eigenvalue.
    pub lambda_k: f64,
    /// Variance of the deviation from the planar model.
    pub sigma_p2: f64,
    /// Observation noise variance.
    pub sigma_o2: f64,
}

impl SpectralSummary {
    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return param_err(format!("K must be at least 3, got {}", self.k));
        }
        if !(0.0 <= self.lambda3 && self.lambda3 <= self.lambda_k && self.lambda_k.is_finite()) {
            return param_err(format!(
                "need 0 <= λ3 <= λK, got {} and {}",
                self.lambda3, self.lambda_k
            ));
        }
        if !(self.sigma_p2 >= 0.0 && self.sigma_o2 >= 0.0) {
            return param_err("variances must be nonnegative");
        }
        Ok(())
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param_err(format!("mu must be positive, got {mu}"));
    }
    Ok(())
}

/// Exact MSE from the full spectrum. `projections[i]` is `v_iᵀ x̄` for the
/// eigenvector of `eigenvalues[i]`; zero eigenvalues contribute no bias.
pub fn mse_exact(mu: f64, eigenvalues: &[f64], projections: &[f64], sigma_o2: f64) -> Result<f64> {
    check_mu(mu)?;
    if eigenvalues.len() != projections.len() {
        return dim_err(format!(
            "{} eigenvalues vs {} projections",
            eigenvalues.len(),
            projections.len()
        ));
    }
    let mut bias = 0.0;
    let mut variance = 0.0;
    for (&lambda, &proj) in eigenvalues.iter().zip(projections) {
        let t = mu * lambda.max(0.0);
        let q = t / (1.0 + t);
        let h = 1.0 / (1.0 + t);
        bias += q * q * proj * proj;
        variance += h * h;
    }
    Ok(bias + sigma_o2 * variance)
}

/// `(K−2)σ_p² / (1 + 1/(μλ_K))² + ((K−2)/(1 + μλ_3)² + 2) σ_o²`.
pub fn mse_bound(mu: f64, s: &SpectralSummary) -> Result<f64> {
    check_mu(mu)?;
    s.validate()?;
    let k2 = (s.k - 2) as f64;
    let tk = mu * s.lambda_k;
    // 1 / (1 + 1/t) written as t / (1 + t) so that λ_K = 0 stays finite
    let a = tk / (1.0 + tk);
    let h3 = 1.0 / (1.0 + mu * s.lambda3);
    Ok(k2 * s.sigma_p2 * a * a + (k2 * h3 * h3 + 2.0) * s.sigma_o2)
}

/// Analytic `d/dμ` of [`mse_bound`].
pub fn mse_bound_derivative(mu: f64, s: &SpectralSummary) -> Result<f64> {
    check_mu(mu)?;
    s.validate()?;
    let k2 = (s.k - 2) as f64;
    let dk = 1.0 + mu * s.lambda_k;
    let d3 = 1.0 + mu * s.lambda3;
    let bias = 2.0 * k2 * s.sigma_p2 * mu * s.lambda_k * s.lambda_k / (dk * dk * dk);
    let variance = -2.0 * k2 * s.sigma_o2 * s.lambda3 / (d3 * d3 * d3);
    Ok(bias + variance)
}

const SCAN_POINTS: usize = 64;
const MAX_REFINE: usize = 200;

/// Minimizer of [`mse_bound`] over `[lo, hi]`.
///
/// A coarse log-spaced scan locates the basin of the minimum; inside it the
/// root of `dB/dμ` is found by bisection (in log μ), with golden-section search
/// as the fallback when the derivative does not change sign there.
pub fn optimal_mu(s: &SpectralSummary, range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return param_err(format!("invalid mu range [{lo}, {hi}]"));
    }
    s.validate()?;
    let bound = |mu: f64| mse_bound(mu, s).expect("validated");
    let deriv = |mu: f64| mse_bound_derivative(mu, s).expect("validated");

    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| (llo + (lhi - llo) * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| bound(*a.1).total_cmp(&bound(*b.1)))
        .map(|(i, _)| i)
        .expect("non-empty grid");

    if best == 0 && deriv(lo) >= 0.0 {
        return Ok(lo);
    }
    if best == SCAN_POINTS - 1 && deriv(hi) <= 0.0 {
        return Ok(hi);
    }
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[(best + 1).min(SCAN_POINTS - 1)].ln();

    if deriv(a.exp()) < 0.0 && deriv(b.exp()) > 0.0 {
        for _ in 0..MAX_REFINE {
            let m = 0.5 * (a + b);
            let mu = m.exp();
            let d = deriv(mu);
            if d.abs() <= 1e-8 * bound(mu) || b - a <= f64::EPSILON * m.abs().max(1.0) {
                return Ok(mu);
            }
            if d < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        return Ok((0.5 * (a + b)).exp());
    }

    // golden-section on log μ
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..MAX_REFINE {
        if bound(c.exp()) < bound(d.exp()) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
        if b - a <= 1e-12 {
            break;
        }
    }
    let mid = (0.5 * (a + b)).exp();
    Ok([lo, mid, hi]
        .into_iter()
        .min_by(|x, y| bound(*x).total_cmp(&bound(*y)))
        .expect("non-empty"))
}

/// Options for [`extreme_eigenvalues_with`].
#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Dense decomposition up to this order.
    pub dense_limit: usize,
    /// Known null-space vectors deflated in the iterative path.
    pub null_basis: Vec<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl EigenOptions {
    /// 1D signals: the null space of a lifted line Laplacian holds constants and ramps.
    pub fn line(n: usize) -> Self {
        Self {
            dense_limit: DENSE_EIGEN_LIMIT,
            null_basis: vec![vec![1.0; n], (0..n).map(|i| i as f64).collect()],
            tol: 1e-8,
            max_iter: 20_000,
            seed: 0,
        }
    }

    /// Images: constants, column ramps and row ramps.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        let mut col_ramp = vec![0.0; n];
        let mut row_ramp = vec![0.0; n];
        for l in 0..cols {
            for k in 0..rows {
                let i = column_major_index(k, l, rows);
                col_ramp[i] = l as f64;
                row_ramp[i] = k as f64;
            }
        }
        Self {
            null_basis: vec![vec![1.0; n], col_ramp, row_ramp],
            ..Self::line(n)
        }
    }
}

/// `(λ_3, λ_K)` of a symmetric PSD matrix, treating it as a 1D signal Laplacian.
pub fn extreme_eigenvalues(l: &SparseMatrix) -> Result<(f64, f64)> {
    extreme_eigenvalues_with(l, &EigenOptions::line(l.nrows()))
}

pub fn extreme_eigenvalues_with(l: &SparseMatrix, opts: &EigenOptions) -> Result<(f64, f64)> {
    let n = l.nrows();
    if l.ncols() != n || n == 0 {
        return dim_err("eigenvalues of a non-square or empty matrix");
    }
    if !l.is_symmetric(1e-12) {
        return Err(GglrError::NotSymmetric);
    }
    if n <= opts.dense_limit {
        let dense = DMatrix::from_fn(n, n, |i, j| l.get(i, j));
        let eig = SymmetricEigen::new(dense);
        let lambda_k = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let floor = NULL_SPACE_RTOL * lambda_k;
        let lambda3 = eig
            .eigenvalues
            .iter()
            .cloned()
            .filter(|&v| v > floor)
            .fold(f64::INFINITY, f64::min);
        let lambda3 = if lambda3.is_finite() { lambda3 } else { 0.0 };
        return Ok((lambda3, lambda_k));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let basis = orthonormalize(&opts.null_basis, n)?;
    let lambda_k = power_iteration(|v, out| l.matvec_into(v, out), n, &[], &mut rng, opts)?;
    // largest eigenvalue of λ_K·I − ℒ off the null space is λ_K − λ_3
    let shifted = power_iteration(
        |v, out| {
            l.matvec_into(v, out)?;
            for (o, x) in out.iter_mut().zip(v) {
                *o = lambda_k * x - *o;
            }
            Ok(())
        },
        n,
        &basis,
        &mut rng,
        opts,
    )?;
    Ok(((lambda_k - shifted).max(0.0), lambda_k))
}

fn orthonormalize(vectors: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        if v.len() != n {
            return dim_err(format!("null-space vector of length {} for order {n}", v.len()));
        }
        let mut w = v.clone();
        for u in &out {
            let d: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            w.iter_mut().for_each(|x| *x /= norm);
            out.push(w);
        }
    }
    Ok(out)
}

fn deflate(v: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
    }
}

/// Dominant eigenvalue by power iteration on the complement of `basis`;
/// stops when the Rayleigh quotient changes by at most `tol` relative.
fn power_iteration(
    mut apply: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    n: usize,
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    opts: &EigenOptions,
) -> Result<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut w = vec![0.0; n];
    deflate(&mut v, basis);
    let mut rayleigh = 0.0;
    for _ in 0..opts.max_iter {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        apply(&v, &mut w)?;
        deflate(&mut w, basis);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if !next.is_finite() {
            return Err(GglrError::NumericalBreakdown);
        }
        let done = (next - rayleigh).abs() <= opts.tol * next.abs().max(f64::MIN_POSITIVE);
        rayleigh = next;
        std::mem::swap(&mut v, &mut w);
        if done {
            break;
        }
    }
    Ok(rayleigh)
}

pub fn spectral_summary(
    l: &SparseMatrix,
    opts: &EigenOptions,
    sigma_p2: f64,
    sigma_o2: f64,
) -> Result<SpectralSummary> {
    let (lambda3, lambda_k) = extreme_eigenvalues_with(l, opts)?;
    let s = SpectralSummary {
        k: l.nrows(),
        lambda3,
        lambda_k,
        sigma_p2,
        sigma_o2,
    };
    s.validate()?;
    Ok(s)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Heuristic noise variance: the median absolute deviation of the observable
/// first differences, which are dominated by noise in flat regions. Each
/// difference carries twice the pixel noise variance.
pub fn estimate_noise_variance(img: &ImageGrid, mask: &PixelMask) -> Result<f64> {
    let mut diffs = Vec::new();
    for dir in [Direction::Horizontal, Direction::Vertical] {
        let (nr, nc) = dir.node_dims(img.rows(), img.cols());
        if nr == 0 || nc == 0 {
            continue;
        }
        let g = observable_gradients(img, mask, dir)?;
        diffs.extend(g.values.iter().zip(&g.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v));
    }
    let Some(center) = median(diffs.clone()) else {
        return Ok(0.0);
    };
    let mad = median(diffs.iter().map(|d| (d - center).abs()).collect()).unwrap_or(0.0);
    let sigma = 1.4826 * mad / std::f64::consts::SQRT_2;
    Ok(sigma * sigma)
}

/// Heuristic planar-deviation variance: median residual variance of
/// least-squares planes fitted to the known pixels of each `window x window`
/// neighborhood (at least 6 samples), minus the noise variance.
pub fn estimate_planar_deviation(img: &ImageGrid, mask: &PixelMask, window: usize, noise_var: f64) -> Result<f64> {
    mask.check_shape(img)?;
    if window == 0 || window % 2 == 0 {
        return param_err(format!("window must be odd and positive, got {window}"));
    }
    let half = (window / 2) as isize;
    let (rows, cols) = (img.rows() as isize, img.cols() as isize);
    let mut residuals = Vec::new();
    for l in 0..cols {
        for k in 0..rows {
            let mut pts = Vec::with_capacity(window * window);
            for dl in -half..=half {
                for dk in -half..=half {
                    let (kk, ll) = (k + dk, l + dl);
                    if kk >= 0 && ll >= 0 && kk < rows && ll < cols && mask.is_known(kk as usize, ll as usize) {
                        pts.push((dl as f64, dk as f64, img.get(kk as usize, ll as usize)));
                    }
                }
            }
            if pts.len() < 6 {
                continue;
            }
            if let Some(var) = plane_residual_variance(&pts) {
                residuals.push(var);
            }
        }
    }
    Ok(median(residuals).map_or(0.0, |r| (r - noise_var).max(0.0)))
}

fn plane_residual_variance(pts: &[(f64, f64, f64)]) -> Option<f64> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(x, y, z) in pts {
        let a = nalgebra::Vector3::new(1.0, x, y);
        ata += a * a.transpose();
        atb += a * z;
    }
    let coef = ata.try_inverse()? * atb;
    let rss: f64 = pts
        .iter()
        .map(|&(x, y, z)| {
            let r = z - (coef[0] + coef[1] * x + coef[2] * y);
            r * r
        })
        .sum();
    Some(rss / (pts.len() - 3) as f64)
}

/// μ minimizing the MSE bound for the regularizer `lap` of an image problem.
///
/// The bound is derived for a fully observed signal; applying it to a masked
/// image uses `K = MN` and the image's own `λ_3`, `λ_K`.
pub fn auto_mu(zero_filled: &ImageGrid, mask: &PixelMask, lap: &SparseMatrix, config: &SolveConfig) -> Result<f64> {
    let sigma_o2 = match config.sigma_o2 {
        Some(v) => v,
        None => estimate_noise_variance(zero_filled, mask)?,
    };
    let sigma_p2 = match config.sigma_p2 {
        Some(v) => v,
        None => estimate_planar_deviation(zero_filled, mask, config.window, sigma_o2)?,
    };
    let opts = EigenOptions {
        seed: config.seed,
        ..EigenOptions::grid(zero_filled.rows(), zero_filled.cols())
    };
    let summary = spectral_summary(lap, &opts, sigma_p2, sigma_o2)?;
    optimal_mu(&summary, config.mu_range)
}
