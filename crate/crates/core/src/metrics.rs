//! PSNR and SSIM on the normalized `[0, 1]` intensity scale.

use crate::error::{dim_err, Result};
use crate::grid::ImageGrid;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn mse(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    reference.same_shape(test)?;
    let n = reference.len().max(1) as f64;
    Ok(reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB with peak value 1; `+∞` for identical images.
pub fn psnr(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * e.log10())
}

/// Formats a metric, writing infinities as `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-region filtering of a column-major image.
fn filter_valid(values: &[f64], rows: usize, cols: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let w = SSIM_WINDOW;
    let out_rows = rows + 1 - w;
    let out_cols = cols + 1 - w;
    // along columns (down each column)
    let mut tmp = vec![0.0; out_rows * cols];
    for l in 0..cols {
        for r in 0..out_rows {
            tmp[r + l * out_rows] = (0..w).map(|i| k[i] * values[r + i + l * rows]).sum();
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for l in 0..out_cols {
        for r in 0..out_rows {
            out[r + l * out_rows] = (0..w).map(|i| k[i] * tmp[r + (l + i) * out_rows]).sum();
        }
    }
    out
}

/// Mean structural similarity over all full 11x11 Gaussian windows (σ = 1.5).
pub fn ssim(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    reference.same_shape(test)?;
    let (rows, cols) = (reference.rows(), reference.cols());
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return dim_err(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {rows}x{cols}"));
    }
    let k = gaussian_kernel();
    let x = reference.values();
    let y = test.values();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mx = filter_valid(x, rows, cols, &k);
    let my = filter_valid(y, rows, cols, &k);
    let sxx = filter_valid(&xx, rows, cols, &k);
    let syy = filter_valid(&yy, rows, cols, &k);
    let sxy = filter_valid(&xy, rows, cols, &k);

    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let va = sxx[i] - a * a;
            let vb = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            ((2.0 * a * b + C1) * (2.0 * cov + C2)) / ((a * a + b * b + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
