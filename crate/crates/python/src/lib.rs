//! Python bindings. Images are lists of rows of floats in `[0, 1]`; masks are
//! lists of rows of booleans with `True` marking an observed pixel.

use gglr_core::degrade;
use gglr_core::metrics;
use gglr_core::mu_select::{self, SpectralSummary};
use gglr_core::netpbm;
use gglr_core::solver::{restore, Method, MuSetting, SolveConfig};
use gglr_core::{Connectivity, GglrError, ImageGrid, PixelMask};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: GglrError) -> PyErr {
    match e {
        GglrError::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn shape<T>(rows: &[Vec<T>]) -> gglr_core::Result<(usize, usize)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(GglrError::DimensionMismatch("rows have different lengths".into()));
    }
    Ok((rows.len(), cols))
}

fn image_from_rows(rows: &[Vec<f64>]) -> gglr_core::Result<ImageGrid> {
    let (m, n) = shape(rows)?;
    ImageGrid::from_fn(m, n, |k, l| rows[k][l])
}

fn image_to_rows(img: &ImageGrid) -> Vec<Vec<f64>> {
    (0..img.rows()).map(|k| (0..img.cols()).map(|l| img.get(k, l)).collect()).collect()
}

fn mask_from_rows(rows: &[Vec<bool>]) -> gglr_core::Result<PixelMask> {
    let (m, n) = shape(rows)?;
    PixelMask::from_fn(m, n, |k, l| rows[k][l])
}

fn mask_to_rows(mask: &PixelMask) -> Vec<Vec<bool>> {
    (0..mask.rows()).map(|k| (0..mask.cols()).map(|l| mask.is_known(k, l)).collect()).collect()
}

#[pyfunction]
fn read_pgm(path: &str) -> PyResult<Vec<Vec<f64>>> {
    netpbm::read_pgm(path).map(|img| image_to_rows(&img)).map_err(to_py)
}

#[pyfunction]
fn write_pgm(path: &str, image: Vec<Vec<f64>>) -> PyResult<()> {
    let img = image_from_rows(&image).map_err(to_py)?;
    netpbm::write_pgm(path, &img.clamped()).map_err(to_py)
}

#[pyfunction]
fn read_pbm(path: &str) -> PyResult<Vec<Vec<bool>>> {
    netpbm::read_pbm(path).map(|m| mask_to_rows(&m)).map_err(to_py)
}

#[pyfunction]
fn write_pbm(path: &str, known: Vec<Vec<bool>>) -> PyResult<()> {
    let mask = mask_from_rows(&known).map_err(to_py)?;
    netpbm::write_pbm(path, &mask).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (rows, cols, fraction, seed=0))]
fn random_mask(rows: usize, cols: usize, fraction: f64, seed: u64) -> PyResult<Vec<Vec<bool>>> {
    degrade::random_mask(rows, cols, fraction, seed).map(|m| mask_to_rows(&m)).map_err(to_py)
}

#[pyfunction]
fn psnr(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (image_from_rows(&reference).map_err(to_py)?, image_from_rows(&test).map_err(to_py)?);
    metrics::psnr(&a, &b).map_err(to_py)
}

#[pyfunction]
fn ssim(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (image_from_rows(&reference).map_err(to_py)?, image_from_rows(&test).map_err(to_py)?);
    metrics::ssim(&a, &b).map_err(to_py)
}

/// Restores the pixels where `known` is false. Returns `(image, report)`.
#[pyfunction]
#[pyo3(signature = (image, known, method="gglr4", mu="0.01", sigma=0.68, window=5, cg_tol=1e-8, outer_max_iter=10, jacobi=false))]
#[allow(clippy::too_many_arguments)]
fn interpolate<'py>(
    py: Python<'py>,
    image: Vec<Vec<f64>>,
    known: Vec<Vec<bool>>,
    method: &str,
    mu: &str,
    sigma: f64,
    window: usize,
    cg_tol: f64,
    outer_max_iter: usize,
    jacobi: bool,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    let img = image_from_rows(&image).map_err(to_py)?;
    let mask = mask_from_rows(&known).map_err(to_py)?;
    let method: Method = method.parse().map_err(to_py)?;
    let config = SolveConfig {
        sigma,
        mu: mu.parse::<MuSetting>().map_err(to_py)?,
        window,
        connectivity: if method == Method::Gglr2 { Connectivity::Two } else { Connectivity::Four },
        cg_tol,
        outer_max_iter,
        jacobi,
        ..SolveConfig::default()
    };
    let report = restore(&img, &mask, method, &config).map_err(to_py)?;
    let info = PyDict::new(py);
    info.set_item("method", method.name())?;
    info.set_item("mu", report.mu)?;
    info.set_item("outer_iterations", report.outer_iterations)?;
    info.set_item("cg_iterations", report.cg_iterations.clone())?;
    info.set_item("residual", report.residual)?;
    info.set_item("converged", report.converged)?;
    info.set_item("phi", report.phi)?;
    info.set_item("wall_time_s", report.wall_time_s)?;
    Ok((image_to_rows(&report.image), info))
}

#[pyfunction]
fn mse_bound(mu: f64, k: usize, lambda3: f64, lambda_k: f64, sigma_p2: f64, sigma_o2: f64) -> PyResult<f64> {
    let s = SpectralSummary { k, lambda3, lambda_k, sigma_p2, sigma_o2 };
    mu_select::mse_bound(mu, &s).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (k, lambda3, lambda_k, sigma_p2, sigma_o2, mu_min=1e-4, mu_max=1e2))]
fn optimal_mu(k: usize, lambda3: f64, lambda_k: f64, sigma_p2: f64, sigma_o2: f64, mu_min: f64, mu_max: f64) -> PyResult<f64> {
    let s = SpectralSummary { k, lambda3, lambda_k, sigma_p2, sigma_o2 };
    mu_select::optimal_mu(&s, (mu_min, mu_max)).map_err(to_py)
}

#[pymodule]
fn gglr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(read_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(read_pbm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pbm, m)?)?;
    m.add_function(wrap_pyfunction!(random_mask, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(mse_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mu, m)?)?;
    Ok(())
}
