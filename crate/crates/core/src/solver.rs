//! Interpolation of missing pixels by iteratively reweighted GGLR minimization.
//!
//! Each outer iteration freezes the gradient graphs, solves
//! `(HᵀH + μ(ℒʰ + ℒᵛ)) x = Hᵀy` with conjugate gradient (warm started from the
//! previous iterate), then recomputes the gradients of the new estimate and
//! rebuilds the edge weights. The first iteration takes its gradients from
//! structure-tensor estimates because most pixels are still unknown.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cg::{conjugate_gradient, CgOptions};
use crate::error::{dim_err, param_err, GglrError, Result};
use crate::gradient::{gradients_of, Direction, GradientField};
use crate::graph::{build_pixel_graph, gglr_value, lifted_from_field, Connectivity};
use crate::grid::{devectorize, observations, selection_matrix, ImageGrid, PixelMask};
use crate::mu_select;
use crate::sparse::SparseMatrix;
use crate::structure_tensor::estimate_gradient_field;

/// Regularization weight: a fixed value or the MSE-bound minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuSetting {
    Fixed(f64),
    Auto,
}

impl fmt::Display for MuSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuSetting::Fixed(mu) => write!(f, "{mu}"),
            MuSetting::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for MuSetting {
    type Err = GglrError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MuSetting::Auto);
        }
        match s.parse::<f64>() {
            Ok(mu) if mu > 0.0 && mu.is_finite() => Ok(MuSetting::Fixed(mu)),
            _ => param_err(format!("mu must be a positive number or \"auto\", got {s:?}")),
        }
    }
}

/// Every tunable of a solve. Defaults: σ = 0.68, μ = 0.01, 5x5 window, 4-connected graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub sigma: f64,
    pub mu: MuSetting,
    pub window: usize,
    pub connectivity: Connectivity,
    pub cg_tol: f64,
    /// Defaults to `10 · MN` when unset.
    pub cg_max_iter: Option<usize>,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub seed: u64,
    pub jacobi: bool,
    /// Perturbation variance for `mu = auto`; estimated from the data when unset.
    pub sigma_p2: Option<f64>,
    /// Observation noise variance for `mu = auto`; estimated from the data when unset.
    pub sigma_o2: Option<f64>,
    /// Search interval for `mu = auto`.
    pub mu_range: (f64, f64),
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            sigma: 0.68,
            mu: MuSetting::Fixed(0.01),
            window: 5,
            connectivity: Connectivity::Four,
            cg_tol: 1e-8,
            cg_max_iter: None,
            outer_tol: 1e-4,
            outer_max_iter: 10,
            seed: 0,
            jacobi: false,
            sigma_p2: None,
            sigma_o2: None,
            mu_range: (1e-4, 1e2),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return param_err(format!("sigma must be positive, got {}", self.sigma));
        }
        if let MuSetting::Fixed(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return param_err(format!("mu must be positive, got {mu}"));
            }
        }
        if self.window == 0 || self.window % 2 == 0 {
            return param_err(format!("window must be odd and positive, got {}", self.window));
        }
        if !(self.cg_tol > 0.0) || !(self.outer_tol > 0.0) {
            return param_err("tolerances must be positive");
        }
        if self.outer_max_iter == 0 || self.cg_max_iter == Some(0) {
            return param_err("iteration caps must be positive");
        }
        let (lo, hi) = self.mu_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return param_err(format!("invalid mu range [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// Regularizer used by a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gglr2,
    Gglr4,
    Glr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gglr2 => "gglr2",
            Method::Gglr4 => "gglr4",
            Method::Glr => "glr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GglrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gglr2" => Ok(Method::Gglr2),
            "gglr4" | "gglr" => Ok(Method::Gglr4),
            "glr" => Ok(Method::Glr),
            other => param_err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Final estimate, unclamped.
    pub image: ImageGrid,
    pub outer_iterations: usize,
    pub cg_iterations: Vec<usize>,
    /// Relative CG residual of the last solve.
    pub residual: f64,
    /// Whether every CG solve reached `cg_tol` before its iteration cap.
    pub converged: bool,
    /// Regularizer value of the final estimate under the last frozen graphs.
    pub phi: f64,
    pub mu: f64,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    rows: usize,
    cols: usize,
    method: &'a str,
    mu: f64,
    outer_iterations: usize,
    cg_iterations: &'a [usize],
    residual: f64,
    converged: bool,
    phi: f64,
    wall_time_s: f64,
    config: &'a SolveConfig,
}

impl SolveReport {
    /// JSON summary (without pixel data).
    pub fn to_json(&self, method: Method, config: &SolveConfig) -> serde_json::Value {
        serde_json::to_value(ReportJson {
            rows: self.image.rows(),
            cols: self.image.cols(),
            method: method.name(),
            mu: self.mu,
            outer_iterations: self.outer_iterations,
            cg_iterations: &self.cg_iterations,
            residual: self.residual,
            converged: self.converged,
            phi: self.phi,
            wall_time_s: self.wall_time_s,
            config,
        })
        .expect("report serializes")
    }
}

/// `B = HᵀH + μ(ℒʰ + ℒᵛ)` and `b = Hᵀy`.
pub fn assemble_system(
    h: &SparseMatrix,
    horizontal: &SparseMatrix,
    vertical: &SparseMatrix,
    mu: f64,
    y: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param_err(format!("mu must be positive, got {mu}"));
    }
    let n = h.ncols();
    for l in [horizontal, vertical] {
        if l.nrows() != n || l.ncols() != n {
            return dim_err(format!(
                "Laplacian {}x{} vs {n} pixels",
                l.nrows(),
                l.ncols()
            ));
        }
    }
    if y.len() != h.nrows() {
        return dim_err(format!("{} observations for {} selected pixels", y.len(), h.nrows()));
    }
    let ht = h.transpose();
    let hth = ht.matmul(h)?;
    let reg = horizontal.add(vertical)?;
    let b_mat = hth.add_scaled(&reg, mu)?;
    let b = ht.matvec(y)?;
    Ok((b_mat, b))
}

/// Lifted Laplacian of one direction, or the zero matrix when the image has
/// no nodes in that direction (a single row or column).
fn lifted_or_zero(rows: usize, cols: usize, field: &GradientField, connectivity: Connectivity, sigma: f64) -> Result<SparseMatrix> {
    if field.is_empty() {
        return Ok(SparseMatrix::zeros(rows * cols, rows * cols));
    }
    Ok(lifted_from_field(rows, cols, field, connectivity, sigma)?.matrix)
}

fn gradients_or_empty(img: &ImageGrid, direction: Direction) -> Result<GradientField> {
    let (nr, nc) = direction.node_dims(img.rows(), img.cols());
    if nr == 0 || nc == 0 {
        return GradientField::new(direction, nr, nc, Vec::new(), Vec::new());
    }
    gradients_of(img, direction)
}

/// Whether the known pixels determine a plane uniquely, i.e. `H` is injective on
/// span{1, column ramp, row ramp} (fewer ramps for single-row/column images).
/// Evaluated exactly in integer arithmetic.
pub fn observations_pin_plane(mask: &PixelMask) -> bool {
    let (mut n, mut sl, mut sk, mut sll, mut skk, mut slk) = (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
    for idx in mask.known_indices() {
        let (k, l) = ((idx % mask.rows()) as i128, (idx / mask.rows()) as i128);
        n += 1;
        sl += l;
        sk += k;
        sll += l * l;
        skk += k * k;
        slk += l * k;
    }
    match (mask.rows() > 1, mask.cols() > 1) {
        (true, true) => {
            // Gram determinant of the columns [1, l, k]
            let det = n * (sll * skk - slk * slk) - sl * (sl * skk - slk * sk) + sk * (sl * slk - sll * sk);
            det != 0
        }
        (false, true) => n * sll - sl * sl != 0,
        (true, false) => n * skk - sk * sk != 0,
        (false, false) => n > 0,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn relative_change(prev: &[f64], next: &[f64]) -> f64 {
    let diff = prev.iter().zip(next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = norm(prev);
    if base > 0.0 {
        diff / base
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Frozen-weight regularizers for one outer iteration.
trait Regularizer {
    /// `(ℒʰ, ℒᵛ)` for the first iteration, built before any solve.
    fn initial(&mut self, zero_filled: &ImageGrid, mask: &PixelMask) -> Result<(SparseMatrix, SparseMatrix)>;
    /// `(ℒʰ, ℒᵛ)` rebuilt from a complete estimate.
    fn rebuild(&mut self, estimate: &ImageGrid) -> Result<(SparseMatrix, SparseMatrix)>;
    /// Whether the observations make the system matrix nonsingular.
    fn observable(&self, mask: &PixelMask) -> bool;
}

struct Gglr<'a> {
    config: &'a SolveConfig,
}

impl Regularizer for Gglr<'_> {
    fn initial(&mut self, zero_filled: &ImageGrid, mask: &PixelMask) -> Result<(SparseMatrix, SparseMatrix)> {
        let (gh, gv) = estimate_gradient_field(zero_filled, mask, self.config.window)?;
        self.lift(zero_filled.rows(), zero_filled.cols(), &gh, &gv)
    }

    fn rebuild(&mut self, estimate: &ImageGrid) -> Result<(SparseMatrix, SparseMatrix)> {
        let gh = gradients_or_empty(estimate, Direction::Horizontal)?;
        let gv = gradients_or_empty(estimate, Direction::Vertical)?;
        self.lift(estimate.rows(), estimate.cols(), &gh, &gv)
    }

    fn observable(&self, mask: &PixelMask) -> bool {
        observations_pin_plane(mask)
    }
}

impl Gglr<'_> {
    fn lift(&self, rows: usize, cols: usize, gh: &GradientField, gv: &GradientField) -> Result<(SparseMatrix, SparseMatrix)> {
        let c = self.config;
        Ok((
            lifted_or_zero(rows, cols, gh, c.connectivity, c.sigma)?,
            lifted_or_zero(rows, cols, gv, c.connectivity, c.sigma)?,
        ))
    }
}

/// Pixel-graph Laplacian; the second slot is always zero.
struct Glr<'a> {
    config: &'a SolveConfig,
}

impl Regularizer for Glr<'_> {
    fn initial(&mut self, zero_filled: &ImageGrid, _mask: &PixelMask) -> Result<(SparseMatrix, SparseMatrix)> {
        // no intensity information yet: uniform weights
        let flat = ImageGrid::constant(zero_filled.rows(), zero_filled.cols(), 0.0)?;
        let graph = build_pixel_graph(&flat, 1.0)?;
        let n = zero_filled.len();
        Ok((graph.laplacian, SparseMatrix::zeros(n, n)))
    }

    fn rebuild(&mut self, estimate: &ImageGrid) -> Result<(SparseMatrix, SparseMatrix)> {
        let graph = build_pixel_graph(estimate, self.config.sigma)?;
        let n = estimate.len();
        Ok((graph.laplacian, SparseMatrix::zeros(n, n)))
    }

    fn observable(&self, mask: &PixelMask) -> bool {
        mask.known_count() > 0
    }
}

fn run_outer_loop(
    y: &[f64],
    mask: &PixelMask,
    config: &SolveConfig,
    regularizer: &mut dyn Regularizer,
) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    if mask.known_count() == 0 {
        return Err(GglrError::NoObservations);
    }
    if y.len() != mask.known_count() {
        return dim_err(format!(
            "{} observations for {} known pixels",
            y.len(),
            mask.known_count()
        ));
    }
    if !regularizer.observable(mask) {
        return Err(GglrError::InsufficientObservations);
    }
    let (rows, cols) = (mask.rows(), mask.cols());
    let n = rows * cols;
    let h = selection_matrix(mask)?;
    let zero_filled_x = h.transpose().matvec(y)?;
    let zero_filled = devectorize(rows, cols, &zero_filled_x)?;

    let (mut lh, mut lv) = regularizer.initial(&zero_filled, mask)?;
    let mu = match config.mu {
        MuSetting::Fixed(mu) => mu,
        MuSetting::Auto => mu_select::auto_mu(&zero_filled, mask, &lh.add(&lv)?, config)?,
    };

    let cg_opts = CgOptions {
        tol: config.cg_tol,
        max_iter: config.cg_max_iter.unwrap_or(10 * n),
        jacobi: config.jacobi,
    };
    let mut x = zero_filled_x;
    let mut cg_iterations = Vec::new();
    let mut residual = 0.0;
    let mut converged = true;

    for outer in 0..config.outer_max_iter {
        if outer > 0 {
            let estimate = devectorize(rows, cols, &x)?;
            (lh, lv) = regularizer.rebuild(&estimate)?;
        }
        let (b_mat, b) = assemble_system(&h, &lh, &lv, mu, y)?;
        let out = conjugate_gradient(&b_mat, &b, &x, cg_opts).map_err(|e| match e {
            GglrError::SingularSystem => GglrError::InsufficientObservations,
            other => other,
        })?;
        cg_iterations.push(out.iterations);
        residual = out.residual;
        converged &= out.converged;
        let change = relative_change(&x, &out.x);
        x = out.x;
        if change < config.outer_tol {
            break;
        }
    }

    let phi = gglr_value(&x, &lh, &lv)?;
    Ok(SolveReport {
        image: devectorize(rows, cols, &x)?,
        outer_iterations: cg_iterations.len(),
        cg_iterations,
        residual,
        converged,
        phi,
        mu,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Restores the missing pixels by GGLR minimization. `y` holds the known
/// pixel values in ascending column-major order.
pub fn interpolate(y: &[f64], mask: &PixelMask, config: &SolveConfig) -> Result<SolveReport> {
    run_outer_loop(y, mask, config, &mut Gglr { config })
}

/// GLR baseline on the 4-connected pixel graph with intensity-difference weights.
pub fn glr_interpolate(y: &[f64], mask: &PixelMask, config: &SolveConfig) -> Result<SolveReport> {
    run_outer_loop(y, mask, config, &mut Glr { config })
}

/// Runs `method` on a degraded image; values at missing pixels are ignored.
pub fn restore(img: &ImageGrid, mask: &PixelMask, method: Method, config: &SolveConfig) -> Result<SolveReport> {
    let y = observations(img, mask)?;
    match method {
        Method::Glr => glr_interpolate(&y, mask, config),
        Method::Gglr2 => interpolate(
            &y,
            mask,
            &SolveConfig {
                connectivity: Connectivity::Two,
                ..config.clone()
            },
        ),
        Method::Gglr4 => interpolate(
            &y,
            mask,
            &SolveConfig {
                connectivity: Connectivity::Four,
                ..config.clone()
            },
        ),
    }
}
