//! Signal-dependent graphs over gradient nodes (and over pixels, for the GLR
//! baseline), their Laplacians, and the pixel-domain lifted Laplacian
//! `Fᵀ L F` whose quadratic form is the gradient graph Laplacian regularizer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, GglrError, Result};
use crate::gradient::{gradient_operator, Direction, GradientField};
use crate::grid::{column_major_index, ImageGrid};
use crate::sparse::SparseMatrix;

/// Edge weights below this are left out of the adjacency matrix.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Neighborhood rule on the gradient node grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// The two neighbors along the gradient's own axis.
    #[serde(rename = "2")]
    Two,
    /// Up, down, left and right neighbors.
    #[serde(rename = "4")]
    Four,
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Connectivity::Two => f.write_str("2"),
            Connectivity::Four => f.write_str("4"),
        }
    }
}

impl FromStr for Connectivity {
    type Err = GglrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2" => Ok(Connectivity::Two),
            "4" => Ok(Connectivity::Four),
            other => param_err(format!("connectivity must be 2 or 4, got {other:?}")),
        }
    }
}

/// Gaussian edge weight `exp(-(g_i - g_j)² / σ²)`.
pub fn edge_weight(gi: f64, gj: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return param_err(format!("sigma must be positive, got {sigma}"));
    }
    Ok(weight_unchecked(gi, gj, sigma))
}

#[inline]
fn weight_unchecked(gi: f64, gj: f64, sigma: f64) -> f64 {
    let d = gi - gj;
    (-(d * d) / (sigma * sigma)).exp()
}

/// A weighted graph on a rectangular node grid.
#[derive(Clone, Debug)]
pub struct GradientGraph {
    pub node_rows: usize,
    pub node_cols: usize,
    pub connectivity: Connectivity,
    pub sigma: f64,
    pub adjacency: SparseMatrix,
    pub laplacian: SparseMatrix,
}

impl GradientGraph {
    pub fn node_count(&self) -> usize {
        self.node_rows * self.node_cols
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.laplacian.diagonal_values()
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.triplets().filter(|&(i, j, _)| i < j)
    }
}

/// `L = D - W` for a symmetric adjacency matrix.
pub fn laplacian_of(adjacency: &SparseMatrix) -> SparseMatrix {
    let n = adjacency.nrows();
    let degrees: Vec<f64> = (0..n).map(|r| adjacency.row(r).1.iter().sum()).collect();
    SparseMatrix::diagonal(&degrees)
        .add_scaled(adjacency, -1.0)
        .expect("adjacency is square")
}

/// Weighted grid graph over `values` laid out column-major on `rows x cols`.
fn grid_graph(
    rows: usize,
    cols: usize,
    values: &[f64],
    along_rows: bool,
    along_cols: bool,
    sigma: f64,
) -> Result<SparseMatrix> {
    if !(sigma > 0.0) {
        return param_err(format!("sigma must be positive, got {sigma}"));
    }
    if values.len() != rows * cols {
        return dim_err(format!("{} values on a {rows}x{cols} grid", values.len()));
    }
    let mut triplets = Vec::with_capacity(4 * rows * cols);
    let mut push = |i: usize, j: usize| {
        let w = weight_unchecked(values[i], values[j], sigma);
        if w >= WEIGHT_FLOOR {
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
    };
    for l in 0..cols {
        for k in 0..rows {
            let i = column_major_index(k, l, rows);
            if along_rows && l + 1 < cols {
                push(i, column_major_index(k, l + 1, rows));
            }
            if along_cols && k + 1 < rows {
                push(i, column_major_index(k + 1, l, rows));
            }
        }
    }
    let n = rows * cols;
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Signal-dependent graph over one direction's gradient nodes.
///
/// Node validity is ignored: every node takes part with its current value.
pub fn build_gradient_graph(field: &GradientField, connectivity: Connectivity, sigma: f64) -> Result<GradientGraph> {
    let (along_rows, along_cols) = match (connectivity, field.direction) {
        (Connectivity::Four, _) => (true, true),
        (Connectivity::Two, Direction::Horizontal) => (true, false),
        (Connectivity::Two, Direction::Vertical) => (false, true),
    };
    let adjacency = grid_graph(field.rows, field.cols, &field.values, along_rows, along_cols, sigma)?;
    let laplacian = laplacian_of(&adjacency);
    Ok(GradientGraph {
        node_rows: field.rows,
        node_cols: field.cols,
        connectivity,
        sigma,
        adjacency,
        laplacian,
    })
}

/// 4-connected pixel graph with intensity-difference weights (GLR baseline).
pub fn build_pixel_graph(img: &ImageGrid, sigma: f64) -> Result<GradientGraph> {
    let adjacency = grid_graph(img.rows(), img.cols(), img.values(), true, true, sigma)?;
    let laplacian = laplacian_of(&adjacency);
    Ok(GradientGraph {
        node_rows: img.rows(),
        node_cols: img.cols(),
        connectivity: Connectivity::Four,
        sigma,
        adjacency,
        laplacian,
    })
}

/// Pixel-domain Laplacian `Fᵀ L F` together with the operators it came from.
#[derive(Clone, Debug)]
pub struct LiftedLaplacian {
    pub matrix: SparseMatrix,
    pub operator: SparseMatrix,
    pub graph_laplacian: SparseMatrix,
}

impl LiftedLaplacian {
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        self.matrix.quadratic_form(x)
    }
}

pub fn lift_laplacian(f: &SparseMatrix, l: &SparseMatrix) -> Result<LiftedLaplacian> {
    let matrix = SparseMatrix::triple_product(f, l)?;
    Ok(LiftedLaplacian {
        matrix,
        operator: f.clone(),
        graph_laplacian: l.clone(),
    })
}

/// Builds the gradient graph for `field` and lifts it to the `rows x cols` pixel domain.
pub fn lifted_from_field(
    rows: usize,
    cols: usize,
    field: &GradientField,
    connectivity: Connectivity,
    sigma: f64,
) -> Result<LiftedLaplacian> {
    let f = gradient_operator(rows, cols, field.direction)?;
    if f.nrows() != field.len() {
        return dim_err(format!(
            "{:?} field has {} nodes, operator expects {}",
            field.direction,
            field.len(),
            f.nrows()
        ));
    }
    let graph = build_gradient_graph(field, connectivity, sigma)?;
    lift_laplacian(&f, &graph.laplacian)
}

/// `Φ(x) = xᵀ ℒʰ x + xᵀ ℒᵛ x`.
pub fn gglr_value(x: &[f64], horizontal: &SparseMatrix, vertical: &SparseMatrix) -> Result<f64> {
    if horizontal.ncols() != x.len() || vertical.ncols() != x.len() {
        return dim_err("GGLR operands do not match the signal length");
    }
    Ok(horizontal.quadratic_form(x)? + vertical.quadratic_form(x)?)
}
