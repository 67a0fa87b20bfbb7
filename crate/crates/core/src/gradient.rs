//! Horizontal and vertical finite-difference gradients on the pixel grid.
//!
//! A horizontal gradient node `(k, l)` holds `X[k, l+1] - X[k, l]` on an
//! `M x (N-1)` node grid; a vertical node holds `X[k+1, l] - X[k, l]` on an
//! `(M-1) x N` node grid. Node vectors use the same column-major layout as
//! pixels.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::grid::{column_major_index, ImageGrid};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl Direction {
    /// Node-grid dimensions for an `rows x cols` image.
    pub fn node_dims(self, rows: usize, cols: usize) -> (usize, usize) {
        match self {
            Direction::Horizontal => (rows, cols.saturating_sub(1)),
            Direction::Vertical => (rows.saturating_sub(1), cols),
        }
    }

    /// Pixel step from a node's anchor pixel to the second pixel it spans.
    pub fn step(self) -> (usize, usize) {
        match self {
            Direction::Horizontal => (0, 1),
            Direction::Vertical => (1, 0),
        }
    }
}

/// Gradient values on one direction's node grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub direction: Direction,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GradientField {
    pub fn new(direction: Direction, rows: usize, cols: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != rows * cols || valid.len() != rows * cols {
            return dim_err(format!(
                "gradient field {rows}x{cols} with {} values and {} flags",
                values.len(),
                valid.len()
            ));
        }
        Ok(Self {
            direction,
            rows,
            cols,
            values,
            valid,
        })
    }

    /// Field with every node set to `value` and marked valid.
    pub fn constant(direction: Direction, rows: usize, cols: usize, value: f64) -> Self {
        Self {
            direction,
            rows,
            cols,
            values: vec![value; rows * cols],
            valid: vec![true; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at node `(k, l)` if it is in bounds and valid.
    #[inline]
    pub fn valid_at(&self, k: isize, l: isize) -> Option<f64> {
        if k < 0 || l < 0 || k as usize >= self.rows || l as usize >= self.cols {
            return None;
        }
        let i = column_major_index(k as usize, l as usize, self.rows);
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Sparse difference operator `F` mapping `vec(X)` to the gradient node vector.
pub fn gradient_operator(rows: usize, cols: usize, direction: Direction) -> Result<SparseMatrix> {
    let (nr, nc) = direction.node_dims(rows, cols);
    if rows == 0 || cols == 0 || nr == 0 || nc == 0 {
        return param_err(format!(
            "{rows}x{cols} image too small for a {direction:?} gradient"
        ));
    }
    let (dk, dl) = direction.step();
    let mut triplets = Vec::with_capacity(2 * nr * nc);
    for l in 0..nc {
        for k in 0..nr {
            let node = column_major_index(k, l, nr);
            triplets.push((node, column_major_index(k, l, rows), -1.0));
            triplets.push((node, column_major_index(k + dk, l + dl, rows), 1.0));
        }
    }
    SparseMatrix::from_triplets(nr * nc, rows * cols, triplets)
}

/// All-valid gradient field of a complete image, evaluated directly.
pub fn gradients_of(img: &ImageGrid, direction: Direction) -> Result<GradientField> {
    let (nr, nc) = direction.node_dims(img.rows(), img.cols());
    if nr == 0 || nc == 0 {
        return param_err(format!(
            "{}x{} image too small for a {direction:?} gradient",
            img.rows(),
            img.cols()
        ));
    }
    let (dk, dl) = direction.step();
    let mut values = Vec::with_capacity(nr * nc);
    for l in 0..nc {
        for k in 0..nr {
            values.push(img.get(k + dk, l + dl) - img.get(k, l));
        }
    }
    Ok(GradientField {
        direction,
        rows: nr,
        cols: nc,
        values,
        valid: vec![true; nr * nc],
    })
}
