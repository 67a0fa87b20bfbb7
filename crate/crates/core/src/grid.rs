//! Grayscale rasters, observation masks and the vectorization convention.
//!
//! Every pixel-indexed vector in this crate is column-major: pixel at
//! (row `k`, col `l`), zero-based, lives at `k + l * rows`. The single owner of
//! that formula is [`column_major_index`].

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, GglrError, Result};
use crate::sparse::SparseMatrix;

/// Vector index of the zero-based pixel `(row, col)` on a grid with `rows` rows.
#[inline]
pub fn column_major_index(row: usize, col: usize, rows: usize) -> usize {
    row + col * rows
}

/// An `rows x cols` grayscale image, intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    /// Builds an image from column-major values.
    pub fn from_column_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return param_err("image dimensions must be positive");
        }
        if values.len() != rows * cols {
            return dim_err(format!(
                "expected {} values for a {rows}x{cols} image, got {}",
                rows * cols,
                values.len()
            ));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds an image from row-major values (the order used by image files).
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return dim_err(format!(
                "expected {} values for a {rows}x{cols} image, got {}",
                rows * cols,
                values.len()
            ));
        }
        let mut out = vec![0.0; values.len()];
        for k in 0..rows {
            for l in 0..cols {
                out[column_major_index(k, l, rows)] = values[k * cols + l];
            }
        }
        Self::from_column_major(rows, cols, out)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for l in 0..cols {
            for k in 0..rows {
                values.push(f(k, l));
            }
        }
        Self::from_column_major(rows, cols, values)
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::from_column_major(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[column_major_index(row, col, self.rows)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[column_major_index(row, col, self.rows)] = value;
    }

    /// Column-major view of the pixel values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major copy of the pixel values.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.rows {
            for l in 0..self.cols {
                out.push(self.get(k, l));
            }
        }
        out
    }

    /// Copy with every intensity clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub(crate) fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return dim_err(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        Ok(())
    }
}

/// `vec(X)`: stacks the columns of the image.
pub fn vectorize(img: &ImageGrid) -> Vec<f64> {
    img.values.clone()
}

/// Inverse of [`vectorize`].
pub fn devectorize(rows: usize, cols: usize, x: &[f64]) -> Result<ImageGrid> {
    ImageGrid::from_column_major(rows, cols, x.to_vec())
}

/// Per-pixel known/missing indicator, column-major and aligned with [`ImageGrid`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    rows: usize,
    cols: usize,
    known: Vec<bool>,
    known_count: usize,
}

impl PixelMask {
    pub fn from_column_major(rows: usize, cols: usize, known: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return param_err("mask dimensions must be positive");
        }
        if known.len() != rows * cols {
            return dim_err(format!(
                "expected {} mask entries for a {rows}x{cols} mask, got {}",
                rows * cols,
                known.len()
            ));
        }
        let known_count = known.iter().filter(|&&b| b).count();
        Ok(Self {
            rows,
            cols,
            known,
            known_count,
        })
    }

    pub fn all_known(rows: usize, cols: usize) -> Result<Self> {
        Self::from_column_major(rows, cols, vec![true; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut known = Vec::with_capacity(rows * cols);
        for l in 0..cols {
            for k in 0..rows {
                known.push(f(k, l));
            }
        }
        Self::from_column_major(rows, cols, known)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    /// Number of known pixels, `K`.
    pub fn known_count(&self) -> usize {
        self.known_count
    }

    pub fn missing_count(&self) -> usize {
        self.known.len() - self.known_count
    }

    #[inline]
    pub fn is_known(&self, row: usize, col: usize) -> bool {
        self.known[column_major_index(row, col, self.rows)]
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    /// Ascending column-major indices of the known pixels.
    pub fn known_indices(&self) -> Vec<usize> {
        self.known
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub(crate) fn check_shape(&self, img: &ImageGrid) -> Result<()> {
        if self.rows != img.rows() || self.cols != img.cols() {
            return dim_err(format!(
                "mask {}x{} vs image {}x{}",
                self.rows,
                self.cols,
                img.rows(),
                img.cols()
            ));
        }
        Ok(())
    }
}

/// The `K x MN` selection operator `H` picking the known pixels in ascending index order.
pub fn selection_matrix(mask: &PixelMask) -> Result<SparseMatrix> {
    if mask.known_count() == 0 {
        return Err(GglrError::NoObservations);
    }
    let triplets = mask
        .known_indices()
        .into_iter()
        .enumerate()
        .map(|(i, j)| (i, j, 1.0));
    SparseMatrix::from_triplets(mask.known_count(), mask.len(), triplets)
}

/// Observation vector `y = Hx`: the known pixel values in ascending index order.
pub fn observations(img: &ImageGrid, mask: &PixelMask) -> Result<Vec<f64>> {
    mask.check_shape(img)?;
    Ok(mask
        .known
        .iter()
        .zip(img.values())
        .filter_map(|(&k, &v)| k.then_some(v))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorize_is_column_major() {
        // [[a, b], [c, d]]
        let img = ImageGrid::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(vectorize(&img), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn row_image_vectorizes_unchanged() {
        let row = [0.1, 0.2, 0.3, 0.4, 0.5];
        let img = ImageGrid::from_row_major(1, 5, &row).unwrap();
        assert_eq!(vectorize(&img), row.to_vec());
    }

    #[test]
    fn vectorize_round_trip() {
        let img = ImageGrid::from_fn(5, 7, |k, l| ((k * 31 + l * 17) % 13) as f64 / 13.0).unwrap();
        let back = devectorize(5, 7, &vectorize(&img)).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.to_row_major().len(), 35);
    }

    #[test]
    fn vectorized_index_formula() {
        let img = ImageGrid::from_fn(3, 4, |k, l| (10 * k + l) as f64).unwrap();
        let x = vectorize(&img);
        for k in 0..3 {
            for l in 0..4 {
                assert_eq!(x[k + l * 3], img.get(k, l));
            }
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(ImageGrid::from_column_major(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageGrid::from_column_major(0, 2, vec![]).is_err());
        assert!(PixelMask::from_column_major(2, 2, vec![true; 5]).is_err());
    }

    #[test]
    fn mask_counts_known() {
        let m = PixelMask::from_column_major(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(m.known_count(), 2);
        assert_eq!(m.missing_count(), 2);
        assert_eq!(m.known_indices(), vec![0, 3]);
    }

    #[test]
    fn selection_of_full_mask_is_identity() {
        let m = PixelMask::all_known(3, 2).unwrap();
        let h = selection_matrix(&m).unwrap();
        assert_eq!(h.to_dense(), SparseMatrix::identity(6).to_dense());
    }

    #[test]
    fn selection_three_pixel_example() {
        let m = PixelMask::from_column_major(1, 3, vec![true, false, true]).unwrap();
        let h = selection_matrix(&m).unwrap();
        assert_eq!(h.to_dense(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let m = PixelMask::from_column_major(2, 2, vec![false; 4]).unwrap();
        assert!(matches!(selection_matrix(&m), Err(GglrError::NoObservations)));
    }

    #[test]
    fn hth_zeroes_missing_entries() {
        let pattern = [true, false, true, true, false, false, true, false, true, true, true, false, false, true, false, true];
        let m = PixelMask::from_column_major(4, 4, pattern.to_vec()).unwrap();
        let h = selection_matrix(&m).unwrap();
        let hth = h.transpose().matmul(&h).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin() + 1.5).collect();
        let out = hth.matvec(&x).unwrap();
        // dense oracle: diag(mask) * x
        for i in 0..16 {
            let expect = if pattern[i] { x[i] } else { 0.0 };
            assert_eq!(out[i], expect);
        }
        let dense = hth.to_dense();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j && pattern[i] { 1.0 } else { 0.0 };
                assert_eq!(dense[i][j], expect);
            }
        }
    }

    #[test]
    fn observations_follow_known_order() {
        let img = ImageGrid::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = PixelMask::from_column_major(2, 2, vec![false, true, true, false]).unwrap();
        assert_eq!(observations(&img, &m).unwrap(), vec![3.0, 2.0]);
    }
}
