//! Reproducible random pixel removal.
//!
//! Masks are drawn with ChaCha8 (`rand_chacha`, seeded through `seed_from_u64`)
//! driving a Fisher–Yates shuffle of the column-major pixel indices. Bounded
//! draws use rejection sampling on `next_u64`, so the sequence depends only on
//! the ChaCha8 stream. The first `round(fraction · MN)` shuffled indices are
//! marked missing. Changing any of this changes every mask.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::grid::{ImageGrid, PixelMask};

/// Uniform integer in `0..=bound`.
fn uniform_inclusive(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    if bound == u64::MAX {
        return rng.next_u64();
    }
    let span = bound + 1;
    let zone = u64::MAX - (u64::MAX % span + 1) % span;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % span;
        }
    }
}

pub fn missing_count(rows: usize, cols: usize, fraction: f64) -> usize {
    ((fraction * (rows * cols) as f64).round() as usize).min(rows * cols)
}

pub fn random_mask(rows: usize, cols: usize, fraction: f64, seed: u64) -> Result<PixelMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return param_err(format!("missing fraction must lie in [0, 1], got {fraction}"));
    }
    let n = rows * cols;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = uniform_inclusive(&mut rng, i as u64) as usize;
        order.swap(i, j);
    }
    let mut known = vec![true; n];
    for &i in &order[..missing_count(rows, cols, fraction)] {
        known[i] = false;
    }
    PixelMask::from_column_major(rows, cols, known)
}

/// Zero-filled preview: missing pixels set to 0.
pub fn degrade(img: &ImageGrid, mask: &PixelMask) -> Result<ImageGrid> {
    mask.check_shape(img)?;
    let values = img
        .values()
        .iter()
        .zip(mask.known())
        .map(|(&v, &k)| if k { v } else { 0.0 })
        .collect();
    ImageGrid::from_column_major(img.rows(), img.cols(), values)
}
