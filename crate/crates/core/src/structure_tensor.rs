//! Local gradient estimation from partially observed pixels.
//!
//! Around each pixel, a windowed structure tensor is averaged from the
//! gradients whose defining pixels are all known. The dominant eigenpair,
//! scaled by `sqrt(λ_max)`, gives a horizontal/vertical gradient estimate for
//! nodes that cannot be observed directly.

use rayon::prelude::*;

use crate::error::{param_err, Result};
use crate::gradient::{Direction, GradientField};
use crate::grid::{column_major_index, ImageGrid, PixelMask};

/// Windowed average of `[gh², gh·gv; gh·gv, gv²]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureTensor {
    pub hh: f64,
    pub hv: f64,
    pub vv: f64,
    /// Number of window offsets that contributed.
    pub count: usize,
    /// Mean of the contributing `(gh, gv)` samples.
    pub mean: (f64, f64),
}

impl StructureTensor {
    /// Eigenvalues `(λ_max, λ_min)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        sym2_eigenvalues(self.hh, self.hv, self.vv)
    }

    /// Unit eigenvector of the larger eigenvalue (arbitrary sign).
    pub fn dominant_eigenvector(&self) -> (f64, f64) {
        let (lmax, _) = self.eigenvalues();
        sym2_eigenvector(self.hh, self.hv, self.vv, lmax)
    }

    pub fn dominant_gradient(&self) -> (f64, f64) {
        dominant_gradient(self, self.mean)
    }
}

/// Closed-form eigenvalues of `[[a, b], [b, c]]`, larger first.
pub fn sym2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    (mid + rad, mid - rad)
}

/// Unit eigenvector of `[[a, b], [b, c]]` for eigenvalue `lambda`.
pub fn sym2_eigenvector(a: f64, b: f64, c: f64, lambda: f64) -> (f64, f64) {
    if b == 0.0 {
        return if a >= c { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    // both rows of (A - λI) give a candidate; take the better conditioned one
    let u = (lambda - c, b);
    let v = (b, lambda - a);
    let (nu, nv) = (u.0.hypot(u.1), v.0.hypot(v.1));
    let (w, n) = if nu >= nv { (u, nu) } else { (v, nv) };
    if n == 0.0 {
        return (1.0, 0.0);
    }
    (w.0 / n, w.1 / n)
}

/// Gradient field whose nodes are valid iff both defining pixels are known.
pub fn observable_gradients(img: &ImageGrid, mask: &PixelMask, direction: Direction) -> Result<GradientField> {
    mask.check_shape(img)?;
    let (rows, cols) = (img.rows(), img.cols());
    let (nr, nc) = direction.node_dims(rows, cols);
    let (dk, dl) = direction.step();
    let mut values = Vec::with_capacity(nr * nc);
    let mut valid = Vec::with_capacity(nr * nc);
    for l in 0..nc {
        for k in 0..nr {
            let ok = mask.is_known(k, l) && mask.is_known(k + dk, l + dl);
            valid.push(ok);
            values.push(if ok { img.get(k + dk, l + dl) - img.get(k, l) } else { 0.0 });
        }
    }
    GradientField::new(direction, nr, nc, values, valid)
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return param_err(format!("window must be odd and positive, got {window}"));
    }
    Ok(())
}

/// Structure tensor at pixel `(row, col)` over a `window x window` neighborhood.
///
/// Only offsets where both the horizontal and the vertical gradient are valid
/// contribute; with no such offset the zero tensor with `count == 0` is returned.
pub fn structure_tensor_at(
    row: usize,
    col: usize,
    horizontal: &GradientField,
    vertical: &GradientField,
    window: usize,
) -> Result<StructureTensor> {
    check_window(window)?;
    Ok(tensor_unchecked(row, col, horizontal, vertical, window))
}

fn tensor_unchecked(row: usize, col: usize, gh: &GradientField, gv: &GradientField, window: usize) -> StructureTensor {
    let half = (window / 2) as isize;
    let (mut hh, mut hv, mut vv, mut sh, mut sv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    for dl in -half..=half {
        for dk in -half..=half {
            let (k, l) = (row as isize + dk, col as isize + dl);
            if let (Some(h), Some(v)) = (gh.valid_at(k, l), gv.valid_at(k, l)) {
                hh += h * h;
                hv += h * v;
                vv += v * v;
                sh += h;
                sv += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return StructureTensor::default();
    }
    let n = count as f64;
    StructureTensor {
        hh: hh / n,
        hv: hv / n,
        vv: vv / n,
        count,
        mean: (sh / n, sv / n),
    }
}

/// `sqrt(λ_max) · e` with the sign of `e` agreeing with `mean`.
///
/// When `mean` is orthogonal to `e` (including a zero mean) the sign makes the
/// horizontal component nonnegative, then the vertical one.
pub fn dominant_gradient(tensor: &StructureTensor, mean: (f64, f64)) -> (f64, f64) {
    let (lmax, _) = tensor.eigenvalues();
    if !(lmax > 0.0) {
        return (0.0, 0.0);
    }
    let (mut eh, mut ev) = tensor.dominant_eigenvector();
    let dot = eh * mean.0 + ev * mean.1;
    let flip = if dot != 0.0 {
        dot < 0.0
    } else if eh != 0.0 {
        eh < 0.0
    } else {
        ev < 0.0
    };
    if flip {
        eh = -eh;
        ev = -ev;
    }
    let s = lmax.sqrt();
    (s * eh, s * ev)
}

/// Complete horizontal and vertical gradient fields for a partially observed image.
///
/// Observable nodes keep their finite difference. Every other node takes the
/// matching component of the structure-tensor estimate at its anchor pixel
/// (`(k, l)` for both directions), or 0 when that tensor has no samples.
/// `valid` in the returned fields marks the directly observed nodes.
pub fn estimate_gradient_field(img: &ImageGrid, mask: &PixelMask, window: usize) -> Result<(GradientField, GradientField)> {
    check_window(window)?;
    let gh = observable_gradients(img, mask, Direction::Horizontal)?;
    let gv = observable_gradients(img, mask, Direction::Vertical)?;
    let rows = img.rows();

    let needs: Vec<usize> = (0..img.len())
        .filter(|&p| {
            let (k, l) = (p % rows, p / rows);
            let h_missing = l < gh.cols && !gh.valid[column_major_index(k, l, gh.rows)];
            let v_missing = k < gv.rows && !gv.valid[column_major_index(k, l, gv.rows)];
            h_missing || v_missing
        })
        .collect();
    let estimates: Vec<(usize, (f64, f64))> = needs
        .par_iter()
        .map(|&p| {
            let t = tensor_unchecked(p % rows, p / rows, &gh, &gv, window);
            (p, t.dominant_gradient())
        })
        .collect();

    let mut filled_h = gh.clone();
    let mut filled_v = gv.clone();
    for (p, (eh, ev)) in estimates {
        let (k, l) = (p % rows, p / rows);
        if l < gh.cols {
            let i = column_major_index(k, l, gh.rows);
            if !gh.valid[i] {
                filled_h.values[i] = eh;
            }
        }
        if k < gv.rows {
            let i = column_major_index(k, l, gv.rows);
            if !gv.valid[i] {
                filled_v.values[i] = ev;
            }
        }
    }
    Ok((filled_h, filled_v))
}
