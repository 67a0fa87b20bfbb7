//! Conjugate gradient for sparse symmetric positive (semi-)definite systems.
//!
//! Convergence is measured on the relative residual `‖Bx − b‖ / ‖b‖`. When the
//! recurrence residual passes the tolerance, the true residual is recomputed;
//! if rounding drift left it above tolerance, CG restarts from the current
//! iterate. All reductions run sequentially in index order, so the result is
//! a deterministic function of the inputs.

use crate::error::{dim_err, GglrError, Result};
use crate::sparse::SparseMatrix;

/// Symmetry tolerance relative to the largest entry of `B`.
const SYMMETRY_TOL: f64 = 1e-12;

/// Curvature `pᵀBp` below this fraction of `‖B‖_max · ‖p‖²` counts as zero.
const CURVATURE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Diagonal (Jacobi) preconditioning.
    pub jacobi: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    /// `false` when `max_iter` was reached first.
    pub converged: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(b_mat: &SparseMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> Result<()> {
    b_mat.matvec_into(x, r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(())
}

/// Solves `B x = b` from the starting point `x0`.
pub fn conjugate_gradient(b_mat: &SparseMatrix, b: &[f64], x0: &[f64], opts: CgOptions) -> Result<CgOutcome> {
    let n = b_mat.nrows();
    if b_mat.ncols() != n || b.len() != n || x0.len() != n {
        return dim_err(format!(
            "CG with B {}x{}, b[{}], x0[{}]",
            b_mat.nrows(),
            b_mat.ncols(),
            b.len(),
            x0.len()
        ));
    }
    if !b_mat.is_symmetric(SYMMETRY_TOL) {
        return Err(GglrError::NotSymmetric);
    }
    if b.iter().chain(x0).any(|v| !v.is_finite()) {
        return Err(GglrError::NumericalBreakdown);
    }

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }

    let inv_diag: Option<Vec<f64>> = opts.jacobi.then(|| {
        b_mat
            .diagonal_values()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect()
    });
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };
    let scale = b_mat.max_abs();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut bp = vec![0.0; n];
    let mut iterations = 0;

    true_residual(b_mat, b, &x, &mut r)?;
    let mut rel = dot(&r, &r).sqrt() / b_norm;

    'restart: loop {
        if rel <= opts.tol {
            return Ok(CgOutcome {
                x,
                iterations,
                residual: rel,
                converged: true,
            });
        }
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);

        while iterations < opts.max_iter {
            b_mat.matvec_into(&p, &mut bp)?;
            let curvature = dot(&p, &bp);
            if !curvature.is_finite() || !rz.is_finite() {
                return Err(GglrError::NumericalBreakdown);
            }
            if curvature <= CURVATURE_TOL * scale * dot(&p, &p) {
                return Err(GglrError::SingularSystem);
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * bp[i];
            }
            iterations += 1;

            rel = dot(&r, &r).sqrt() / b_norm;
            if !rel.is_finite() {
                return Err(GglrError::NumericalBreakdown);
            }
            if rel <= opts.tol {
                true_residual(b_mat, b, &x, &mut r)?;
                rel = dot(&r, &r).sqrt() / b_norm;
                continue 'restart;
            }

            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }

        true_residual(b_mat, b, &x, &mut r)?;
        rel = dot(&r, &r).sqrt() / b_norm;
        return Ok(CgOutcome {
            x,
            iterations,
            residual: rel,
            converged: rel <= opts.tol,
        });
    }
}
