mod common;

use common::{jacobi_eigen, norm2, to_dense};
use gglr_core::cg::{conjugate_gradient, CgOptions};
use gglr_core::degrade::random_mask;
use gglr_core::gradient::{gradients_of, Direction, GradientField};
use gglr_core::graph::{build_pixel_graph, lifted_from_field, Connectivity};
use gglr_core::grid::{observations, selection_matrix, ImageGrid, PixelMask};
use gglr_core::solver::{assemble_system, glr_interpolate, interpolate, observations_pin_plane, restore, Method, MuSetting, SolveConfig};
use gglr_core::structure_tensor::estimate_gradient_field;
use gglr_core::{GglrError, SparseMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.68;

fn tight() -> SolveConfig {
    SolveConfig {
        cg_tol: 1e-12,
        ..SolveConfig::default()
    }
}

/// Dense `Fᵀ L F` for one direction, with `L` from 4-connected Gaussian weights on `g`.
fn dense_lifted(rows: usize, cols: usize, dir: Direction, g: &[f64]) -> DMatrix<f64> {
    let (nr, nc) = dir.node_dims(rows, cols);
    let n = rows * cols;
    let mut f = DMatrix::zeros(nr * nc, n);
    for l in 0..nc {
        for k in 0..nr {
            let (dk, dl) = match dir {
                Direction::Horizontal => (0, 1),
                Direction::Vertical => (1, 0),
            };
            f[(k + l * nr, k + l * rows)] = -1.0;
            f[(k + l * nr, k + dk + (l + dl) * rows)] = 1.0;
        }
    }
    let mut lap = DMatrix::zeros(nr * nc, nr * nc);
    let mut link = |i: usize, j: usize| {
        let w = (-(g[i] - g[j]).powi(2) / (SIGMA * SIGMA)).exp();
        lap[(i, i)] += w;
        lap[(j, j)] += w;
        lap[(i, j)] -= w;
        lap[(j, i)] -= w;
    };
    for l in 0..nc {
        for k in 0..nr {
            let i = k + l * nr;
            if k + 1 < nr {
                link(i, i + 1);
            }
            if l + 1 < nc {
                link(i, i + nr);
            }
        }
    }
    f.transpose() * lap * f
}

fn dense_differences(x: &[f64], rows: usize, cols: usize, dir: Direction) -> Vec<f64> {
    let (nr, nc) = dir.node_dims(rows, cols);
    let mut g = Vec::with_capacity(nr * nc);
    for l in 0..nc {
        for k in 0..nr {
            let next = match dir {
                Direction::Horizontal => x[k + (l + 1) * rows],
                Direction::Vertical => x[k + 1 + l * rows],
            };
            g.push(next - x[k + l * rows]);
        }
    }
    g
}

fn dense_solve(mask: &PixelMask, y_full: &[f64], lap: DMatrix<f64>, mu: f64) -> Vec<f64> {
    let n = mask.len();
    let b = DMatrix::from_fn(n, n, |i, j| if i == j && mask.known()[i] { 1.0 } else { 0.0 }) + lap * mu;
    let rhs = DVector::from_fn(n, |i, _| if mask.known()[i] { y_full[i] } else { 0.0 });
    b.lu().solve(&rhs).unwrap().as_slice().to_vec()
}

#[test]
fn system_matrix_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = ImageGrid::from_fn(8, 8, |_, _| rng.random::<f64>()).unwrap();
    let mask = random_mask(8, 8, 0.4, 3).unwrap();
    let gh = gradients_of(&img, Direction::Horizontal).unwrap();
    let gv = gradients_of(&img, Direction::Vertical).unwrap();
    let lh = lifted_from_field(8, 8, &gh, Connectivity::Four, SIGMA).unwrap();
    let lv = lifted_from_field(8, 8, &gv, Connectivity::Four, SIGMA).unwrap();
    let h = selection_matrix(&mask).unwrap();
    let y = observations(&img, &mask).unwrap();
    let (b_mat, b) = assemble_system(&h, &lh.matrix, &lv.matrix, 0.2, &y).unwrap();

    let expect = DMatrix::from_fn(64, 64, |i, j| if i == j && mask.known()[i] { 1.0 } else { 0.0 })
        + (dense_lifted(8, 8, Direction::Horizontal, &gh.values) + dense_lifted(8, 8, Direction::Vertical, &gv.values)) * 0.2;
    for i in 0..64 {
        for j in 0..64 {
            assert!((b_mat.get(i, j) - expect[(i, j)]).abs() < 1e-12, "({i},{j})");
        }
        let bi = if mask.known()[i] { img.values()[i] } else { 0.0 };
        assert_eq!(b[i], bi);
    }
}

#[test]
fn line_system_is_definite_with_two_observations() {
    for n in [4usize, 9, 30, 64] {
        let field = GradientField::constant(Direction::Horizontal, 1, n - 1, 0.0);
        let lifted = lifted_from_field(1, n, &field, Connectivity::Four, 1.0).unwrap();
        let mask = PixelMask::from_fn(1, n, |_, l| l == 1 || l == n - 1).unwrap();
        let h = selection_matrix(&mask).unwrap();
        let (b_mat, _) = assemble_system(&h, &lifted.matrix, &SparseMatrix::zeros(n, n), 0.01, &[0.0, 0.0]).unwrap();
        let (eig, _) = jacobi_eigen(&to_dense(&b_mat));
        assert!(eig[0] > 0.0, "n = {n}: {}", eig[0]);
    }
}

#[test]
fn cg_matches_dense_lu_on_random_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let n = 16;
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| spd[(i, j)]).collect()).collect();
    let sparse = SparseMatrix::from_dense(&rows).unwrap();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = conjugate_gradient(
        &sparse,
        &b,
        &vec![0.0; n],
        CgOptions {
            tol: 1e-13,
            max_iter: 1000,
            jacobi: false,
        },
    )
    .unwrap();
    let direct = spd.lu().solve(&DVector::from_column_slice(&b)).unwrap();
    let rel = (DVector::from_column_slice(&out.x) - &direct).norm() / direct.norm();
    assert!(rel < 1e-8, "{rel:e}");
}

fn two_plane_image() -> ImageGrid {
    ImageGrid::from_fn(16, 16, |k, l| {
        if l < 8 {
            0.2 + 0.03 * l as f64 + 0.01 * k as f64
        } else {
            0.7 - 0.02 * l as f64 + 0.015 * k as f64
        }
    })
    .unwrap()
}

#[test]
fn two_plane_step_matches_dense_fixed_point() {
    let img = two_plane_image();
    let mask = random_mask(16, 16, 0.5, 42).unwrap();
    let config = tight();
    let y = observations(&img, &mask).unwrap();
    let report = interpolate(&y, &mask, &config).unwrap();

    // same outer loop, with dense assembly and LU solves
    let (rows, cols) = (16, 16);
    let zero_filled: Vec<f64> = img.values().iter().zip(mask.known()).map(|(&v, &k)| if k { v } else { 0.0 }).collect();
    let zf = ImageGrid::from_column_major(rows, cols, zero_filled.clone()).unwrap();
    let (eh, ev) = estimate_gradient_field(&zf, &mask, config.window).unwrap();
    let mut lap = dense_lifted(rows, cols, Direction::Horizontal, &eh.values) + dense_lifted(rows, cols, Direction::Vertical, &ev.values);
    let mut x = zero_filled.clone();
    let mut iterations = 0;
    for outer in 0..config.outer_max_iter {
        if outer > 0 {
            lap = dense_lifted(rows, cols, Direction::Horizontal, &dense_differences(&x, rows, cols, Direction::Horizontal))
                + dense_lifted(rows, cols, Direction::Vertical, &dense_differences(&x, rows, cols, Direction::Vertical));
        }
        let next = dense_solve(&mask, img.values(), lap.clone(), 0.01);
        iterations += 1;
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm2(&x).sqrt();
        x = next;
        if change < config.outer_tol {
            break;
        }
    }
    assert_eq!(report.outer_iterations, iterations);
    let err = report.image.values().iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn energy_identity_against_dense_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for size in [6usize, 10, 16] {
        let img = ImageGrid::from_fn(size, size, |_, _| rng.random::<f64>()).unwrap();
        let mask = random_mask(size, size, 0.5, size as u64).unwrap();
        let mu = 0.05;
        let gh = gradients_of(&img, Direction::Horizontal).unwrap();
        let gv = gradients_of(&img, Direction::Vertical).unwrap();
        let lh = lifted_from_field(size, size, &gh, Connectivity::Four, SIGMA).unwrap();
        let lv = lifted_from_field(size, size, &gv, Connectivity::Four, SIGMA).unwrap();
        let h = selection_matrix(&mask).unwrap();
        let y = observations(&img, &mask).unwrap();
        let (b_mat, b) = assemble_system(&h, &lh.matrix, &lv.matrix, mu, &y).unwrap();
        let x = conjugate_gradient(&b_mat, &b, &vec![0.0; size * size], CgOptions { tol: 1e-12, max_iter: 10_000, jacobi: false })
            .unwrap()
            .x;

        let fidelity: f64 = h.matvec(&x).unwrap().iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        let sparse_energy = fidelity + mu * (lh.quadratic_form(&x).unwrap() + lv.quadratic_form(&x).unwrap());

        let lap = dense_lifted(size, size, Direction::Horizontal, &gh.values) + dense_lifted(size, size, Direction::Vertical, &gv.values);
        let xv = DVector::from_column_slice(&x);
        let dense_fidelity: f64 = (0..size * size)
            .filter(|&i| mask.known()[i])
            .map(|i| (x[i] - img.values()[i]).powi(2))
            .sum();
        let dense_energy = dense_fidelity + mu * (xv.transpose() * &lap * &xv)[(0, 0)];
        assert!((sparse_energy - dense_energy).abs() <= 1e-8 * dense_energy, "{sparse_energy} vs {dense_energy}");
    }
}

#[test]
fn objective_decreases_within_each_outer_step() {
    let img = two_plane_image();
    let mask = random_mask(16, 16, 0.6, 7).unwrap();
    let h = selection_matrix(&mask).unwrap();
    let y = observations(&img, &mask).unwrap();
    let mu = 0.01;
    let objective = |lh: &SparseMatrix, lv: &SparseMatrix, x: &[f64]| {
        let fit: f64 = h.matvec(x).unwrap().iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        fit + mu * (lh.quadratic_form(x).unwrap() + lv.quadratic_form(x).unwrap())
    };
    let mut x = h.transpose().matvec(&y).unwrap();
    let zf = ImageGrid::from_column_major(16, 16, x.clone()).unwrap();
    let (eh, ev) = estimate_gradient_field(&zf, &mask, 5).unwrap();
    let mut fields = (eh, ev);
    for _ in 0..5 {
        let lh = lifted_from_field(16, 16, &fields.0, Connectivity::Four, SIGMA).unwrap().matrix;
        let lv = lifted_from_field(16, 16, &fields.1, Connectivity::Four, SIGMA).unwrap().matrix;
        let (b_mat, b) = assemble_system(&h, &lh, &lv, mu, &y).unwrap();
        let next = conjugate_gradient(&b_mat, &b, &x, CgOptions { tol: 1e-8, max_iter: 10_000, jacobi: false }).unwrap().x;
        assert!(objective(&lh, &lv, &next) <= objective(&lh, &lv, &x) + 1e-15);
        x = next;
        let est = ImageGrid::from_column_major(16, 16, x.clone()).unwrap();
        fields = (gradients_of(&est, Direction::Horizontal).unwrap(), gradients_of(&est, Direction::Vertical).unwrap());
    }
}

#[test]
fn reports_are_bitwise_deterministic() {
    let img = two_plane_image();
    let mask = random_mask(16, 16, 0.7, 5).unwrap();
    for method in [Method::Gglr2, Method::Gglr4, Method::Glr] {
        let a = restore(&img, &mask, method, &SolveConfig::default()).unwrap();
        let b = restore(&img, &mask, method, &SolveConfig::default()).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.cg_iterations, b.cg_iterations);
    }
}

#[test]
fn collinear_observations_are_insufficient() {
    let img = ImageGrid::constant(8, 8, 0.5).unwrap();
    let mask = PixelMask::from_fn(8, 8, |k, _| k == 3).unwrap();
    let y = observations(&img, &mask).unwrap();
    assert!(matches!(interpolate(&y, &mask, &SolveConfig::default()), Err(GglrError::InsufficientObservations)));
    // GLR only needs one observation
    assert!(glr_interpolate(&y, &mask, &SolveConfig::default()).is_ok());
}

#[test]
fn glr_quadratic_form_is_the_edge_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let img = ImageGrid::from_fn(2, 4, |_, _| rng.random::<f64>()).unwrap();
    let graph = build_pixel_graph(&img, SIGMA).unwrap();
    let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
    let v = img.values();
    let mut edge_sum = 0.0;
    for i in 0..8usize {
        for j in i + 1..8 {
            let (ki, li, kj, lj) = (i % 2, i / 2, j % 2, j / 2);
            if ki.abs_diff(kj) + li.abs_diff(lj) == 1 {
                edge_sum += (-(v[i] - v[j]).powi(2) / (SIGMA * SIGMA)).exp() * (x[i] - x[j]).powi(2);
            }
        }
    }
    let form = graph.laplacian.quadratic_form(&x).unwrap();
    assert!((form - edge_sum).abs() <= 1e-10 * edge_sum);
}

prop_compose! {
    fn pinned_mask(rows: usize, cols: usize)(bits in proptest::collection::vec(proptest::bool::weighted(0.4), rows * cols)) -> PixelMask {
        PixelMask::from_fn(rows, cols, |k, l| bits[k + l * rows]).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planes_are_recovered_for_any_mu(
        a in 0.0f64..0.5, b in -0.02f64..0.02, c in -0.02f64..0.02,
        log_mu in -3.0f64..1.0,
        mask in pinned_mask(12, 12),
        conn in prop_oneof![Just(Method::Gglr2), Just(Method::Gglr4)],
    ) {
        prop_assume!(observations_pin_plane(&mask));
        let img = ImageGrid::from_fn(12, 12, |k, l| a + b * l as f64 + c * k as f64).unwrap();
        let config = SolveConfig { mu: MuSetting::Fixed(10f64.powf(log_mu)), cg_tol: 1e-13, ..SolveConfig::default() };
        let report = restore(&img, &mask, conn, &config).unwrap();
        let err = report.image.values().iter().zip(img.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-6, "max error {err:e}");
    }

    #[test]
    fn glr_recovers_constants(value in 0.0f64..1.0, mask in pinned_mask(8, 8), log_mu in -3.0f64..1.0) {
        prop_assume!(mask.known_count() > 0);
        let img = ImageGrid::constant(8, 8, value).unwrap();
        let config = SolveConfig { mu: MuSetting::Fixed(10f64.powf(log_mu)), cg_tol: 1e-12, ..SolveConfig::default() };
        let report = restore(&img, &mask, Method::Glr, &config).unwrap();
        let err = report.image.values().iter().map(|p| (p - value).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-6);
    }
}
