//! Spectral Sobolev norms against a reference decomposition and graded
//! operator norms for matrices expressed in that eigenbasis.
//!
//! The reference scale is the unit-coefficient (Laplacian) decomposition;
//! the weight `W = diag((1 + lambda_j)^{1/2})` grades modes by regularity,
//! and the `alpha`-graded norm of a matrix `M` is the largest singular value
//! of `W^alpha M W^{-alpha}`.

use crate::eigen::SpectralDecomposition;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Iteration cap for the power method on the graded Gram matrix.
pub const POWER_ITERATION_CAP: usize = 20_000;

/// Relative convergence tolerance for the power method.
pub const POWER_ITERATION_TOL: f64 = 1e-8;

/// A spectral Sobolev norm split into its mean-free part and the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevNorm {
    /// `sqrt(sum_{j >= 1} lambda_j^k <phi, e_j>_h^2)` over retained modes.
    pub seminorm: f64,
    /// Spatial mean of the field (the constant-mode projection value).
    pub mean: f64,
}

/// Sobolev norm of order `k` (possibly negative) of a grid field against the
/// reference decomposition.
pub fn sobolev_norm(
    phi: &[f64],
    k: i32,
    reference: &SpectralDecomposition,
) -> Result<SobolevNorm> {
    let n = reference.grid().len();
    if phi.len() != n {
        return Err(Error::Config(format!(
            "field has {} cells, reference grid has {n}",
            phi.len()
        )));
    }
    let coeffs = reference.project(phi);
    let mut sum = 0.0;
    for (j, &c) in coeffs.iter().enumerate().skip(1) {
        sum += reference.eigenvalue(j).powi(k) * c * c;
    }
    let mean = coeffs[0] * reference.eigenvector(0)[0];
    Ok(SobolevNorm { seminorm: sum.sqrt(), mean })
}

/// Largest singular value of `W^alpha M W^{-alpha}` for `M` given row-major
/// over the first `dim` modes of the reference basis, computed by power
/// iteration on the Gram matrix to relative tolerance
/// [`POWER_ITERATION_TOL`] under the cap [`POWER_ITERATION_CAP`].
pub fn operator_matrix_norm(
    m: &[f64],
    dim: usize,
    alpha: f64,
    reference: &SpectralDecomposition,
) -> Result<f64> {
    if m.len() != dim * dim {
        return Err(Error::Config(format!(
            "matrix has {} entries, expected {dim} x {dim}",
            m.len()
        )));
    }
    if dim > reference.modes() {
        return Err(Error::Config(format!(
            "matrix dimension {dim} exceeds the {} reference modes",
            reference.modes()
        )));
    }
    if dim == 0 {
        return Ok(0.0);
    }
    // Graded matrix A = W^alpha M W^{-alpha}.
    let weights: Vec<f64> = (0..dim)
        .map(|j| (1.0 + reference.eigenvalue(j)).powf(alpha / 2.0))
        .collect();
    let mut a = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            a[r * dim + c] = weights[r] * m[r * dim + c] / weights[c];
        }
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }

    let apply = |v: &[f64], out: &mut [f64]| {
        // out = A^T (A v)
        let mut av = vec![0.0; dim];
        for r in 0..dim {
            let mut s = 0.0;
            for c in 0..dim {
                s += a[r * dim + c] * v[c];
            }
            av[r] = s;
        }
        for c in 0..dim {
            let mut s = 0.0;
            for r in 0..dim {
                s += a[r * dim + c] * av[r];
            }
            out[c] = s;
        }
    };

    let mut rng = Stream::from_seed(0x9077e2);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm0;
    }
    let mut out = vec![0.0; dim];
    let mut last = 0.0f64;
    for _ in 0..POWER_ITERATION_CAP {
        apply(&v, &mut out);
        let rayleigh: f64 = v.iter().zip(&out).map(|(x, y)| x * y).sum();
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        for (x, o) in v.iter_mut().zip(&out) {
            *x = o / norm;
        }
        let sigma = rayleigh.max(0.0).sqrt();
        if (sigma - last).abs() <= POWER_ITERATION_TOL * sigma.max(f64::MIN_POSITIVE) {
            return Ok(sigma);
        }
        last = sigma;
    }
    Err(Error::Numerical(format!(
        "power iteration did not settle within {POWER_ITERATION_CAP} steps; \
         last singular value estimate {last:.12e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{eigendecompose, EigenStrategy};
    use crate::field::DiffusivityField;
    use crate::geometry::{build_grid, Domain};
    use crate::stencil::{assemble_generator, FaceAverage};
    use nalgebra::DMatrix;

    fn reference(n: usize) -> SpectralDecomposition {
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[n]).unwrap();
        let field = DiffusivityField::constant(&grid, 1.0).unwrap();
        let gen = assemble_generator(&grid, &field, FaceAverage::Arithmetic).unwrap();
        eigendecompose(&gen, None, EigenStrategy::Auto).unwrap()
    }

    #[test]
    fn single_mode_norm_is_an_eigenvalue_power() {
        let r = reference(64);
        for k in [-1i32, 0, 2] {
            let out = sobolev_norm(r.eigenvector(1), k, &r).unwrap();
            let expect = r.eigenvalue(1).powi(k).sqrt();
            assert!(
                (out.seminorm - expect).abs() < 1e-12 * expect.max(1.0),
                "k = {k}: {} vs {expect}",
                out.seminorm
            );
            assert!(out.mean.abs() < 1e-10);
        }
    }

    #[test]
    fn order_zero_matches_grid_norm_on_mean_zero_fields() {
        let r = reference(48);
        let grid = r.grid().clone();
        let mut rng = Stream::from_seed(12);
        let mut phi: Vec<f64> = (0..grid.len()).map(|_| rng.standard_normal()).collect();
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        for v in phi.iter_mut() {
            *v -= mean;
        }
        let out = sobolev_norm(&phi, 0, &r).unwrap();
        assert!((out.seminorm - grid.norm(&phi)).abs() < 1e-10);
    }

    #[test]
    fn negative_order_damps_high_modes() {
        let r = reference(64);
        let low = sobolev_norm(r.eigenvector(1), -1, &r).unwrap().seminorm;
        let high = sobolev_norm(r.eigenvector(5), -1, &r).unwrap().seminorm;
        assert!(high < low);
    }

    #[test]
    fn mean_part_is_reported_separately() {
        let r = reference(32);
        let phi = vec![3.0; 32];
        let out = sobolev_norm(&phi, 2, &r).unwrap();
        assert!((out.mean - 3.0).abs() < 1e-12);
        assert!(out.seminorm < 1e-10);
    }

    #[test]
    fn identity_has_unit_norm_for_every_grading() {
        let r = reference(32);
        let dim = 8;
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        for alpha in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let norm = operator_matrix_norm(&m, dim, alpha, &r).unwrap();
            assert!((norm - 1.0).abs() < 1e-7, "alpha = {alpha}: {norm}");
        }
    }

    #[test]
    fn diagonal_damping_norms() {
        let r = reference(32);
        let dim = 10;
        let d = 0.05;
        // Including the constant mode the largest entry is e^0 = 1; zeroing
        // the constant row and column restricts to the mean-zero block where
        // the largest entry is e^{-D lambda_1}. Diagonal matrices commute
        // with the grading, so alpha does not matter.
        for alpha in [0.0, 1.0] {
            let mut full = vec![0.0; dim * dim];
            for j in 0..dim {
                full[j * dim + j] = (-d * r.eigenvalue(j)).exp();
            }
            let norm = operator_matrix_norm(&full, dim, alpha, &r).unwrap();
            assert!((norm - 1.0).abs() < 1e-7, "alpha = {alpha}: {norm}");
            let mut block = full.clone();
            block[0] = 0.0;
            let norm = operator_matrix_norm(&block, dim, alpha, &r).unwrap();
            let expect = (-d * r.eigenvalue(1)).exp();
            assert!((norm - expect).abs() < 1e-7 * expect, "alpha = {alpha}: {norm}");
        }
    }

    #[test]
    fn power_iteration_matches_svd_oracle() {
        let r = reference(32);
        let dim = 10;
        let mut rng = Stream::from_seed(77);
        let m: Vec<f64> = (0..dim * dim).map(|_| rng.standard_normal()).collect();
        let got = operator_matrix_norm(&m, dim, 0.0, &r).unwrap();
        let oracle = DMatrix::from_row_slice(dim, dim, &m)
            .svd(false, false)
            .singular_values[0];
        assert!((got - oracle).abs() < 1e-6 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn zero_matrix_has_zero_norm() {
        let r = reference(16);
        let m = vec![0.0; 16];
        assert_eq!(operator_matrix_norm(&m, 4, 1.0, &r).unwrap(), 0.0);
    }
}
