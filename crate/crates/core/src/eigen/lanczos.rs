//! Shift-invert Lanczos for the smallest nonconstant eigenpairs of `-G` on
//! large grids. The constant kernel mode is deflated exactly, the shifted
//! operator `(-G + shift I)^{-1}` is applied through a banded Cholesky
//! factorization, and the Krylov basis is kept fully reorthogonalized so that
//! multiplicities emerge reliably.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stencil::BandMatrix;

use super::tridiag;

/// Lower-triangular Cholesky factor of a symmetric positive definite band
/// matrix, in the same band layout as [`BandMatrix`].
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

/// Factors a symmetric positive definite band matrix. `O(n * bandwidth^2)`.
pub fn band_cholesky(a: &BandMatrix) -> Result<BandCholesky> {
    let n = a.n;
    let bw = a.bandwidth;
    let ld = bw + 1;
    let mut l = a.data.clone();
    for j in 0..n {
        let kmin = j.saturating_sub(bw);
        let mut s = l[j * ld];
        for k in kmin..j {
            let v = l[k * ld + (j - k)];
            s -= v * v;
        }
        if s <= 0.0 {
            return Err(Error::Numerical(format!(
                "band Cholesky pivot {j} is not positive ({s:.3e}); matrix is not positive definite"
            )));
        }
        let d = s.sqrt();
        l[j * ld] = d;
        let imax = (j + bw).min(n - 1);
        for i in j + 1..=imax {
            let mut s = l[j * ld + (i - j)];
            for k in i.saturating_sub(bw)..j {
                s -= l[k * ld + (i - k)] * l[k * ld + (j - k)];
            }
            l[j * ld + (i - j)] = s / d;
        }
    }
    Ok(BandCholesky { n, bandwidth: bw, data: l })
}

impl BandCholesky {
    /// Solves `A x = b` in place through the stored factor.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, ld) = (self.n, self.bandwidth, self.bandwidth + 1);
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        // Forward: L y = b.
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[k * ld + (i - k)] * b[k];
            }
            b[i] = s / self.data[i * ld];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let mut s = b[i];
            let kmax = (i + bw).min(n - 1);
            for k in i + 1..=kmax {
                s -= self.data[i * ld + (k - i)] * b[k];
            }
            b[i] = s / self.data[i * ld];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Smallest `count` nonconstant eigenpairs of `-G`, ascending, with vectors
/// row-major and orthonormal in the plain dot product (and orthogonal to the
/// constant vector, which spans the kernel of `G`).
///
/// `apply_neg` must compute `out = -G u`; `band` must hold `-G + shift I`.
/// The Krylov space grows until every requested pair has residual
/// `||(-G) v - lambda v|| <= tol * max(1, lambda)` or the basis saturates.
pub fn smallest_nonconstant_eigenpairs(
    apply_neg: &dyn Fn(&[f64], &mut [f64]),
    band: &BandMatrix,
    shift: f64,
    count: usize,
    tol: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = band.n;
    if count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if count > n - 1 {
        return Err(Error::Config(format!(
            "requested {count} nonconstant modes but the deflated space has dimension {}",
            n - 1
        )));
    }
    let chol = band_cholesky(band)?;
    let constant = 1.0 / (n as f64).sqrt();

    let project_out_constant = |v: &mut [f64]| {
        let mean: f64 = v.iter().sum::<f64>() / n as f64;
        for x in v.iter_mut() {
            *x -= mean;
        }
        let _ = constant; // uniform component removed exactly
    };

    let mut rng = Stream::from_seed(seed);
    let max_dim = (4 * count + 200).min(n - 1);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new(); // beta[k] couples basis[k] and basis[k+1]

    let mut v = vec![0.0; n];
    for x in v.iter_mut() {
        *x = rng.standard_normal();
    }
    project_out_constant(&mut v);
    let nv = norm(&v);
    if nv == 0.0 {
        return Err(Error::Numerical("degenerate start vector".into()));
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    basis.push(v);

    let mut target_dim = (count + 30).min(max_dim);
    loop {
        // Extend the Lanczos basis to target_dim.
        while basis.len() < target_dim {
            let k = basis.len() - 1;
            let mut w = basis[k].clone();
            chol.solve_in_place(&mut w);
            project_out_constant(&mut w);
            let a = dot(&basis[k], &w);
            alpha.push(a);
            for i in 0..n {
                w[i] -= a * basis[k][i];
            }
            if k > 0 {
                let b = beta[k - 1];
                for i in 0..n {
                    w[i] -= b * basis[k - 1][i];
                }
            }
            // Full reorthogonalization, two passes.
            for _ in 0..2 {
                for q in basis.iter() {
                    let d = dot(q, &w);
                    for i in 0..n {
                        w[i] -= d * q[i];
                    }
                }
            }
            let mut b = norm(&w);
            if b < 1e-12 {
                // Invariant subspace found: restart with a fresh direction.
                for x in w.iter_mut() {
                    *x = rng.standard_normal();
                }
                project_out_constant(&mut w);
                for _ in 0..2 {
                    for q in basis.iter() {
                        let d = dot(q, &w);
                        for i in 0..n {
                            w[i] -= d * q[i];
                        }
                    }
                }
                b = norm(&w);
                if b < 1e-12 {
                    break; // deflated space exhausted
                }
                beta.push(0.0);
                for x in w.iter_mut() {
                    *x /= b;
                }
                basis.push(w);
                continue;
            }
            beta.push(b);
            for x in w.iter_mut() {
                *x /= b;
            }
            basis.push(w);
        }

        let m = basis.len();
        // The projected tridiagonal covers the basis vectors whose expansion
        // step has completed; the last basis vector may still be pending.
        let mt = alpha.len();
        if mt < count {
            return Err(Error::Numerical(format!(
                "Krylov basis saturated at dimension {mt} before resolving {count} modes"
            )));
        }
        // Ritz pairs of the projected operator (largest inverse eigenvalues
        // correspond to the smallest original ones).
        let (tvals, tvecs) = tridiag::eigen_full(&alpha, &beta[..mt - 1])?;
        let mut values = Vec::with_capacity(count);
        let mut vectors = vec![0.0; count * n];
        let mut worst_rel = 0.0f64;
        let mut scratch = vec![0.0; n];
        for j in 0..count {
            let col = mt - 1 - j; // descending inverse eigenvalues
            let theta = tvals[col];
            if theta <= 0.0 {
                worst_rel = f64::INFINITY;
                break;
            }
            let lambda = 1.0 / theta - shift;
            values.push(lambda);
            let row = &mut vectors[j * n..(j + 1) * n];
            row.iter_mut().for_each(|x| *x = 0.0);
            for (k, q) in basis.iter().enumerate().take(mt) {
                let y = tvecs[col * mt + k];
                for i in 0..n {
                    row[i] += y * q[i];
                }
            }
            let nr = norm(row);
            for x in row.iter_mut() {
                *x /= nr;
            }
            apply_neg(row, &mut scratch);
            let mut res = 0.0;
            for i in 0..n {
                let r = scratch[i] - lambda * row[i];
                res += r * r;
            }
            let rel = res.sqrt() / lambda.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
        }

        if worst_rel <= tol {
            // Descending theta maps to ascending lambda, so the wanted pairs
            // already come out in ascending order.
            return Ok((values, vectors));
        }
        if target_dim >= max_dim || m < target_dim {
            return Err(Error::Numerical(format!(
                "shift-invert Lanczos stalled: worst relative residual {worst_rel:.3e} \
                 with Krylov dimension {m} (limit {max_dim})"
            )));
        }
        target_dim = (target_dim * 3 / 2 + 8).min(max_dim);
    }
}
