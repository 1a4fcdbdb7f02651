//! Symmetric tridiagonal eigensolvers: QL with implicit shifts for all
//! eigenvalues (optionally accumulating eigenvectors), and shifted inverse
//! iteration with partial pivoting for a selected leading subset of
//! eigenvectors. One-axis generators are tridiagonal, so this is the hot path
//! for repeated likelihood evaluations; it also diagonalizes the projected
//! matrices produced by the Lanczos solver.

use crate::error::{Error, Result};
use crate::rng::Stream;

const MAX_QL_SWEEPS: usize = 64;

/// QL with implicit shifts on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal and is overwritten with eigenvalues (unsorted);
/// `e` holds the subdiagonal in `e[0..n-1]` with `e[n-1]` as scratch. When
/// `z` is given it must be an `n x n` identity on entry (row-major) and its
/// columns become the corresponding eigenvectors.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut sweeps = 0;
        'restart: loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::Numerical(format!(
                    "tridiagonal QL did not converge for eigenvalue {l} within {MAX_QL_SWEEPS} sweeps"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    continue 'restart;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zz) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zz[k * n + i + 1];
                        zz[k * n + i + 1] = s * zz[k * n + i] + c * f;
                        zz[k * n + i] = c * zz[k * n + i] - s * f;
                    }
                }
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// All eigenvalues of the symmetric tridiagonal matrix `(diag, sub)`,
/// ascending. `O(n^2)`, no eigenvectors.
pub fn eigenvalues(diag: &[f64], sub: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(sub.len(), n.saturating_sub(1), "subdiagonal length mismatch");
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(sub);
    e.push(0.0);
    ql_implicit(&mut d, &mut e, None)?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    Ok(d)
}

/// Full eigendecomposition of the symmetric tridiagonal matrix `(diag, sub)`:
/// eigenvalues ascending, eigenvectors row-major (`vectors[j * n + i]` is
/// component `i` of eigenvector `j`), orthonormal in the plain dot product.
pub fn eigen_full(diag: &[f64], sub: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert_eq!(sub.len(), n.saturating_sub(1), "subdiagonal length mismatch");
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(sub);
    e.push(0.0);
    let mut z = vec![0.0; n * n];
    for k in 0..n {
        z[k * n + k] = 1.0;
    }
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("non-finite eigenvalue"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (j, &col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[j * n + k] = z[k * n + col];
        }
    }
    Ok((values, vectors))
}

/// Solves `(T - shift I) x = b` in place for symmetric tridiagonal `T`, using
/// LU with partial pivoting (gttrf/gtts2 scheme). A vanishing pivot is
/// replaced by `eps` times the matrix scale: inverse iteration only needs the
/// amplified direction, and a smaller stand-in (say 1e-300) would push the
/// solution past 1e300 where the norm accumulation overflows.
fn solve_shifted(diag: &[f64], sub: &[f64], shift: f64, b: &mut [f64]) {
    let n = diag.len();
    let mut dd: Vec<f64> = diag.iter().map(|v| v - shift).collect();
    let mut dl: Vec<f64> = sub.to_vec();
    let mut du: Vec<f64> = sub.to_vec();
    let scale = dd.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + 2.0 * sub.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut swapped = vec![false; n.saturating_sub(1)];
    for i in 0..n.saturating_sub(1) {
        if dd[i].abs() >= dl[i].abs() {
            if dd[i].abs() < floor {
                dd[i] = floor.copysign(dd[i]);
            }
            let fact = dl[i] / dd[i];
            dl[i] = fact;
            dd[i + 1] -= fact * du[i];
        } else {
            swapped[i] = true;
            let fact = dd[i] / dl[i];
            dd[i] = dl[i];
            dl[i] = fact;
            let tmp = du[i];
            du[i] = dd[i + 1];
            dd[i + 1] = tmp - fact * dd[i + 1];
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
        }
    }
    if dd[n - 1].abs() < floor {
        dd[n - 1] = floor.copysign(dd[n - 1]);
    }
    for i in 0..n.saturating_sub(1) {
        if !swapped[i] {
            b[i + 1] -= dl[i] * b[i];
        } else {
            let tmp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tmp - dl[i] * b[i];
        }
    }
    b[n - 1] /= dd[n - 1];
    if n >= 2 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dd[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dd[i];
    }
}

/// Residual `||T v - lambda v||_2` for the tridiagonal `(diag, sub)`.
fn residual_norm(diag: &[f64], sub: &[f64], lambda: f64, v: &[f64]) -> f64 {
    let n = diag.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = (diag[i] - lambda) * v[i];
        if i > 0 {
            r += sub[i - 1] * v[i - 1];
        }
        if i + 1 < n {
            r += sub[i] * v[i + 1];
        }
        s += r * r;
    }
    s.sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Eigenvectors for a leading (ascending) subset of eigenvalues of the
/// symmetric tridiagonal `(diag, sub)`, by shifted inverse iteration.
///
/// `lambdas` must be ascending eigenvalues as computed by [`eigenvalues`],
/// excluding an exact null eigenvalue if the matrix has one (its eigenvector
/// is known analytically there, and a shift of zero cannot be perturbed
/// multiplicatively). Vectors are returned row-major, orthonormal in the
/// plain dot product.
/// Nearly coincident eigenvalues (gap below `1e-8 * scale`) are treated as a
/// cluster and orthogonalized against each other during the iteration.
pub fn selected_eigenvectors(
    diag: &[f64],
    sub: &[f64],
    lambdas: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let n = diag.len();
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + 2.0 * sub.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cluster_tol = 1e-8 * scale.max(1.0);
    let res_tol = 1e-8 * scale.max(1.0);
    let mut vectors = vec![0.0; lambdas.len() * n];
    let mut cluster_start = 0usize;
    for (j, &lambda) in lambdas.iter().enumerate() {
        if j > 0 && lambda - lambdas[j - 1] > cluster_tol {
            cluster_start = j;
        }
        let mut rng = Stream::from_seed(seed).substream(j as u64);
        let mut best: Option<(f64, Vec<f64>)> = None;
        'attempt: for attempt in 0..4 {
            // Each attempt perturbs the shift to escape singular pivots and
            // bad starts. The absolute term matters when the eigenvalue is
            // small against the matrix entries: a multiplicative nudge below
            // one ulp of the diagonal would refactor the same bits.
            let nudge = attempt as f64 * 4.0 * f64::EPSILON;
            let shift = lambda * (1.0 + nudge) + nudge * scale;
            let mut v: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            normalize(&mut v);
            for _ in 0..3 + attempt {
                solve_shifted(diag, sub, shift, &mut v);
                if !v.iter().all(|x| x.is_finite()) {
                    continue 'attempt;
                }
                // Orthogonalize inside the current cluster.
                for p in cluster_start..j {
                    let dot: f64 =
                        (0..n).map(|i| v[i] * vectors[p * n + i]).sum();
                    for i in 0..n {
                        v[i] -= dot * vectors[p * n + i];
                    }
                }
                if normalize(&mut v) == 0.0 {
                    continue 'attempt;
                }
            }
            let res = residual_norm(diag, sub, lambda, &v);
            if res.is_finite() && best.as_ref().map_or(true, |(b, _)| res < *b) {
                best = Some((res, v));
            }
            if res <= res_tol {
                break;
            }
        }
        let Some((res, v)) = best else {
            return Err(Error::Numerical(format!(
                "inverse iteration collapsed at eigenvalue {lambda}"
            )));
        };
        if res > res_tol * 100.0 {
            return Err(Error::Numerical(format!(
                "inverse iteration stalled at eigenvalue {lambda} (residual {res:.3e})"
            )));
        }
        vectors[j * n..(j + 1) * n].copy_from_slice(&v);
    }
    Ok(vectors)
}
