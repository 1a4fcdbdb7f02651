//! Dense symmetric eigendecomposition via nalgebra, used for moderate grids
//! in any dimension where `O(n^3)` is affordable and for cross-checking the
//! iterative solver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Full eigendecomposition of a symmetric matrix given row-major as `a`
/// (`n x n`). Returns eigenvalues ascending and eigenvectors row-major
/// (`vectors[j * n + i]`), orthonormal in the plain dot product.
pub fn eigen_symmetric(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    let m = DMatrix::from_row_slice(n, n, a);
    let sym = m.symmetric_eigen();
    if sym.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "dense symmetric eigensolver produced non-finite eigenvalues".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sym.eigenvalues[i]
            .partial_cmp(&sym.eigenvalues[j])
            .expect("finite eigenvalues compare")
    });
    let values: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (j, &col) in order.iter().enumerate() {
        let column = sym.eigenvectors.column(col);
        for i in 0..n {
            vectors[j * n + i] = column[i];
        }
    }
    Ok((values, vectors))
}
