//! Conservative flux-form discretization of `u -> div(c grad u)` with
//! zero-flux (reflecting) boundary conditions.
//!
//! On a uniform grid the operator couples each cell to its axis neighbors
//! through face coefficients:
//!
//! ```text
//! (G u)_i = sum_k [ c_{i+e_k/2} (u_{i+e_k} - u_i) - c_{i-e_k/2} (u_i - u_{i-e_k}) ] / h_k^2
//! ```
//!
//! with no flux through domain faces. Face coefficients are averages of the
//! two adjacent cell values (arithmetic by default, harmonic as an option).
//! Written this way the matrix is symmetric, annihilates constants exactly
//! (`G 1 = 0` holds in floating point because every face flux of a constant
//! is exactly zero), and its quadratic form is `-sum_faces c (du)^2 / h^2`,
//! so it is negative semidefinite whenever all face coefficients are
//! nonnegative.
//!
//! The assembly is linear in the coefficient field when faces are arithmetic
//! means; the signed-coefficient entry point [`flux_operator`] exploits this
//! for difference and transport operators `h -> div(h grad u)` with `h` of
//! arbitrary sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DiffusivityField;
use crate::geometry::Grid;

/// How a face coefficient is formed from the two adjacent cell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceAverage {
    /// `(a + b) / 2`; linear in the cell values.
    Arithmetic,
    /// `2ab / (a + b)`; requires strictly positive cell values.
    Harmonic,
}

/// Symmetric band storage of a symmetric positive definite matrix: column `j`
/// holds `A[j + r][j]` for `r = 0..=bandwidth`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub bandwidth: usize,
    /// Layout: `data[j * (bandwidth + 1) + r] = A[j + r][j]`.
    pub data: Vec<f64>,
}

/// The discrete operator `u -> div(c grad u)` for a fixed coefficient field.
#[derive(Debug, Clone)]
pub struct FluxOperator {
    grid: Grid,
    /// Per axis: `faces[k][idx]` is the coefficient of the face between cell
    /// `idx` and its `+e_k` neighbor; entries in the last layer are unused.
    faces: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

/// Builds the flux operator for a signed coefficient field given at cell
/// centers. Harmonic averaging demands strictly positive values.
pub fn flux_operator(grid: &Grid, coeff: &[f64], mode: FaceAverage) -> Result<FluxOperator> {
    if coeff.len() != grid.len() {
        return Err(Error::Config(format!(
            "coefficient field has {} cells, grid has {}",
            coeff.len(),
            grid.len()
        )));
    }
    if mode == FaceAverage::Harmonic {
        if let Some(&bad) = coeff.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Config(format!(
                "harmonic face averaging requires positive coefficients, got {bad}"
            )));
        }
    }
    let d = grid.dim();
    let n_per = grid.cells_per_dim();
    let mut strides = vec![1usize; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * n_per[k - 1];
    }
    let mut faces = Vec::with_capacity(d);
    for k in 0..d {
        let mut fk = vec![0.0; grid.len()];
        let stride = strides[k];
        let nk = n_per[k];
        let outer = grid.len() / (stride * nk);
        for b in 0..outer {
            for ik in 0..nk - 1 {
                let base = (b * nk + ik) * stride;
                for a in 0..stride {
                    let idx = base + a;
                    let (ca, cb) = (coeff[idx], coeff[idx + stride]);
                    fk[idx] = match mode {
                        FaceAverage::Arithmetic => 0.5 * (ca + cb),
                        FaceAverage::Harmonic => 2.0 * ca * cb / (ca + cb),
                    };
                }
            }
        }
        faces.push(fk);
    }
    Ok(FluxOperator { grid: grid.clone(), faces, strides })
}

impl FluxOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Iterates all interior faces as `(axis, cell, neighbor, coefficient)`.
    fn for_each_face(&self, mut visit: impl FnMut(usize, usize, usize, f64)) {
        let n_per = self.grid.cells_per_dim();
        for k in 0..self.grid.dim() {
            let stride = self.strides[k];
            let nk = n_per[k];
            let outer = self.grid.len() / (stride * nk);
            for b in 0..outer {
                for ik in 0..nk - 1 {
                    let base = (b * nk + ik) * stride;
                    for a in 0..stride {
                        let idx = base + a;
                        visit(k, idx, idx + stride, self.faces[k][idx]);
                    }
                }
            }
        }
    }

    /// Applies the operator: `out = G u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.grid.len());
        debug_assert_eq!(out.len(), self.grid.len());
        out.fill(0.0);
        let h = self.grid.spacing().to_vec();
        self.for_each_face(|k, i, j, c| {
            let flux = c * (u[j] - u[i]) / (h[k] * h[k]);
            out[i] += flux;
            out[j] -= flux;
        });
    }

    /// Applies the operator, allocating the output.
    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply(u, &mut out);
        out
    }

    /// Quadratic form `<u, G u>_h = -cell_volume * sum_faces c (du)^2 / h^2`,
    /// accumulated directly over faces (no cancellation).
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let h = self.grid.spacing().to_vec();
        let mut q = 0.0;
        self.for_each_face(|k, i, j, c| {
            let du = u[j] - u[i];
            q -= c * du * du / (h[k] * h[k]);
        });
        q * self.grid.cell_volume()
    }

    /// Dense row-major materialization of `G`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut m = vec![0.0; n * n];
        let h = self.grid.spacing().to_vec();
        self.for_each_face(|k, i, j, c| {
            let w = c / (h[k] * h[k]);
            m[i * n + j] += w;
            m[j * n + i] += w;
            m[i * n + i] -= w;
            m[j * n + j] -= w;
        });
        m
    }

    /// Band storage of `shift * I - G` (symmetric; positive definite for
    /// `shift > 0` when all face coefficients are nonnegative). The bandwidth
    /// is the largest axis stride.
    pub fn neg_band(&self, shift: f64) -> BandMatrix {
        let n = self.grid.len();
        let bw = *self.strides.last().expect("at least one axis");
        let ld = bw + 1;
        let mut data = vec![0.0; n * ld];
        for j in 0..n {
            data[j * ld] = shift;
        }
        let h = self.grid.spacing().to_vec();
        self.for_each_face(|k, i, j, c| {
            let w = c / (h[k] * h[k]);
            // j = i + stride_k, store A[j][i] in column i at offset stride_k.
            data[i * ld + self.strides[k]] = -w;
            data[i * ld] += w;
            data[j * ld] += w;
        });
        BandMatrix { n, bandwidth: bw, data }
    }

    /// Gershgorin bound on the spectrum of `-G`: the largest row absolute
    /// sum, which is twice the largest diagonal entry because the diagonal
    /// equals the sum of the off-diagonal magnitudes.
    pub fn gershgorin_bound(&self) -> f64 {
        let n = self.grid.len();
        let h = self.grid.spacing().to_vec();
        let mut diag = vec![0.0; n];
        self.for_each_face(|k, i, j, c| {
            let w = c / (h[k] * h[k]);
            diag[i] += w;
            diag[j] += w;
        });
        2.0 * diag.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    /// For one-axis grids: `(diagonal, subdiagonal)` of `-G`, which is
    /// symmetric tridiagonal with positive diagonal.
    pub fn neg_tridiagonal(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.grid.dim() != 1 {
            return Err(Error::Config(format!(
                "tridiagonal extraction requires a one-axis grid, got {} axes",
                self.grid.dim()
            )));
        }
        let n = self.grid.len();
        let h2 = self.grid.spacing()[0] * self.grid.spacing()[0];
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let w = self.faces[0][i] / h2;
            sub[i] = -w;
            diag[i] += w;
            diag[i + 1] += w;
        }
        Ok((diag, sub))
    }
}

/// The generator `L_f = div(f grad .)` of the reflected diffusion with
/// diffusivity `f`: a [`FluxOperator`] whose coefficient is certified
/// positive, hence negative semidefinite with row sums zero.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    op: FluxOperator,
    field: DiffusivityField,
    mode: FaceAverage,
}

/// Assembles the generator for a positive diffusivity field.
pub fn assemble_generator(
    grid: &Grid,
    field: &DiffusivityField,
    mode: FaceAverage,
) -> Result<GeneratorMatrix> {
    let op = flux_operator(grid, field.values(), mode)?;
    Ok(GeneratorMatrix { op, field: field.clone(), mode })
}

impl GeneratorMatrix {
    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn field(&self) -> &DiffusivityField {
        &self.field
    }

    pub fn mode(&self) -> FaceAverage {
        self.mode
    }

    pub fn operator(&self) -> &FluxOperator {
        &self.op
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.op.apply(u, out)
    }

    /// `-G` applied to `u` (positive semidefinite direction).
    pub fn apply_neg(&self, u: &[f64], out: &mut [f64]) {
        self.op.apply(u, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.op.to_dense()
    }

    pub fn neg_band(&self, shift: f64) -> BandMatrix {
        self.op.neg_band(shift)
    }

    pub fn gershgorin_bound(&self) -> f64 {
        self.op.gershgorin_bound()
    }

    pub fn neg_tridiagonal(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.op.neg_tridiagonal()
    }
}
