//! Domains, grids, nested subdomains, and smooth cutoff fields.
//!
//! The state space is an interval or an axis-aligned box. Fields live at the
//! centers of a uniform cell grid; the discrete inner product is
//! `<u, v>_h = cell_volume * sum_i u_i v_i`, which makes the constant field
//! integrate to the exact domain volume (volumes are not normalized away;
//! constants are carried explicitly throughout the crate).
//!
//! A [`SubdomainSpec`] is a strictly nested pair of boxes `O_00 < O_0 < O`
//! inside which priors and certificates localize. [`build_cutoff`] produces a
//! tensor-product quintic-smoothstep field that is exactly 1 on `O_00` and
//! exactly 0 outside `O_0`; each ramp must span at least two cells so the grid
//! can resolve it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An interval (`d = 1`) or axis-aligned box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    /// Per-axis bounds `(lo_k, hi_k)` with `lo_k < hi_k`.
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    /// Builds a domain from per-axis bounds. Errors: empty bounds, non-finite
    /// or reversed endpoints.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("domain needs at least one axis".into()));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("axis {k}: bounds must be finite")));
            }
            if lo >= hi {
                return Err(Error::Config(format!(
                    "axis {k}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        Ok(Domain { bounds })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Domain::new(vec![(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn side(&self, k: usize) -> f64 {
        self.bounds[k].1 - self.bounds[k].0
    }

    /// Product of side lengths.
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Euclidean diameter, `sqrt(sum side_k^2)`.
    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
    }

    /// Whether `x` lies in the closed domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.bounds).all(|(&xi, &(lo, hi))| xi >= lo && xi <= hi)
    }
}

/// A uniform cell grid over a [`Domain`].
///
/// Axis `k` is split into `n_k` cells of width `h_k = side_k / n_k`; cell `i`
/// on that axis is centered at `lo_k + (i + 1/2) h_k`. Multi-axis cells are
/// indexed linearly with axis 0 fastest, so for `d = 2` the linear index is
/// `i_0 + n_0 * i_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: Domain,
    cells_per_dim: Vec<usize>,
    h: Vec<f64>,
    cell_volume: f64,
}

/// Builds a grid with the given cell counts. Each axis needs at least two
/// cells; zero cells on any axis is a configuration error.
pub fn build_grid(domain: &Domain, cells_per_dim: &[usize]) -> Result<Grid> {
    if cells_per_dim.len() != domain.dim() {
        return Err(Error::Config(format!(
            "grid has {} axis counts but the domain has {} axes",
            cells_per_dim.len(),
            domain.dim()
        )));
    }
    for (k, &n) in cells_per_dim.iter().enumerate() {
        if n == 0 {
            return Err(Error::Config(format!("axis {k}: zero cells requested")));
        }
        if n < 2 {
            return Err(Error::Config(format!(
                "axis {k}: at least two cells are required, got {n}"
            )));
        }
    }
    let h: Vec<f64> =
        cells_per_dim.iter().zip(domain.bounds()).map(|(&n, &(lo, hi))| (hi - lo) / n as f64).collect();
    let cell_volume = h.iter().product();
    Ok(Grid { domain: domain.clone(), cells_per_dim: cells_per_dim.to_vec(), h, cell_volume })
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Multi-index of a linear cell index (axis 0 fastest).
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut mi = Vec::with_capacity(self.dim());
        for &n in &self.cells_per_dim {
            mi.push(idx % n);
            idx /= n;
        }
        mi
    }

    /// Linear index of a multi-index.
    pub fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.cells_per_dim[k] + mi[k];
        }
        idx
    }

    /// Center coordinates of a cell.
    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.domain.bounds()[k].0 + (i as f64 + 0.5) * self.h[k])
            .collect()
    }

    /// Center coordinate of a cell along one axis.
    pub fn center_along(&self, k: usize, i: usize) -> f64 {
        self.domain.bounds()[k].0 + (i as f64 + 0.5) * self.h[k]
    }

    /// Linear index of the cell containing `x`. Points on the closed boundary
    /// are assigned to the adjacent cell; points outside are a data error.
    pub fn cell_of(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!(
                "point has {} coordinates on a {}-dimensional grid",
                x.len(),
                self.dim()
            )));
        }
        if !self.domain.contains(x) {
            return Err(Error::Data(format!("point {x:?} lies outside the closed domain")));
        }
        let mut mi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let (lo, _) = self.domain.bounds()[k];
            let i = ((x[k] - lo) / self.h[k]).floor() as isize;
            let i = i.clamp(0, self.cells_per_dim[k] as isize - 1) as usize;
            mi.push(i);
        }
        Ok(self.linear_index(&mi))
    }

    /// Discrete inner product `cell_volume * sum_i u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(v.len(), self.len());
        self.cell_volume * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Norm induced by [`Grid::inner`].
    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Evaluates a function of the center coordinates into a field vector.
    /// Central-difference gradient of a cell field at one cell, one-sided at
    /// boundary cells. Writes `dim` components into `out`.
    pub fn gradient_at(&self, values: &[f64], cell: usize, out: &mut [f64]) {
        let mi = self.multi_index(cell);
        let n_per = self.cells_per_dim();
        let mut stride = 1usize;
        for k in 0..self.dim() {
            let h = self.spacing()[k];
            let i = mi[k];
            out[k] = if n_per[k] == 1 {
                0.0
            } else if i == 0 {
                (values[cell + stride] - values[cell]) / h
            } else if i == n_per[k] - 1 {
                (values[cell] - values[cell - stride]) / h
            } else {
                (values[cell + stride] - values[cell - stride]) / (2.0 * h)
            };
            stride *= n_per[k];
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.center(i))).collect()
    }
}

/// A strictly nested pair of boxes `O_00` inside `O_0` inside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    outer: Vec<(f64, f64)>,
    inner: Vec<(f64, f64)>,
}

impl SubdomainSpec {
    /// Validates strict nesting: `O_00` strictly inside `O_0`, and `O_0`
    /// strictly inside the domain (touching the domain boundary is rejected).
    pub fn new(domain: &Domain, outer: Vec<(f64, f64)>, inner: Vec<(f64, f64)>) -> Result<Self> {
        if outer.len() != domain.dim() || inner.len() != domain.dim() {
            return Err(Error::Config(format!(
                "subdomain boxes must have {} axes (got {} and {})",
                domain.dim(),
                outer.len(),
                inner.len()
            )));
        }
        for (k, (&(olo, ohi), &(dlo, dhi))) in outer.iter().zip(domain.bounds()).enumerate() {
            if !(olo < ohi) {
                return Err(Error::Config(format!("axis {k}: outer box is empty")));
            }
            if !(olo > dlo && ohi < dhi) {
                return Err(Error::Config(format!(
                    "axis {k}: outer box [{olo}, {ohi}] must be strictly inside the domain [{dlo}, {dhi}]"
                )));
            }
        }
        for (k, (&(ilo, ihi), &(olo, ohi))) in inner.iter().zip(&outer).enumerate() {
            if !(ilo < ihi) {
                return Err(Error::Config(format!("axis {k}: inner box is empty")));
            }
            if !(ilo > olo && ihi < ohi) {
                return Err(Error::Config(format!(
                    "axis {k}: inner box [{ilo}, {ihi}] must be strictly inside the outer box [{olo}, {ohi}]"
                )));
            }
        }
        Ok(SubdomainSpec { outer, inner })
    }

    /// Outer box `O_0` (support of the cutoff).
    pub fn outer(&self) -> &[(f64, f64)] {
        &self.outer
    }

    /// Inner box `O_00` (plateau of the cutoff).
    pub fn inner(&self) -> &[(f64, f64)] {
        &self.inner
    }
}

/// Quintic smoothstep `6u^5 - 15u^4 + 10u^3`, clamped outside `[0, 1]`.
///
/// `C^2` at both ends, value 1/2 at the ramp midpoint.
fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// A grid field in `[0, 1]`, exactly 1 on the inner box and exactly 0 outside
/// the outer box, formed as a tensor product of one-axis ramp profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffField {
    subdomains: SubdomainSpec,
    values: Vec<f64>,
}

impl CutoffField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn subdomains(&self) -> &SubdomainSpec {
        &self.subdomains
    }
}

/// One-axis cutoff profile: 0 outside `[olo, ohi]`, 1 inside `[ilo, ihi]`,
/// quintic smoothstep on the two ramps.
fn axis_profile(x: f64, olo: f64, ohi: f64, ilo: f64, ihi: f64) -> f64 {
    if x <= olo || x >= ohi {
        0.0
    } else if x >= ilo && x <= ihi {
        1.0
    } else if x < ilo {
        smoothstep5((x - olo) / (ilo - olo))
    } else {
        smoothstep5((ohi - x) / (ohi - ihi))
    }
}

/// Builds the tensor-product cutoff for a nested subdomain pair.
///
/// Each ramp (per axis, per side) must span at least two cells of the grid;
/// thinner ramps are a resolution error, not silently sharpened.
pub fn build_cutoff(grid: &Grid, subdomains: &SubdomainSpec) -> Result<CutoffField> {
    for k in 0..grid.dim() {
        let (olo, ohi) = subdomains.outer()[k];
        let (ilo, ihi) = subdomains.inner()[k];
        let h = grid.spacing()[k];
        for (side, width) in [("lower", ilo - olo), ("upper", ohi - ihi)] {
            if width < 2.0 * h {
                return Err(Error::Resolution(format!(
                    "axis {k}: {side} cutoff ramp of width {width} spans fewer than two cells (h = {h})"
                )));
            }
        }
    }
    let values = grid.field_from_fn(|x| {
        let mut z = 1.0;
        for k in 0..x.len() {
            let (olo, ohi) = subdomains.outer()[k];
            let (ilo, ihi) = subdomains.inner()[k];
            z *= axis_profile(x[k], olo, ohi, ilo, ihi);
            if z == 0.0 {
                break;
            }
        }
        z
    });
    Ok(CutoffField { subdomains: subdomains.clone(), values })
}
