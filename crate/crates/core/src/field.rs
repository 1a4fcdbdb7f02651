//! Positive diffusivity fields and their parametrization.
//!
//! A [`DiffusivityField`] holds strictly positive cell values together with a
//! certified lower floor `f_min` (used by spectral-gap bounds) and the value
//! the field takes near the boundary (fields built through the link are
//! constant outside the localization box).
//!
//! The link `f = (1 + e^theta) / 4` maps an unconstrained field `theta` to a
//! diffusivity bounded below by 1/4; `theta = 0` gives `f = 1/2`, reflected
//! Brownian motion with generator `Laplacian / 2`. Synthetic ground truths are
//! built in theta space from compactly supported smooth bumps, so they are
//! admissible by construction and equal 1/2 near the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Floor of the link range: `f = (1 + e^theta)/4 > 1/4` for all finite theta.
pub const LINK_FLOOR: f64 = 0.25;

/// A strictly positive field of cell-center diffusivity values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityField {
    values: Vec<f64>,
    f_min: f64,
    boundary_value: f64,
}

impl DiffusivityField {
    /// Wraps raw values, certifying `min values >= f_min > 0`.
    ///
    /// `boundary_value` records the constant the field takes outside the
    /// localization box (fields of link form are constant there).
    pub fn new(values: Vec<f64>, f_min: f64, boundary_value: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("diffusivity field has no cells".into()));
        }
        if !(f_min > 0.0) {
            return Err(Error::Config(format!("f_min must be positive, got {f_min}")));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Config(format!("cell {i}: non-finite diffusivity {v}")));
            }
            if v < f_min {
                return Err(Error::Config(format!(
                    "cell {i}: diffusivity {v} falls below the declared floor {f_min}"
                )));
            }
        }
        Ok(DiffusivityField { values, f_min, boundary_value })
    }

    /// Constant field `f = c`.
    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("constant diffusivity must be positive, got {c}")));
        }
        DiffusivityField::new(vec![c; grid.len()], c, c)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Certified positive lower bound.
    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    /// Field value outside the localization box.
    pub fn boundary_value(&self) -> f64 {
        self.boundary_value
    }

    /// Largest absolute deviation from a reference field.
    pub fn sup_distance(&self, other: &DiffusivityField) -> f64 {
        self.values
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Applies the link `f = (1 + e^theta)/4` to a theta field.
///
/// The result is bounded below by [`LINK_FLOOR`] and carries boundary value
/// 1/2 (theta vanishes near the boundary for all fields built through the
/// localized prior or the synthetic truths).
pub fn link(theta: &[f64]) -> Result<DiffusivityField> {
    let values: Vec<f64> = theta.iter().map(|t| 0.25 * (1.0 + t.exp())).collect();
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "link overflow at cell {i}: theta = {}",
                theta[i]
            )));
        }
    }
    DiffusivityField::new(values, LINK_FLOOR, 0.5)
}

/// Inverts the link: `theta = log(4 f - 1)`. Values at or below the floor 1/4
/// are outside the link range and rejected.
pub fn inverse_link(field: &DiffusivityField) -> Result<Vec<f64>> {
    field
        .values()
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let a = 4.0 * f - 1.0;
            if a <= 0.0 {
                Err(Error::Config(format!(
                    "cell {i}: diffusivity {f} is at or below the link floor 1/4"
                )))
            } else {
                Ok(a.ln())
            }
        })
        .collect()
}

/// A smooth compactly supported bump in theta space.
///
/// `amplitude * prod_k exp(1 - 1/(1 - u_k^2))` with `u_k = (x_k - center_k) /
/// width_k`; the profile is `C^infinity`, equals `amplitude` at the center,
/// and vanishes with all derivatives at `|u_k| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
}

impl BumpSpec {
    fn validate(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        if self.center.len() != d || self.width.len() != d {
            return Err(Error::Config(format!(
                "bump center/width must have {d} coordinates"
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("bump amplitude must be finite".into()));
        }
        for k in 0..d {
            if !(self.width[k] > 0.0) {
                return Err(Error::Config(format!("axis {k}: bump width must be positive")));
            }
            let (lo, hi) = grid.domain().bounds()[k];
            if self.center[k] - self.width[k] <= lo || self.center[k] + self.width[k] >= hi {
                return Err(Error::Config(format!(
                    "axis {k}: bump support [{}, {}] must be strictly inside the domain",
                    self.center[k] - self.width[k],
                    self.center[k] + self.width[k]
                )));
            }
        }
        Ok(())
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for k in 0..x.len() {
            let u = (x[k] - self.center[k]) / self.width[k];
            let u2 = u * u;
            if u2 >= 1.0 {
                return 0.0;
            }
            v *= (1.0 - 1.0 / (1.0 - u2)).exp();
        }
        v
    }
}

/// Synthetic ground-truth diffusivities, named by their theta-space shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    /// `f = value` everywhere (not restricted to the link range).
    Constant { value: f64 },
    /// `f = link(bump)`: a single smooth bump over the flat level 1/2.
    Bump {
        #[serde(flatten)]
        bump: BumpSpec,
    },
    /// `f = link(sum of bumps)`.
    MultiBump { bumps: Vec<BumpSpec> },
}

impl TruthSpec {
    /// Materializes the truth on a grid.
    pub fn build(&self, grid: &Grid) -> Result<DiffusivityField> {
        match self {
            TruthSpec::Constant { value } => DiffusivityField::constant(grid, *value),
            TruthSpec::Bump { bump } => {
                bump.validate(grid)?;
                link(&grid.field_from_fn(|x| bump.eval(x)))
            }
            TruthSpec::MultiBump { bumps } => {
                if bumps.is_empty() {
                    return Err(Error::Config("multi_bump truth needs at least one bump".into()));
                }
                for b in bumps {
                    b.validate(grid)?;
                }
                link(&grid.field_from_fn(|x| bumps.iter().map(|b| b.eval(x)).sum()))
            }
        }
    }

    /// The theta field of the truth, when it is of link form.
    pub fn theta(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            TruthSpec::Constant { .. } => {
                Err(Error::Config("constant truth is not parametrized in theta space".into()))
            }
            TruthSpec::Bump { bump } => {
                bump.validate(grid)?;
                Ok(grid.field_from_fn(|x| bump.eval(x)))
            }
            TruthSpec::MultiBump { bumps } => {
                for b in bumps {
                    b.validate(grid)?;
                }
                Ok(grid.field_from_fn(|x| bumps.iter().map(|b| b.eval(x)).sum()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> Grid {
        build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[n]).unwrap()
    }

    #[test]
    fn field_validation() {
        let g = unit_grid(4);
        assert!(DiffusivityField::new(vec![], 0.1, 0.5).is_err());
        assert!(DiffusivityField::new(vec![1.0; 4], 0.0, 0.5).is_err());
        assert!(DiffusivityField::new(vec![1.0, 0.05, 1.0, 1.0], 0.1, 0.5).is_err());
        assert!(DiffusivityField::new(vec![1.0, f64::NAN, 1.0, 1.0], 0.1, 0.5).is_err());
        assert!(DiffusivityField::constant(&g, 0.5).is_ok());
        assert!(DiffusivityField::constant(&g, -1.0).is_err());
    }

    #[test]
    fn link_at_zero_is_one_half() {
        let f = link(&[0.0, 0.0]).unwrap();
        assert_eq!(f.values(), &[0.5, 0.5]);
        assert_eq!(f.boundary_value(), 0.5);
        assert_eq!(f.f_min(), LINK_FLOOR);
    }

    #[test]
    fn inverse_link_rejects_floor() {
        let g = unit_grid(4);
        let f = DiffusivityField::constant(&g, 0.25).unwrap();
        assert!(inverse_link(&f).is_err());
        let f = DiffusivityField::constant(&g, 0.2).unwrap();
        assert!(inverse_link(&f).is_err());
    }

    #[test]
    fn bump_truth_is_flat_near_boundary() {
        let g = unit_grid(64);
        let spec = TruthSpec::Bump {
            bump: BumpSpec { amplitude: 1.0, center: vec![0.5], width: vec![0.25] },
        };
        let f = spec.build(&g).unwrap();
        assert!((f.values()[0] - 0.5).abs() < 1e-15);
        assert!((f.values()[63] - 0.5).abs() < 1e-15);
        let mid = g.cell_of(&[0.5]).unwrap();
        assert!(f.values()[mid] > 0.5);
        // Peak value: link(amplitude) at the central cell (center displaced by
        // at most h/2, bump flat to second order there).
        let peak = 0.25 * (1.0 + 1.0f64.exp());
        assert!((f.values()[mid] - peak).abs() < 1e-3);
    }

    #[test]
    fn bump_support_must_stay_inside_domain() {
        let g = unit_grid(64);
        let spec = TruthSpec::Bump {
            bump: BumpSpec { amplitude: 1.0, center: vec![0.9], width: vec![0.2] },
        };
        assert!(spec.build(&g).is_err());
    }

    #[test]
    fn multi_bump_superposes_in_theta_space() {
        let g = unit_grid(128);
        let b1 = BumpSpec { amplitude: 0.8, center: vec![0.3], width: vec![0.15] };
        let b2 = BumpSpec { amplitude: -0.5, center: vec![0.7], width: vec![0.15] };
        let spec = TruthSpec::MultiBump { bumps: vec![b1.clone(), b2.clone()] };
        let theta = spec.theta(&g).unwrap();
        for i in 0..g.len() {
            let x = g.center(i);
            let expect = b1.eval(&x) + b2.eval(&x);
            assert!((theta[i] - expect).abs() < 1e-15);
        }
    }

    proptest! {
        /// Link/inverse-link roundtrip to 1e-12 on admissible theta ranges.
        #[test]
        fn link_roundtrip(theta in proptest::collection::vec(-6.0f64..6.0, 1..40)) {
            let f = link(&theta).unwrap();
            let back = inverse_link(&f).unwrap();
            for (t, b) in theta.iter().zip(&back) {
                prop_assert!((t - b).abs() < 1e-12, "roundtrip {t} -> {b}");
            }
        }

        /// The link output never undercuts the floor 1/4. Strict inequality
        /// holds in exact arithmetic but rounds onto the floor for very
        /// negative theta.
        #[test]
        fn link_respects_floor(theta in proptest::collection::vec(-40.0f64..5.0, 1..40)) {
            let f = link(&theta).unwrap();
            for &v in f.values() {
                prop_assert!(v >= 0.25);
            }
        }
    }
}
