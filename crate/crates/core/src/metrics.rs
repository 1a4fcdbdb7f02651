//! Distances and stability diagnostics linking the three spaces transition
//! data lives in: diffusivity fields (discrete L^2 norms), compressed
//! transition operators (graded matrix norms), and heat kernels (cell-pair
//! densities).
//!
//! The forward direction (field to operator) is quantitatively stable: the
//! ratio `|f - f_0|_h / |Delta P|_graded` stays bounded over a perturbation
//! family. The inverse direction degrades like a backward heat problem, and
//! [`stability_ratios`] reports both faces side by side, together with a
//! logarithmic-modulus ratio. [`pseudo_linearisation_residual`] checks the
//! identity that expands a kernel difference applied to a reference mode
//! into time-integral coefficients against a transport term; the identity is
//! exact at the discrete level when both spectral bases are complete, so the
//! residual measures truncation only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eigendecompose, EigenStrategy, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::estimate::true_projection;
use crate::field::DiffusivityField;
use crate::geometry::{CutoffField, Grid};
use crate::kernel::{heat_kernel, transition_apply};
use crate::norms::operator_matrix_norm;
use crate::stencil::{assemble_generator, flux_operator, FaceAverage};

/// Default exponent for the backward (kernel to field) stability ratio.
pub const DEFAULT_STABILITY_EXPONENT: f64 = 1.0 / 3.0;

/// Exponent of the logarithmic stability modulus `(log 1/x)^(-2/3)`.
const LOG_MODULUS_EXPONENT: f64 = 2.0 / 3.0;

fn require_same_grid(a: &SpectralDecomposition, b: &SpectralDecomposition) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::Config(
            "the two decompositions live on different grids".into(),
        ));
    }
    Ok(())
}

/// Kullback-Leibler divergence between the laws of one observed pair
/// `(X_0, X_D)` under the two fields, with the pair density taken under the
/// `base` field: the quadrature of `(p_base / volume) * log(p_base / p)`
/// over all cell pairs, `p` being the kernel of the first argument.
///
/// The start is uniform over the domain, so the pair density is the kernel
/// over the volume and the cell-pair sum weighted by `cell_volume^2` is the
/// exact expectation under the discretized law. Passing the same
/// decomposition twice yields exactly zero (every log ratio is `log 1`);
/// distinct fields give a positive value up to the kernel mass defect.
pub fn kl_divergence(
    perturbed: &SpectralDecomposition,
    base: &SpectralDecomposition,
    spacing: f64,
) -> Result<f64> {
    require_same_grid(perturbed, base)?;
    let kp = heat_kernel(perturbed, spacing, true)?;
    let kb = heat_kernel(base, spacing, true)?;
    for k in [&kp, &kb] {
        if !(k.min_entry() > 0.0) {
            return Err(Error::KernelQuality(format!(
                "kernel attains {:.3e} at time {spacing}; the divergence needs \
                 strictly positive transition densities",
                k.min_entry()
            )));
        }
    }
    let grid = base.grid();
    let n = grid.len();
    let mut sum = 0.0;
    for x in 0..n {
        for y in 0..n {
            let pb = kb.value(x, y);
            let pp = kp.value(x, y);
            sum += pb * (pb / pp).ln();
        }
    }
    let w = grid.cell_volume();
    Ok(sum * w * w / grid.domain().volume())
}

/// L^2 distance over the product of the domain with itself between the two
/// heat kernels at time `t`: the square root of the cell-pair quadrature of
/// the squared kernel difference.
///
/// Symmetric in its two arguments bitwise; zero at equal decompositions;
/// tends to zero as `t` grows because both kernels flatten to the constant
/// `1 / volume`.
pub fn hs_distance(
    a: &SpectralDecomposition,
    b: &SpectralDecomposition,
    t: f64,
) -> Result<f64> {
    require_same_grid(a, b)?;
    let ka = heat_kernel(a, t, true)?;
    let kb = heat_kernel(b, t, true)?;
    let n = a.grid().len();
    let mut sum = 0.0;
    for (va, vb) in ka.values().iter().zip(kb.values()) {
        let d = va - vb;
        sum += d * d;
    }
    debug_assert_eq!(ka.values().len(), n * n);
    Ok(a.grid().cell_volume() * sum.sqrt())
}

/// Builds the multiplicative perturbation family `f_eps = base * (1 + eps *
/// cutoff * shape)` for each requested `eps`.
///
/// The cutoff vanishes outside its outer box, so every member agrees with
/// the base field near the boundary by construction, which is the hypothesis
/// the stability diagnostics assume. Fails if any member loses strict
/// positivity.
pub fn perturbation_family(
    grid: &Grid,
    base: &DiffusivityField,
    cutoff: &CutoffField,
    shape: &[f64],
    epsilons: &[f64],
) -> Result<Vec<(f64, DiffusivityField)>> {
    let n = grid.len();
    if base.len() != n || cutoff.values().len() != n || shape.len() != n {
        return Err(Error::Config(format!(
            "base ({}), cutoff ({}) and shape ({}) must all have {n} cells",
            base.len(),
            cutoff.values().len(),
            shape.len()
        )));
    }
    if let Some(v) = shape.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite shape value {v}")));
    }
    let mut family = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !eps.is_finite() {
            return Err(Error::Config(format!("non-finite epsilon {eps}")));
        }
        let values: Vec<f64> = (0..n)
            .map(|i| base.values()[i] * (1.0 + eps * cutoff.values()[i] * shape[i]))
            .collect();
        let floor = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(floor > 0.0) {
            return Err(Error::Config(format!(
                "epsilon {eps} drives the diffusivity down to {floor}; members \
                 must stay strictly positive"
            )));
        }
        family.push((
            eps,
            DiffusivityField::new(values, floor, base.boundary_value())?,
        ));
    }
    Ok(family)
}

/// One family member's raw distances and stability ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityRow {
    pub epsilon: f64,
    /// Discrete L^2 distance of the fields.
    pub f_distance: f64,
    /// Spectral norm of the compressed kernel difference under the
    /// second-order grading (the forward-stability denominator).
    pub graded_operator_distance: f64,
    /// Ungraded spectral norm of the compressed kernel difference.
    pub operator_distance: f64,
    /// Kernel distance at the probe time, earlier than the spacing.
    pub hs_at_probe: f64,
    /// `f_distance / graded_operator_distance`: bounded over the family.
    pub forward_ratio: f64,
    /// `hs_at_probe / operator_distance^gamma`: the backward-problem face.
    pub backward_ratio: f64,
    /// `f_distance * (log(1 / operator_distance))^(2/3)`; absent when the
    /// operator distance is not below one.
    pub log_ratio: Option<f64>,
}

/// Ratio tables over a perturbation family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Observation spacing at which operators are compressed.
    pub spacing: f64,
    /// Earlier time probing the kernel distance.
    pub probe_time: f64,
    /// Exponent of the backward ratio's denominator.
    pub gamma: f64,
    /// One row per member with a nonzero field distance, input order.
    pub rows: Vec<StabilityRow>,
}

/// The compressed operator distance can vanish only when the fields agree,
/// so a zero (or non-finite) distance at a genuinely distinct member means
/// the field-to-operator map degenerated numerically; the report aborts
/// rather than divide by it.
fn check_operator_separation(
    epsilon: f64,
    f_distance: f64,
    operator_distance: f64,
) -> Result<()> {
    if operator_distance > 0.0 && operator_distance.is_finite() {
        return Ok(());
    }
    Err(Error::Numerical(format!(
        "operator distance {operator_distance:e} at epsilon {epsilon} despite a \
         field distance of {f_distance:.3e}; injectivity of the transition map \
         failed numerically"
    )))
}

fn full_decomposition(grid: &Grid, field: &DiffusivityField) -> Result<SpectralDecomposition> {
    let gen = assemble_generator(grid, field, FaceAverage::Arithmetic)?;
    eigendecompose(&gen, Some(grid.len()), EigenStrategy::Auto)
}

/// Distance and ratio tables over a perturbation family: for each member
/// with nonzero field distance, the forward ratio `|f_eps - f_0|_h /
/// |Delta P|_graded`, the backward ratio `hs(probe_time) /
/// |Delta P|^gamma`, and the logarithmic-modulus ratio `|f_eps - f_0|_h *
/// (log 1/|Delta P|)^(2/3)`.
///
/// `Delta P` is the difference of the transition compressions onto the full
/// basis of the constant-coefficient operator on the same grid, so the
/// ungraded spectral norm is dominated by the kernel distance at the
/// spacing. Members equal to the base (the `eps = 0` member in particular)
/// produce no row. The forward ratio is meaningful when the base field
/// passes the gradient certification of the identifiability conditions; the
/// function computes the ratios unconditionally. Rows evaluate in parallel.
pub fn stability_ratios(
    grid: &Grid,
    family: &[(f64, DiffusivityField)],
    base: &DiffusivityField,
    spacing: f64,
    probe_time: f64,
    gamma: f64,
) -> Result<StabilityReport> {
    if family.is_empty() {
        return Err(Error::Config("the perturbation family is empty".into()));
    }
    if base.len() != grid.len() {
        return Err(Error::Config(format!(
            "base field has {} cells, grid has {}",
            base.len(),
            grid.len()
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Config(format!(
            "spacing must be positive and finite, got {spacing}"
        )));
    }
    if !(probe_time > 0.0) || !(probe_time < spacing) {
        return Err(Error::Config(format!(
            "probe time {probe_time} must lie strictly between 0 and the \
             spacing {spacing}"
        )));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }

    let unit = DiffusivityField::constant(grid, 1.0)?;
    let reference = full_decomposition(grid, &unit)?;
    let base_dec = full_decomposition(grid, base)?;
    let k = reference.modes();
    let base_matrix = true_projection(&base_dec, &reference, spacing, k)?;

    let rows: Vec<Option<StabilityRow>> = family
        .par_iter()
        .map(|(eps, field)| -> Result<Option<StabilityRow>> {
            if field.len() != grid.len() {
                return Err(Error::Config(format!(
                    "family member at epsilon {eps} has {} cells, grid has {}",
                    field.len(),
                    grid.len()
                )));
            }
            let diff: Vec<f64> = field
                .values()
                .iter()
                .zip(base.values())
                .map(|(a, b)| a - b)
                .collect();
            let f_distance = grid.norm(&diff);
            if f_distance == 0.0 {
                return Ok(None);
            }
            let dec = full_decomposition(grid, field)?;
            let matrix = true_projection(&dec, &reference, spacing, k)?;
            let delta: Vec<f64> = matrix
                .iter()
                .zip(&base_matrix)
                .map(|(a, b)| a - b)
                .collect();
            let graded = operator_matrix_norm(&delta, k, 2.0, &reference)?;
            let plain = operator_matrix_norm(&delta, k, 0.0, &reference)?;
            check_operator_separation(*eps, f_distance, plain)?;
            check_operator_separation(*eps, f_distance, graded)?;
            let hs = hs_distance(&dec, &base_dec, probe_time)?;
            let log_ratio = if plain < 1.0 {
                Some(f_distance * (1.0 / plain).ln().powf(LOG_MODULUS_EXPONENT))
            } else {
                None
            };
            Ok(Some(StabilityRow {
                epsilon: *eps,
                f_distance,
                graded_operator_distance: graded,
                operator_distance: plain,
                hs_at_probe: hs,
                forward_ratio: f_distance / graded,
                backward_ratio: hs / plain.powf(gamma),
                log_ratio,
            }))
        })
        .collect::<Result<_>>()?;

    Ok(StabilityReport {
        spacing,
        probe_time,
        gamma,
        rows: rows.into_iter().flatten().collect(),
    })
}

/// The time-integral coefficient `int_0^t exp(-s a) exp(-(t-s) c) ds` in a
/// form stable across all regimes: near-equal rates use `expm1` (with the
/// exact limit `t exp(-t a)` at equality), widely separated rates use the
/// difference quotient of the decay factors, which cannot overflow.
fn time_integral_coefficient(t: f64, rate_a: f64, rate_c: f64) -> f64 {
    let z = t * (rate_c - rate_a);
    if z == 0.0 {
        t * (-t * rate_c).exp()
    } else if z.abs() <= 0.5 {
        (-t * rate_c).exp() * t * z.exp_m1() / z
    } else {
        ((-t * rate_a).exp() - (-t * rate_c).exp()) / (rate_c - rate_a)
    }
}

/// Residual of the identity expanding a kernel difference applied to one
/// mode of the base operator: with `E` the mode, `lambda` its rate under the
/// base field, and `G = div((f - f_0) grad E)` the transport term,
///
/// `(P_{t,f} - P_{t,f_0}) E  =  sum_k b_k <e_k, G>_h e_k`
///
/// over the perturbed eigenpairs `(mu_k, e_k)`, with `b_k` the time integral
/// of the two decay factors. Both sides are evaluated with `modes` retained
/// perturbed modes (all of them by default); the identity is exact at the
/// discrete level for a complete basis, so the returned discrete L^2 norm of
/// the difference measures spectral truncation and round-off only.
pub fn pseudo_linearisation_residual(
    grid: &Grid,
    perturbed: &DiffusivityField,
    base: &DiffusivityField,
    t: f64,
    mode: usize,
    modes: Option<usize>,
) -> Result<f64> {
    let n = grid.len();
    if perturbed.len() != n || base.len() != n {
        return Err(Error::Config(format!(
            "fields have {} and {} cells, grid has {n}",
            perturbed.len(),
            base.len()
        )));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!(
            "time must be positive and finite, got {t}"
        )));
    }
    if mode >= n {
        return Err(Error::Config(format!(
            "mode {mode} out of range for {n} cells"
        )));
    }

    let base_gen = assemble_generator(grid, base, FaceAverage::Arithmetic)?;
    let base_dec = eigendecompose(&base_gen, Some(mode + 1), EigenStrategy::Auto)?;
    let e = base_dec.eigenvector(mode).to_vec();
    let lambda = base_dec.eigenvalue(mode);

    let retained = modes.unwrap_or(n);
    let gen = assemble_generator(grid, perturbed, FaceAverage::Arithmetic)?;
    let dec = eigendecompose(&gen, Some(retained), EigenStrategy::Auto)?;

    let diff: Vec<f64> = perturbed
        .values()
        .iter()
        .zip(base.values())
        .map(|(a, b)| a - b)
        .collect();
    let transport = flux_operator(grid, &diff, FaceAverage::Arithmetic)?.apply_vec(&e);

    // Left side: the perturbed semigroup through its retained modes, the
    // base semigroup exactly (E is an eigenvector).
    let forward = transition_apply(&dec, t, &e)?;
    let decay = (-t * lambda).exp();
    let mut residual: Vec<f64> = forward
        .iter()
        .zip(&e)
        .map(|(p, v)| p - decay * v)
        .collect();

    // Right side subtracted in place.
    let mut coeffs = dec.project(&transport);
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c *= time_integral_coefficient(t, lambda, dec.eigenvalue(k));
    }
    let expansion = dec.reconstruct(&coeffs);
    for (r, v) in residual.iter_mut().zip(&expansion) {
        *r -= v;
    }
    Ok(grid.norm(&residual))
}
