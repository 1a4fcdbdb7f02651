//! Spectral projection estimation of the lag-D transition operator.
//!
//! The estimator averages products of unit-coefficient eigenbasis values
//! over consecutive observation pairs: `H[j][j'] = (1/N) sum_i
//! e_j(X_{(i-1)D}) e_{j'}(X_{iD})`. Its expectation is the transition
//! operator compressed to the leading basis block, so operator-norm errors
//! against the analytically known compression quantify the estimation rate.
//! Basis functions are evaluated piecewise-constantly at the containing
//! cell, which matches how the chains are generated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::SpectralDecomposition;
use crate::error::{Error, Result};
use crate::norms::operator_matrix_norm;
use crate::rng::Stream;
use crate::simulate::{build_sampler, ObservationRecord};
use crate::stats::least_squares_slope;

/// Empirical compression of the transition operator onto the leading
/// reference-basis block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEstimate {
    pub basis_size: usize,
    /// Row-major `basis_size x basis_size` pair averages.
    pub matrix: Vec<f64>,
    pub transitions: usize,
    pub spacing: f64,
}

impl ProjectionEstimate {
    pub fn entry(&self, j: usize, jp: usize) -> f64 {
        self.matrix[j * self.basis_size + jp]
    }
}

/// Averages reference-basis products over the record's transition pairs.
pub fn projection_estimator(
    obs: &ObservationRecord,
    basis_size: usize,
    reference: &SpectralDecomposition,
) -> Result<ProjectionEstimate> {
    if basis_size == 0 || basis_size > reference.modes() {
        return Err(Error::Config(format!(
            "basis size {basis_size} not in 1..={} retained modes",
            reference.modes()
        )));
    }
    if obs.dim != reference.grid().dim() {
        return Err(Error::Config(format!(
            "record dimension {} does not match the reference grid dimension {}",
            obs.dim,
            reference.grid().dim()
        )));
    }
    let j = basis_size;
    let basis: Vec<&[f64]> = (0..j).map(|k| reference.eigenvector(k)).collect();
    let mut matrix = vec![0.0; j * j];
    let mut prev_cell = reference.grid().cell_of(obs.position(0))?;
    for i in 1..=obs.transitions {
        let cell = reference.grid().cell_of(obs.position(i))?;
        for (row, b) in basis.iter().enumerate() {
            let a = b[prev_cell];
            let out = &mut matrix[row * j..(row + 1) * j];
            for (o, bp) in out.iter_mut().zip(&basis) {
                *o += a * bp[cell];
            }
        }
        prev_cell = cell;
    }
    let scale = 1.0 / obs.transitions as f64;
    for m in &mut matrix {
        *m *= scale;
    }
    Ok(ProjectionEstimate {
        basis_size,
        matrix,
        transitions: obs.transitions,
        spacing: obs.spacing,
    })
}

/// Compression of the true transition operator for the `truth` coefficient
/// onto the leading `size` reference-basis functions:
/// `P[j][j'] = sum_k e^{-D lambda_k} <e_j, v_k>_h <v_k, e_j'>_h` over the
/// truth eigenpairs `(lambda_k, v_k)`.
pub fn true_projection(
    truth: &SpectralDecomposition,
    reference: &SpectralDecomposition,
    spacing: f64,
    size: usize,
) -> Result<Vec<f64>> {
    if truth.grid() != reference.grid() {
        return Err(Error::Config(
            "truth and reference decompositions live on different grids".into(),
        ));
    }
    if size == 0 || size > reference.modes() {
        return Err(Error::Config(format!(
            "target size {size} not in 1..={} reference modes",
            reference.modes()
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Config(format!("spacing must be positive, got {spacing}")));
    }
    let w = reference.grid().cell_volume();
    let n = reference.grid().len();
    let mut matrix = vec![0.0; size * size];
    let mut overlap = vec![0.0; size];
    for k in 0..truth.modes() {
        let weight = (-spacing * truth.eigenvalue(k)).exp();
        // Eigenvalues ascend, so later modes only shrink the weight further.
        if weight < 1e-16 {
            break;
        }
        let v = truth.eigenvector(k);
        for (j, o) in overlap.iter_mut().enumerate() {
            let e = reference.eigenvector(j);
            *o = (0..n).map(|c| e[c] * v[c]).sum::<f64>() * w;
        }
        for j in 0..size {
            let row = &mut matrix[j * size..(j + 1) * size];
            let a = weight * overlap[j];
            for (r, &o) in row.iter_mut().zip(&overlap) {
                *r += a * o;
            }
        }
    }
    Ok(matrix)
}

/// Graded operator-norm distance between the zero-padded estimate and the
/// true compression on the full retained reference basis. The padding keeps
/// the truncation tail of the true operator in the error, which is what
/// makes basis-size selection a bias-variance trade-off.
pub fn estimator_error(
    estimate: &ProjectionEstimate,
    truth: &SpectralDecomposition,
    reference: &SpectralDecomposition,
    alpha: f64,
) -> Result<f64> {
    let k = reference.modes();
    if estimate.basis_size > k {
        return Err(Error::Config(format!(
            "estimate uses {} basis functions but the reference retains {k}",
            estimate.basis_size
        )));
    }
    let mut diff = true_projection(truth, reference, estimate.spacing, k)?;
    for d in &mut diff {
        *d = -*d;
    }
    let j = estimate.basis_size;
    for row in 0..j {
        for col in 0..j {
            diff[row * k + col] += estimate.entry(row, col);
        }
    }
    operator_matrix_norm(&diff, k, alpha, reference)
}

/// Configuration of a convergence-rate experiment over a ladder of sample
/// sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    /// Sample sizes N; at least three are needed to fit a slope.
    pub n_values: Vec<usize>,
    pub replicates: usize,
    /// Smoothness exponent steering the basis-size schedule.
    pub smoothness: f64,
    /// Proportionality constant of the basis-size schedule.
    pub constant: f64,
    /// Grading exponent of the error norm.
    pub alpha: f64,
    /// Observation spacing D.
    pub spacing: f64,
    pub seed: u64,
    /// When set, overrides the schedule with one fixed basis size; the error
    /// then plateaus at the truncation bias floor instead of decaying.
    pub fixed_basis_size: Option<usize>,
}

/// Basis-size schedule `J_N = round(c * N^{d/(2s+2+d)})`, clamped to
/// `2..=available`. Balances truncation bias against estimation variance
/// for an `s`-smooth coefficient in `d` dimensions.
pub fn schedule_basis_size(
    n: usize,
    dim: usize,
    smoothness: f64,
    constant: f64,
    available: usize,
) -> usize {
    let d = dim as f64;
    let exponent = d / (2.0 * smoothness + 2.0 + d);
    let j = (constant * (n as f64).powf(exponent)).round() as usize;
    j.clamp(2, available)
}

impl RateExperimentConfig {
    /// The basis size used at sample size `n`: the fixed override when set,
    /// the schedule otherwise.
    pub fn basis_size(&self, n: usize, dim: usize, available: usize) -> usize {
        if let Some(j) = self.fixed_basis_size {
            return j.clamp(1, available);
        }
        schedule_basis_size(n, dim, self.smoothness, self.constant, available)
    }
}

/// One sample-size row of a rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub transitions: usize,
    pub basis_size: usize,
    pub mean_error: f64,
    pub std_error: f64,
    /// Per-replicate errors in replicate order.
    pub errors: Vec<f64>,
}

/// Rate-experiment table plus the fitted log-log slope of the mean error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub slope: f64,
}

/// Runs replicated estimation at each sample size and fits the error decay
/// slope. Replicates are independent chains from the truth sampler and run
/// in parallel with per-task derived seeds, so the report is deterministic.
pub fn rate_experiment(
    cfg: &RateExperimentConfig,
    truth: &SpectralDecomposition,
    reference: &SpectralDecomposition,
) -> Result<RateReport> {
    if cfg.n_values.len() < 3 {
        return Err(Error::Config(format!(
            "a rate fit needs at least 3 sample sizes, got {}",
            cfg.n_values.len()
        )));
    }
    if cfg.replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    if truth.grid() != reference.grid() {
        return Err(Error::Config(
            "truth and reference decompositions live on different grids".into(),
        ));
    }
    let sampler = build_sampler(truth, cfg.spacing)?;
    let root = Stream::from_seed(cfg.seed);
    let dim = truth.grid().dim();

    let tasks: Vec<(usize, usize)> = (0..cfg.n_values.len())
        .flat_map(|ni| (0..cfg.replicates).map(move |r| (ni, r)))
        .collect();
    let errors: Vec<f64> = tasks
        .into_par_iter()
        .map(|(ni, r)| {
            let n = cfg.n_values[ni];
            let j = cfg.basis_size(n, dim, reference.modes());
            let seed = root.substream((ni * 100_000 + r) as u64).seed();
            let rec = sampler.sample(n, seed)?;
            let est = projection_estimator(&rec, j, reference)?;
            estimator_error(&est, truth, reference, cfg.alpha)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let errs = errors[ni * cfg.replicates..(ni + 1) * cfg.replicates].to_vec();
        let mean = crate::stats::mean(&errs);
        let std = crate::stats::variance(&errs).sqrt();
        rows.push(RateRow {
            transitions: n,
            basis_size: cfg.basis_size(n, dim, reference.modes()),
            mean_error: mean,
            std_error: std,
            errors: errs,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.transitions as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_error.ln()).collect();
    let slope = least_squares_slope(&xs, &ys)?;
    Ok(RateReport { rows, slope })
}
