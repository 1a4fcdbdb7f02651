//! Gaussian-series prior, exact spectral log-likelihood, and pCN sampling.
//!
//! The prior draws standard-normal coordinates `g_0..g_K` and materializes
//! the log-coefficient field `theta = scale * zeta * (g_0 + sum_k
//! lambda_k^{-s/2} g_k e_k)` over the unit-coefficient eigenbasis, localized
//! by the cutoff `zeta` and damped by `scale = N^{-d/(4s+4+2d)}`. The
//! likelihood of an observation chain is the exact lag-D transition density
//! of the linked diffusivity, evaluated per pair from a fresh spectral
//! decomposition. Posterior exploration uses the preconditioned
//! Crank-Nicolson proposal, whose acceptance ratio needs only likelihood
//! differences because the proposal is reversible for the prior.

use serde::{Deserialize, Serialize};

use crate::eigen::{eigendecompose, tridiag, EigenStrategy, SOLVER_SEED};
use crate::error::{Error, Result};
use crate::field::{link, DiffusivityField};
use crate::geometry::CutoffField;
use crate::rng::{Stream, StreamState};
use crate::simulate::ObservationRecord;
use crate::stencil::{assemble_generator, FaceAverage};

/// Transition-density coefficients below this size are dropped from
/// likelihood sums; the discarded tail is orders below data resolution.
pub const LIKELIHOOD_TAIL_CUT: f64 = 1e-12;
/// Initial pCN step size when adaptation is enabled.
pub const BETA_INIT: f64 = 0.3;
/// Burn-in adaptation window length in iterations.
pub const ADAPT_WINDOW: usize = 50;
/// Acceptance band targeted by the burn-in adaptation.
pub const ACCEPT_BAND: (f64, f64) = (0.25, 0.35);
/// Hard clamp for the adapted step size.
pub const BETA_RANGE: (f64, f64) = (1e-4, 1.0);

/// Prior hyperparameters bound to a reference decomposition and cutoff.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    smoothness: f64,
    truncation: usize,
    data_size: usize,
    scale: f64,
    cutoff: CutoffField,
    reference: crate::eigen::SpectralDecomposition,
}

/// Standard-normal coordinates `g_0..g_K` of one prior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCoefficients {
    pub values: Vec<f64>,
}

impl ThetaCoefficients {
    pub fn zeros(len: usize) -> Self {
        ThetaCoefficients { values: vec![0.0; len] }
    }
}

/// Series truncation schedule `K = round(N^{d/(2s+2+d)})` used when no
/// explicit truncation is configured.
pub fn default_series_truncation(data_size: usize, smoothness: f64, dim: usize) -> usize {
    let d = dim as f64;
    let exponent = d / (2.0 * smoothness + 2.0 + d);
    ((data_size as f64).powf(exponent).round() as usize).max(1)
}

impl PriorSpec {
    pub fn new(
        smoothness: f64,
        truncation: usize,
        data_size: usize,
        cutoff: CutoffField,
        reference: crate::eigen::SpectralDecomposition,
    ) -> Result<Self> {
        if !(smoothness >= 0.0) || !smoothness.is_finite() {
            return Err(Error::Config(format!(
                "smoothness must be a nonnegative real, got {smoothness}"
            )));
        }
        if truncation == 0 || truncation >= reference.modes() {
            return Err(Error::Config(format!(
                "series truncation {truncation} not in 1..{} retained modes",
                reference.modes()
            )));
        }
        if data_size == 0 {
            return Err(Error::Config("the rescaling needs a positive data size".into()));
        }
        if cutoff.values().len() != reference.grid().len() {
            return Err(Error::Config(format!(
                "cutoff has {} cells, reference grid has {}",
                cutoff.values().len(),
                reference.grid().len()
            )));
        }
        let d = reference.grid().dim() as f64;
        let exponent = d / (4.0 * smoothness + 4.0 + 2.0 * d);
        let scale = (data_size as f64).powf(-exponent);
        Ok(PriorSpec { smoothness, truncation, data_size, scale, cutoff, reference })
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Series truncation K; coefficient vectors have length K + 1.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn data_size(&self) -> usize {
        self.data_size
    }

    /// Rescaling factor `N^{-d/(4s+4+2d)}` multiplying every draw.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cutoff(&self) -> &CutoffField {
        &self.cutoff
    }

    pub fn reference(&self) -> &crate::eigen::SpectralDecomposition {
        &self.reference
    }

    pub fn coefficient_len(&self) -> usize {
        self.truncation + 1
    }

    /// Materializes the localized log-coefficient field of one draw.
    pub fn theta_field(&self, coeffs: &ThetaCoefficients) -> Result<Vec<f64>> {
        if coeffs.values.len() != self.coefficient_len() {
            return Err(Error::Config(format!(
                "draw has {} coordinates, prior expects {}",
                coeffs.values.len(),
                self.coefficient_len()
            )));
        }
        let n = self.reference.grid().len();
        let mut series = vec![coeffs.values[0]; n];
        for k in 1..=self.truncation {
            let damp = self.reference.eigenvalue(k).powf(-self.smoothness / 2.0);
            let g = coeffs.values[k] * damp;
            for (s, &e) in series.iter_mut().zip(self.reference.eigenvector(k)) {
                *s += g * e;
            }
        }
        for (s, &z) in series.iter_mut().zip(self.cutoff.values()) {
            *s *= self.scale * z;
        }
        Ok(series)
    }

    /// Linked diffusivity of one draw.
    pub fn diffusivity(&self, coeffs: &ThetaCoefficients) -> Result<DiffusivityField> {
        link(&self.theta_field(coeffs)?)
    }
}

/// Draws iid standard-normal prior coordinates.
pub fn sample_prior(spec: &PriorSpec, seed: u64) -> ThetaCoefficients {
    let mut rng = Stream::from_seed(seed);
    let values = (0..spec.coefficient_len()).map(|_| rng.standard_normal()).collect();
    ThetaCoefficients { values }
}

/// Solver knobs for one likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    /// Mode budget for grids with more than one axis (the one-axis path
    /// sizes itself from the tail cut).
    pub modes: Option<usize>,
    /// Drop transition-density modes whose lag-D coefficient is smaller.
    pub tail_cut: f64,
    pub strategy: EigenStrategy,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            modes: None,
            tail_cut: LIKELIHOOD_TAIL_CUT,
            strategy: EigenStrategy::Auto,
        }
    }
}

/// Observation data resolved against a grid: cell indices per position plus
/// the spacing, ready for repeated likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PreparedTarget {
    /// Flat likelihood; the chain then samples the prior.
    PriorOnly,
    Data { spacing: f64, cells: Vec<usize> },
}

impl PreparedTarget {
    pub fn from_record(obs: &ObservationRecord, grid: &crate::geometry::Grid) -> Result<Self> {
        let cells = obs
            .iter_positions()
            .map(|p| grid.cell_of(p))
            .collect::<Result<Vec<usize>>>()?;
        Ok(PreparedTarget::Data { spacing: obs.spacing, cells })
    }
}

/// Exact spectral log-likelihood `sum_i log p_D(X_{(i-1)D}, X_{iD})` of the
/// linked diffusivity of `coeffs`.
pub fn log_likelihood(
    spec: &PriorSpec,
    coeffs: &ThetaCoefficients,
    obs: &ObservationRecord,
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    match PreparedTarget::from_record(obs, spec.reference().grid())? {
        PreparedTarget::Data { spacing, cells } => {
            likelihood_on_cells(spec, coeffs, spacing, &cells, cfg)
        }
        PreparedTarget::PriorOnly => unreachable!("records always resolve to data"),
    }
}

/// Likelihood on pre-resolved cells. The transition density is expanded over
/// the eigenpairs of the linked generator; modes beyond the tail cut cannot
/// move the sum at data scale and are dropped.
fn likelihood_on_cells(
    spec: &PriorSpec,
    coeffs: &ThetaCoefficients,
    spacing: f64,
    cells: &[usize],
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    let grid = spec.reference().grid();
    let field = spec.diffusivity(coeffs)?;
    let gen = assemble_generator(grid, &field, FaceAverage::Arithmetic)?;
    let n = grid.len();
    let w = grid.cell_volume();
    let volume = w * n as f64;

    // (coefficient e^{-D lambda_k}, h-orthonormal vector) per retained mode.
    let (weights, vectors): (Vec<f64>, Vec<f64>) = if grid.dim() == 1 {
        // One-axis fast path: values-only QL, then shifted inverse iteration
        // for just the modes that survive the tail cut.
        let (diag, sub) = gen.neg_tridiagonal()?;
        let values = tridiag::eigenvalues(&diag, &sub)?;
        let keep = values
            .iter()
            .take_while(|&&v| (-spacing * v).exp() >= cfg.tail_cut)
            .count()
            .max(1);
        // Mode 0 is the exact constant and is folded into the uniform term;
        // inverse iteration only sees the strictly positive eigenvalues.
        let raw = tridiag::selected_eigenvectors(&diag, &sub, &values[1..keep], SOLVER_SEED)?;
        let scale = 1.0 / w.sqrt();
        let weights = values[1..keep].iter().map(|&v| (-spacing * v).exp()).collect();
        let vectors = raw.iter().map(|&v| v * scale).collect();
        (weights, vectors)
    } else {
        let budget = cfg.modes.unwrap_or(300).min(n - 1);
        let dec = eigendecompose(&gen, Some(budget), cfg.strategy)?;
        let keep = (1..dec.modes())
            .take_while(|&k| (-spacing * dec.eigenvalue(k)).exp() >= cfg.tail_cut)
            .count();
        let weights = (1..=keep).map(|k| (-spacing * dec.eigenvalue(k)).exp()).collect();
        let mut vectors = Vec::with_capacity(keep * n);
        for k in 1..=keep {
            vectors.extend_from_slice(dec.eigenvector(k));
        }
        (weights, vectors)
    };

    let uniform = 1.0 / volume;
    let mut ell = 0.0;
    for pair in cells.windows(2) {
        let (x, y) = (pair[0], pair[1]);
        let mut p = uniform;
        for (k, &c) in weights.iter().enumerate() {
            p += c * vectors[k * n + x] * vectors[k * n + y];
        }
        if !(p > 0.0) {
            return Err(Error::KernelQuality(format!(
                "transition density {p:.3e} at cell pair ({x}, {y}); \
                 raise the mode budget or refine the grid"
            )));
        }
        ell += p.ln();
    }
    Ok(ell)
}

/// Mutable pCN chain position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub coefficients: ThetaCoefficients,
    /// Cached log-likelihood of `coefficients`.
    pub log_likelihood: f64,
    pub iteration: u64,
    pub accepted: u64,
    pub beta: f64,
    pub failed_evaluations: u64,
}

impl ChainState {
    /// Fresh chain at the prior mean with its likelihood evaluated.
    pub fn initial(
        spec: &PriorSpec,
        target: &PreparedTarget,
        cfg: &LikelihoodConfig,
        beta: f64,
    ) -> Result<Self> {
        let coefficients = ThetaCoefficients::zeros(spec.coefficient_len());
        let log_likelihood = target_likelihood(spec, &coefficients, target, cfg)?;
        Ok(ChainState {
            coefficients,
            log_likelihood,
            iteration: 0,
            accepted: 0,
            beta,
            failed_evaluations: 0,
        })
    }
}

fn target_likelihood(
    spec: &PriorSpec,
    coeffs: &ThetaCoefficients,
    target: &PreparedTarget,
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    match target {
        PreparedTarget::PriorOnly => Ok(0.0),
        PreparedTarget::Data { spacing, cells } => {
            likelihood_on_cells(spec, coeffs, *spacing, cells, cfg)
        }
    }
}

/// Serializable chain snapshot; restoring continues bitwise identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub state: ChainState,
    pub rng: StreamState,
}

impl ChainCheckpoint {
    pub fn capture(state: &ChainState, rng: &Stream) -> Self {
        ChainCheckpoint { state: state.clone(), rng: rng.state() }
    }

    pub fn resume(&self) -> (ChainState, Stream) {
        (self.state.clone(), Stream::restore(&self.rng))
    }
}

/// One pCN step: propose `g' = sqrt(1 - beta^2) g + beta xi`, accept with
/// probability `min(1, exp(dl))`. A failed likelihood evaluation counts as a
/// rejection. The step consumes `K + 1` normals and one uniform regardless
/// of the outcome.
pub fn pcn_step(
    state: &mut ChainState,
    target: &PreparedTarget,
    spec: &PriorSpec,
    cfg: &LikelihoodConfig,
    rng: &mut Stream,
) -> Result<()> {
    if !(state.beta > 0.0 && state.beta <= 1.0) {
        return Err(Error::Config(format!(
            "pCN step size must lie in (0, 1], got {}",
            state.beta
        )));
    }
    let keep = (1.0 - state.beta * state.beta).sqrt();
    let proposal = ThetaCoefficients {
        values: state
            .coefficients
            .values
            .iter()
            .map(|&g| keep * g + state.beta * rng.standard_normal())
            .collect(),
    };
    let proposed_ell = target_likelihood(spec, &proposal, target, cfg);
    let u = rng.uniform();
    state.iteration += 1;
    match proposed_ell {
        Ok(ell) => {
            if u.ln() < ell - state.log_likelihood {
                state.coefficients = proposal;
                state.log_likelihood = ell;
                state.accepted += 1;
            }
            Ok(())
        }
        Err(Error::KernelQuality(_)) | Err(Error::Numerical(_)) => {
            // A degenerate proposal is rejected, not fatal.
            state.failed_evaluations += 1;
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// Chain driver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Defaults to a fifth of the iterations.
    pub burn_in: Option<usize>,
    /// Fixed step size; adaptation from [`BETA_INIT`] when absent.
    pub beta: Option<f64>,
    /// Keep every thin-th post-burn-in draw.
    pub thin: usize,
    pub seed: u64,
    pub solver: LikelihoodConfig,
}

impl ChainConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burn_in: None,
            beta: None,
            thin: 10,
            seed,
            solver: LikelihoodConfig::default(),
        }
    }
}

/// One iteration of the chain trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub log_likelihood: f64,
    pub accepted: bool,
    pub beta: f64,
}

/// Chain result: thinned draws, the coefficient-wise posterior mean and its
/// linked field, and per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<ThetaCoefficients>,
    pub acceptance_rate: f64,
    pub posterior_mean: ThetaCoefficients,
    pub mean_theta_field: Vec<f64>,
    pub mean_diffusivity: DiffusivityField,
    pub final_beta: f64,
    pub failed_evaluations: u64,
    pub trace: Vec<TraceRow>,
}

/// Runs a pCN chain: burn-in with windowed step-size adaptation toward the
/// acceptance band, then frozen-step sampling with thinning. The posterior
/// mean averages every post-burn-in iterate.
pub fn run_chain(
    target: &PreparedTarget,
    spec: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    if cfg.iterations == 0 {
        return Err(Error::Config("a chain needs at least one iteration".into()));
    }
    if cfg.thin == 0 {
        return Err(Error::Config("thinning must keep at least every draw".into()));
    }
    let burn_in = cfg.burn_in.unwrap_or(cfg.iterations / 5).min(cfg.iterations);
    let adapting = cfg.beta.is_none();
    let beta = cfg.beta.unwrap_or(BETA_INIT);
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("step size must lie in (0, 1], got {beta}")));
    }

    let mut rng = Stream::from_seed(cfg.seed);
    let mut state = ChainState::initial(spec, target, &cfg.solver, beta)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut samples = Vec::new();
    let mut mean = vec![0.0; spec.coefficient_len()];
    let mut kept = 0usize;
    let mut window_base = 0u64;
    let mut late_burn_base = 0u64;

    for i in 1..=cfg.iterations {
        let before = state.accepted;
        pcn_step(&mut state, target, spec, &cfg.solver, &mut rng)?;
        trace.push(TraceRow {
            iteration: state.iteration,
            log_likelihood: state.log_likelihood,
            accepted: state.accepted > before,
            beta: state.beta,
        });
        if i == burn_in / 2 {
            late_burn_base = state.accepted;
        }
        if adapting && i <= burn_in && i % ADAPT_WINDOW == 0 {
            let rate = (state.accepted - window_base) as f64 / ADAPT_WINDOW as f64;
            if rate < ACCEPT_BAND.0 {
                state.beta *= 0.9;
            } else if rate > ACCEPT_BAND.1 {
                state.beta *= 1.1;
            }
            state.beta = state.beta.clamp(BETA_RANGE.0, BETA_RANGE.1);
            window_base = state.accepted;
        }
        if i == burn_in && burn_in > 0 {
            let span = burn_in - burn_in / 2;
            let rate = (state.accepted - late_burn_base) as f64 / span.max(1) as f64;
            if rate < 0.01 {
                return Err(Error::Tuning(format!(
                    "acceptance rate {rate:.4} after adaptation; the chain is stuck"
                )));
            }
        }
        if i > burn_in {
            for (m, &g) in mean.iter_mut().zip(&state.coefficients.values) {
                *m += g;
            }
            kept += 1;
            if (i - burn_in) % cfg.thin == 0 {
                samples.push(state.coefficients.clone());
            }
        }
    }

    for m in &mut mean {
        *m /= kept.max(1) as f64;
    }
    let posterior_mean = ThetaCoefficients { values: mean };
    let mean_theta_field = spec.theta_field(&posterior_mean)?;
    let mean_diffusivity = link(&mean_theta_field)?;
    Ok(ChainOutput {
        samples,
        acceptance_rate: state.accepted as f64 / cfg.iterations as f64,
        posterior_mean,
        mean_theta_field,
        mean_diffusivity,
        final_beta: state.beta,
        failed_evaluations: state.failed_evaluations,
        trace,
    })
}
