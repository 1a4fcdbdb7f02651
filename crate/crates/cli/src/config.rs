//! Experiment configuration: one JSON file drives every subcommand.
//!
//! Each subcommand reads the shared sections (domain, truth, observation)
//! plus its own section. Sections are validated strictly: unknown keys are
//! rejected so a typo cannot silently fall back to a default, and a
//! subcommand whose section is missing fails with a schema message instead
//! of inventing parameters. Command-line flags override the corresponding
//! config values; the resolved result is what gets recorded in the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use refdiff_core::error::{Error, Result};
use refdiff_core::field::TruthSpec;
use refdiff_core::geometry::{build_cutoff, build_grid, CutoffField, Domain, Grid, SubdomainSpec};
use refdiff_core::metrics::DEFAULT_STABILITY_EXPONENT;

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    /// Ground-truth diffusivity; data-generating commands sample from it and
    /// coefficient-dependent commands default to it.
    pub truth: TruthSpec,
    #[serde(default)]
    pub observation: Option<ObservationConfig>,
    /// Eigensolver settings shared by every command that decomposes the
    /// truth; solver defaults when absent.
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default)]
    pub conditions: Option<ConditionsConfig>,
    #[serde(default)]
    pub metrics: Option<MetricsConfig>,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    /// Spectral cache directory, resolved against the output directory when
    /// relative; `<out>/cache` when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

/// Box domain and its regular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Coordinate bounds per axis, lower strictly below upper.
    pub bounds: Vec<(f64, f64)>,
    /// Cells per axis.
    pub cells: Vec<usize>,
}

impl DomainConfig {
    pub fn build(&self) -> Result<Grid> {
        build_grid(&Domain::new(self.bounds.clone())?, &self.cells)
    }
}

/// Low-frequency observation settings shared by the sampling commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Sampling interval D between consecutive observations.
    pub spacing: f64,
    /// Number of transitions N; a record stores N + 1 positions.
    pub transitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Optional fine-step reflected Euler path written next to the record.
    #[serde(default)]
    pub path: Option<PathConfig>,
}

/// Fine-step Euler path settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Euler step size.
    pub dt: f64,
    /// Path length in time units.
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Start position; the domain center when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

/// Eigensolver settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Retained modes; the solver default when absent (every mode on a
    /// one-axis grid, at most 400 otherwise).
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub strategy: StrategyConfig,
}

/// Named eigensolver strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyConfig {
    #[default]
    Auto,
    Dense,
    Iterative,
}

impl StrategyConfig {
    pub fn to_core(self) -> refdiff_core::eigen::EigenStrategy {
        match self {
            StrategyConfig::Auto => refdiff_core::eigen::EigenStrategy::Auto,
            StrategyConfig::Dense => refdiff_core::eigen::EigenStrategy::Dense,
            StrategyConfig::Iterative => refdiff_core::eigen::EigenStrategy::Iterative,
        }
    }
}

/// Projection-estimator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Fixed basis size J; the schedule `round(c * N^{d/(2s+2+d)})` when
    /// absent.
    #[serde(default)]
    pub basis_size: Option<usize>,
    /// Schedule constant c.
    #[serde(default = "one")]
    pub constant: f64,
    /// Schedule smoothness exponent s.
    #[serde(default = "one")]
    pub smoothness: f64,
    /// Grading exponent of the error norm.
    #[serde(default)]
    pub alpha: f64,
    /// Projection basis coefficient; the unit coefficient when absent.
    #[serde(default)]
    pub reference: Option<TruthSpec>,
}

/// Posterior sampling settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior smoothness exponent s; sets the mode-weight decay and the
    /// data-size rescaling of the prior.
    pub smoothness: f64,
    /// Series truncation K; the schedule `round(N^{d/(2s+2+d)})` when
    /// absent.
    #[serde(default)]
    pub truncation: Option<usize>,
    /// Chain length M.
    pub iterations: usize,
    /// Defaults to a fifth of the iterations.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Fixed pCN step size; windowed adaptation when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Keep every thin-th post-burn-in draw.
    #[serde(default = "ten")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    /// Compact support of the prior: outer hull and flat core.
    pub cutoff: CutoffConfig,
    /// Modes retained in the reference basis of the series expansion; the
    /// minimal K + 1 when absent.
    #[serde(default)]
    pub reference_modes: Option<usize>,
    /// Coefficient providing the series basis; the unit coefficient when
    /// absent.
    #[serde(default)]
    pub reference: Option<TruthSpec>,
}

/// Nested-rectangle support of a smooth cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    /// Outer hull outside which the cutoff vanishes.
    pub outer: Vec<(f64, f64)>,
    /// Inner core on which the cutoff is exactly one.
    pub inner: Vec<(f64, f64)>,
}

impl CutoffConfig {
    pub fn build(&self, grid: &Grid) -> Result<CutoffField> {
        let spec = SubdomainSpec::new(grid.domain(), self.outer.clone(), self.inner.clone())?;
        build_cutoff(grid, &spec)
    }
}

/// Gradient-certificate settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    /// Coefficient whose first eigenblock is certified; the truth when
    /// absent.
    #[serde(default)]
    pub coefficient: Option<TruthSpec>,
    /// Modes retained when decomposing; must reach past the first cluster.
    #[serde(default = "six")]
    pub modes: usize,
    /// Probe region, a box inside the domain.
    pub region: Vec<(f64, f64)>,
    /// Gradient weight: a number for a fixed weight, the string
    /// `"optimize"` to walk the power-of-two ladder.
    #[serde(default)]
    pub mu: MuConfig,
    /// Explicit block weights; the sphere scan over the region when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Optional transport lower-bound probe under the certified mode.
    #[serde(default)]
    pub transport: Option<TransportConfig>,
}

/// Keyword accepted by the untagged gradient-weight field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeKeyword {
    Optimize,
}

/// Gradient-weight policy as it appears in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuConfig {
    Fixed(f64),
    Policy(OptimizeKeyword),
}

impl Default for MuConfig {
    fn default() -> Self {
        MuConfig::Policy(OptimizeKeyword::Optimize)
    }
}

impl MuConfig {
    pub fn to_core(self) -> refdiff_core::conditions::MuPolicy {
        match self {
            MuConfig::Fixed(mu) => refdiff_core::conditions::MuPolicy::Fixed(mu),
            MuConfig::Policy(OptimizeKeyword::Optimize) => {
                refdiff_core::conditions::MuPolicy::Optimize
            }
        }
    }
}

/// Transport lower-bound probe settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Compact support of the random perturbations.
    pub cutoff: CutoffConfig,
}

/// Stability-table settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Perturbation sizes; one table row per member distinct from the base.
    pub epsilons: Vec<f64>,
    /// Compact support of the perturbation family.
    pub cutoff: CutoffConfig,
    /// Profile of the relative perturbation, given in theta space.
    pub shape: TruthSpec,
    /// Exponent of the plain operator distance in the backward ratio.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Kernel-distance probe time, strictly between zero and the spacing.
    pub probe_time: f64,
    /// Base coefficient the family perturbs; the truth when absent.
    #[serde(default)]
    pub base: Option<TruthSpec>,
}

/// Convergence-rate experiment settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    /// Sample sizes N; at least three are needed to fit a slope.
    pub n_values: Vec<usize>,
    pub replicates: usize,
    /// Smoothness exponent steering the basis-size schedule.
    pub smoothness: f64,
    /// Proportionality constant of the basis-size schedule.
    #[serde(default = "one")]
    pub constant: f64,
    /// Grading exponent of the error norm.
    #[serde(default)]
    pub alpha: f64,
    /// Overrides the schedule with one fixed basis size.
    #[serde(default)]
    pub fixed_basis_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Projection basis coefficient; the unit coefficient when absent.
    #[serde(default)]
    pub reference: Option<TruthSpec>,
}

fn one() -> f64 {
    1.0
}

fn six() -> usize {
    6
}

fn ten() -> usize {
    10
}

fn hundred() -> usize {
    100
}

fn default_gamma() -> f64 {
    DEFAULT_STABILITY_EXPONENT
}

/// The subcommand a config is being resolved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Spectrum,
    Estimate,
    Posterior,
    Conditions,
    Metrics,
    Rates,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Spectrum => "spectrum",
            CommandKind::Estimate => "estimate",
            CommandKind::Posterior => "posterior",
            CommandKind::Conditions => "conditions",
            CommandKind::Metrics => "metrics",
            CommandKind::Rates => "rates",
        }
    }
}

fn missing(section: &str, command: &str) -> Error {
    Error::Config(format!(
        "the {command} command needs a `{section}` section in the experiment config"
    ))
}

impl ExperimentConfig {
    /// Parses a config file, rejecting unknown keys.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The solver settings, defaulted when the section is absent.
    pub fn solver(&self) -> SpectrumConfig {
        self.spectrum.clone().unwrap_or_default()
    }

    pub fn observation(&self, command: CommandKind) -> Result<&ObservationConfig> {
        self.observation
            .as_ref()
            .ok_or_else(|| missing("observation", command.name()))
    }

    pub fn estimator(&self) -> Result<&EstimatorConfig> {
        self.estimator
            .as_ref()
            .ok_or_else(|| missing("estimator", CommandKind::Estimate.name()))
    }

    pub fn prior(&self) -> Result<&PriorConfig> {
        self.prior
            .as_ref()
            .ok_or_else(|| missing("prior", CommandKind::Posterior.name()))
    }

    pub fn conditions(&self) -> Result<&ConditionsConfig> {
        self.conditions
            .as_ref()
            .ok_or_else(|| missing("conditions", CommandKind::Conditions.name()))
    }

    pub fn metrics(&self) -> Result<&MetricsConfig> {
        self.metrics
            .as_ref()
            .ok_or_else(|| missing("metrics", CommandKind::Metrics.name()))
    }

    pub fn rates(&self) -> Result<&RatesConfig> {
        self.rates
            .as_ref()
            .ok_or_else(|| missing("rates", CommandKind::Rates.name()))
    }

    /// Replaces the seed of the command's stochastic stage with the
    /// command-line value. Commands without a random stage reject the flag
    /// so a meaningless override cannot pass silently.
    pub fn override_seed(&mut self, command: CommandKind, seed: u64) -> Result<()> {
        match command {
            CommandKind::Simulate | CommandKind::Estimate => {
                self.observation
                    .as_mut()
                    .ok_or_else(|| missing("observation", command.name()))?
                    .seed = seed;
            }
            CommandKind::Posterior => {
                self.prior
                    .as_mut()
                    .ok_or_else(|| missing("prior", command.name()))?
                    .seed = seed;
            }
            CommandKind::Rates => {
                self.rates
                    .as_mut()
                    .ok_or_else(|| missing("rates", command.name()))?
                    .seed = seed;
            }
            CommandKind::Conditions => {
                let section = self
                    .conditions
                    .as_mut()
                    .ok_or_else(|| missing("conditions", command.name()))?;
                section
                    .transport
                    .as_mut()
                    .ok_or_else(|| {
                        Error::Config(
                            "--seed reseeds the transport probe, but the conditions \
                             section has no `transport` block"
                                .into(),
                        )
                    })?
                    .seed = seed;
            }
            CommandKind::Spectrum | CommandKind::Metrics => {
                return Err(Error::Config(format!(
                    "the {} command is deterministic and accepts no --seed",
                    command.name()
                )));
            }
        }
        Ok(())
    }
}
