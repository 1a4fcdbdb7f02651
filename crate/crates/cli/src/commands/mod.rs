//! Subcommand implementations over a shared run context.

use refdiff_core::cache::SpectrumCache;
use refdiff_core::eigen::{EigenStrategy, SpectralDecomposition};
use refdiff_core::error::Result;
use refdiff_core::field::{DiffusivityField, TruthSpec};
use refdiff_core::geometry::Grid;
use refdiff_core::stencil::{assemble_generator, FaceAverage};

use crate::config::ExperimentConfig;
use crate::io::OutputDir;

pub mod conditions;
pub mod estimate;
pub mod metrics;
pub mod posterior;
pub mod rates;
pub mod simulate;
pub mod spectrum;

/// Everything a subcommand needs: the resolved config, the grid it implies,
/// the spectral cache, and the output directory collecting artifacts.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub grid: Grid,
    pub cache: SpectrumCache,
    /// Named decompositions must be cache hits; recomputation is an error.
    pub require_cache: bool,
    pub out: &'a mut OutputDir,
}

impl Context<'_> {
    /// Decomposes a coefficient through the spectral cache. With the cache
    /// requirement active, a missing record fails instead of recomputing.
    pub fn decompose(
        &self,
        field: &DiffusivityField,
        modes: Option<usize>,
        strategy: EigenStrategy,
    ) -> Result<SpectralDecomposition> {
        let gen = assemble_generator(&self.grid, field, FaceAverage::Arithmetic)?;
        let (dec, _) = self
            .cache
            .get_or_compute(&gen, modes, strategy, self.require_cache)?;
        Ok(dec)
    }

    /// The ground-truth coefficient on the run's grid.
    pub fn truth_field(&self) -> Result<DiffusivityField> {
        self.config.truth.build(&self.grid)
    }

    /// A section-local coefficient, falling back to the truth.
    pub fn coefficient_or_truth(&self, spec: &Option<TruthSpec>) -> Result<DiffusivityField> {
        spec.as_ref().unwrap_or(&self.config.truth).build(&self.grid)
    }

    /// A section-local coefficient, falling back to the unit coefficient.
    pub fn coefficient_or_unit(&self, spec: &Option<TruthSpec>) -> Result<DiffusivityField> {
        match spec {
            Some(s) => s.build(&self.grid),
            None => DiffusivityField::constant(&self.grid, 1.0),
        }
    }
}
