//! Observation and path synthesis for the reflected diffusion.
//!
//! Ground-truth observation chains are drawn from the exact spectral
//! transition density: the heat-kernel matrix restricted to cells is
//! symmetric and row-stochastic after volume weighting, so the cell chain is
//! doubly stochastic and the uniform law is preserved exactly; a uniform
//! jitter inside the sampled cell makes positions continuous. Reflected
//! Euler-Maruyama paths are provided for visualization and cross-checks,
//! with coordinate-wise fold reflection at the box boundary.
//!
//! Draw order is part of the determinism contract: an observation chain
//! consumes `dim` uniforms for the start point, then one uniform for each
//! cell step followed by `dim` jitter uniforms; an Euler path consumes `dim`
//! standard normals per step.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigen::SpectralDecomposition;
use crate::error::{Error, Result};
use crate::field::DiffusivityField;
use crate::geometry::Grid;
use crate::kernel::heat_kernel;
use crate::rng::Stream;

/// Largest tolerated negative mass clipped from one kernel row.
pub const CLIP_TOLERANCE: f64 = 1e-6;

/// How a record's positions were generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    ExactSpectral,
    Euler,
}

/// A low-frequency observation chain `X_0, X_D, ..., X_{ND}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub spacing: f64,
    pub transitions: usize,
    pub dim: usize,
    /// Row-major `(transitions + 1) x dim`.
    pub positions: Vec<f64>,
    pub seed: u64,
    pub mode: GenerationMode,
    /// Content hash of the spectral data that generated the chain.
    pub field_fingerprint: String,
    /// Largest negative mass clipped from any transition row.
    pub clip_mass: f64,
}

impl ObservationRecord {
    /// Number of stored positions, `transitions + 1`.
    pub fn len(&self) -> usize {
        self.transitions + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_positions(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Restriction to the transitions `from..to` (positions `from..=to`).
    /// The seed is kept for provenance; it regenerates the parent chain, not
    /// the slice.
    pub fn slice(&self, from: usize, to: usize) -> Result<ObservationRecord> {
        if from >= to || to > self.transitions {
            return Err(Error::Config(format!(
                "invalid transition range {from}..{to} of {}",
                self.transitions
            )));
        }
        Ok(ObservationRecord {
            spacing: self.spacing,
            transitions: to - from,
            dim: self.dim,
            positions: self.positions[from * self.dim..(to + 1) * self.dim].to_vec(),
            seed: self.seed,
            mode: self.mode,
            field_fingerprint: self.field_fingerprint.clone(),
            clip_mass: self.clip_mass,
        })
    }
}

/// A reflected Euler-Maruyama path sampled at multiples of `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub dt: f64,
    pub dim: usize,
    /// Row-major `(steps + 1) x dim`.
    pub positions: Vec<f64>,
    pub seed: u64,
    /// Total number of boundary folds over all steps and coordinates.
    pub reflections: u64,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

/// Reusable sampling tables for one spectral kernel at one spacing.
#[derive(Debug, Clone)]
pub struct SpectralSampler {
    grid: Grid,
    spacing: f64,
    /// Row-major cumulative cell probabilities, each row ending exactly at 1.
    cdf: Vec<f64>,
    clip_mass: f64,
    fingerprint: String,
}

/// Builds the categorical sampling tables from the strict heat kernel at the
/// observation spacing. Each row is clipped at zero (the clipped mass must
/// stay under [`CLIP_TOLERANCE`]) and renormalized.
pub fn build_sampler(dec: &SpectralDecomposition, spacing: f64) -> Result<SpectralSampler> {
    let kernel = heat_kernel(dec, spacing, true)?;
    let grid = dec.grid().clone();
    let n = grid.len();
    let w = grid.cell_volume();
    let (cdf, clip_mass) = rows_to_cdf(kernel.values(), n, w)?;
    Ok(SpectralSampler {
        grid,
        spacing,
        cdf,
        clip_mass,
        fingerprint: spectrum_fingerprint(dec),
    })
}

/// Clips, renormalizes, and accumulates kernel rows into sampling CDFs.
fn rows_to_cdf(values: &[f64], n: usize, w: f64) -> Result<(Vec<f64>, f64)> {
    let mut cdf = vec![0.0; n * n];
    let mut worst_clip = 0.0f64;
    for x in 0..n {
        let row = &values[x * n..(x + 1) * n];
        let clipped: f64 = row.iter().map(|&p| p.min(0.0) * w).sum::<f64>().abs();
        if clipped > CLIP_TOLERANCE {
            return Err(Error::KernelQuality(format!(
                "transition row {x} clips negative mass {clipped:.3e} \
                 (tolerance {CLIP_TOLERANCE:.0e})"
            )));
        }
        worst_clip = worst_clip.max(clipped);
        let out = &mut cdf[x * n..(x + 1) * n];
        let mut cum = 0.0;
        for (o, &p) in out.iter_mut().zip(row) {
            cum += p.max(0.0) * w;
            *o = cum;
        }
        if cum <= 0.0 {
            return Err(Error::KernelQuality(format!(
                "transition row {x} has no positive mass"
            )));
        }
        // Dividing the running sums by the final sum pins the last entry to
        // exactly 1.
        for o in out.iter_mut() {
            *o /= cum;
        }
    }
    Ok((cdf, worst_clip))
}

/// Short content hash of the spectral data (grid plus eigenpairs); two
/// decompositions sharing it generate identical chains for equal seeds.
pub fn spectrum_fingerprint(dec: &SpectralDecomposition) -> String {
    let mut hasher = Sha256::new();
    for &(lo, hi) in dec.grid().domain().bounds() {
        hasher.update(lo.to_le_bytes());
        hasher.update(hi.to_le_bytes());
    }
    for &c in dec.grid().cells_per_dim() {
        hasher.update((c as u64).to_le_bytes());
    }
    for &v in dec.eigenvalues() {
        hasher.update(v.to_le_bytes());
    }
    for &v in dec.eigenvectors_flat() {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut s = String::with_capacity(16);
    for b in &digest[..8] {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl SpectralSampler {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest negative mass clipped from any row at build time.
    pub fn clip_mass(&self) -> f64 {
        self.clip_mass
    }

    /// Draws one observation chain of `transitions` steps.
    pub fn sample(&self, transitions: usize, seed: u64) -> Result<ObservationRecord> {
        if transitions == 0 {
            return Err(Error::Config("a chain needs at least one transition".into()));
        }
        let d = self.grid.dim();
        let n = self.grid.len();
        let mut rng = Stream::from_seed(seed);
        let mut positions = Vec::with_capacity((transitions + 1) * d);

        // Uniform start; its cell starts the chain.
        let mut point = vec![0.0; d];
        for (k, &(lo, hi)) in self.grid.domain().bounds().iter().enumerate() {
            point[k] = lo + rng.uniform() * (hi - lo);
        }
        positions.extend_from_slice(&point);
        let mut cell = self.grid.cell_of(&point).expect("start point is interior");

        for _ in 0..transitions {
            let u = rng.uniform();
            let row = &self.cdf[cell * n..(cell + 1) * n];
            let next = row.partition_point(|&c| c < u).min(n - 1);
            // Uniform jitter inside the sampled cell.
            let mi = self.grid.multi_index(next);
            for k in 0..d {
                let (lo, _) = self.grid.domain().bounds()[k];
                let h = self.grid.spacing()[k];
                point[k] = lo + (mi[k] as f64 + rng.uniform()) * h;
            }
            positions.extend_from_slice(&point);
            cell = next;
        }

        Ok(ObservationRecord {
            spacing: self.spacing,
            transitions,
            dim: d,
            positions,
            seed,
            mode: GenerationMode::ExactSpectral,
            field_fingerprint: self.fingerprint.clone(),
            clip_mass: self.clip_mass,
        })
    }
}

/// Draws one observation chain from a decomposition (builds the sampling
/// tables, then samples once; reuse [`build_sampler`] for replicates).
pub fn sample_observations(
    dec: &SpectralDecomposition,
    spacing: f64,
    transitions: usize,
    seed: u64,
) -> Result<ObservationRecord> {
    build_sampler(dec, spacing)?.sample(transitions, seed)
}

/// Folds a coordinate into `[lo, hi]` by repeated boundary reflection,
/// counting fold events.
fn fold_into(lo: f64, hi: f64, mut x: f64) -> (f64, u64) {
    let mut events = 0;
    while x < lo || x > hi {
        if x < lo {
            x = 2.0 * lo - x;
        } else {
            x = 2.0 * hi - x;
        }
        events += 1;
    }
    (x, events)
}

/// Streams a reflected Euler-Maruyama path: `x' = x + grad f(x) dt +
/// sqrt(2 f(x) dt) xi`, folded into the box. The visitor sees every state
/// after the initial one; returns the total fold count.
pub fn stream_path_euler(
    grid: &Grid,
    field: &DiffusivityField,
    x0: &[f64],
    dt: f64,
    steps: u64,
    seed: u64,
    mut visit: impl FnMut(u64, &[f64]),
) -> Result<u64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if field.len() != grid.len() {
        return Err(Error::Config(format!(
            "field has {} cells, grid has {}",
            field.len(),
            grid.len()
        )));
    }
    if !grid.domain().contains(x0) {
        return Err(Error::Data(format!("start point {x0:?} is outside the domain")));
    }
    let d = grid.dim();
    let diameter = grid.domain().diameter();
    let mut rng = Stream::from_seed(seed);
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; d];
    let mut reflections = 0u64;
    for step in 0..steps {
        let cell = self_cell(grid, &x)?;
        grid.gradient_at(field.values(), cell, &mut grad);
        let scale = (2.0 * field.values()[cell] * dt).sqrt();
        let mut norm2 = 0.0;
        let mut proposal = vec![0.0; d];
        for k in 0..d {
            let delta = grad[k] * dt + scale * rng.standard_normal();
            norm2 += delta * delta;
            proposal[k] = x[k] + delta;
        }
        if norm2.sqrt() > diameter {
            return Err(Error::Config(format!(
                "step {step}: displacement {:.3e} exceeds the domain diameter {diameter:.3e}; \
                 reduce dt",
                norm2.sqrt()
            )));
        }
        for (k, &(lo, hi)) in grid.domain().bounds().iter().enumerate() {
            let (folded, events) = fold_into(lo, hi, proposal[k]);
            x[k] = folded;
            reflections += events;
        }
        visit(step, &x);
    }
    Ok(reflections)
}

fn self_cell(grid: &Grid, x: &[f64]) -> Result<usize> {
    grid.cell_of(x)
}

/// Records a full reflected Euler path. Long runs should stream instead:
/// storage is refused beyond 2^21 steps.
pub fn sample_path_euler(
    grid: &Grid,
    field: &DiffusivityField,
    x0: &[f64],
    dt: f64,
    t_final: f64,
    seed: u64,
) -> Result<PathRecord> {
    if !(t_final > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {t_final}")));
    }
    let steps = (t_final / dt).round() as u64;
    if steps == 0 {
        return Err(Error::Config("horizon shorter than one step".into()));
    }
    if steps > (1 << 21) {
        return Err(Error::Config(format!(
            "{steps} steps is too long to store; stream the path instead"
        )));
    }
    let d = grid.dim();
    let mut positions = Vec::with_capacity(((steps + 1) as usize) * d);
    positions.extend_from_slice(x0);
    let reflections = stream_path_euler(grid, field, x0, dt, steps, seed, |_, x| {
        positions.extend_from_slice(x);
    })?;
    Ok(PathRecord { dt, dim: d, positions, seed, reflections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{eigendecompose, EigenStrategy};
    use crate::field::{BumpSpec, TruthSpec};
    use crate::geometry::{build_grid, Domain};
    use crate::stats::{chi_square_statistic, ks_two_sample_statistic, least_squares_slope};
    use crate::stencil::{assemble_generator, FaceAverage};

    /// Upper 0.99 quantile of chi-square with 31 degrees of freedom.
    const CHI2_99_DF31: f64 = 52.191;
    /// Two-sample Kolmogorov-Smirnov scale constant at significance 0.01.
    const KS_C_01: f64 = 1.628;

    fn flat_half_dec(n: usize) -> SpectralDecomposition {
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[n]).unwrap();
        let field = DiffusivityField::constant(&grid, 0.5).unwrap();
        let gen = assemble_generator(&grid, &field, FaceAverage::Arithmetic).unwrap();
        eigendecompose(&gen, None, EigenStrategy::Auto).unwrap()
    }

    fn bump_field(grid: &Grid) -> DiffusivityField {
        TruthSpec::Bump {
            bump: BumpSpec {
                amplitude: 1.0,
                center: vec![0.5],
                width: vec![0.3],
            },
        }
        .build(grid)
        .unwrap()
    }

    #[test]
    fn record_shape_matches_figure_regime() {
        // D = 0.05, N = 500: every point stays interior.
        let dec = flat_half_dec(64);
        let rec = sample_observations(&dec, 0.05, 500, 41).unwrap();
        assert_eq!(rec.len(), 501);
        assert_eq!(rec.dim, 1);
        assert_eq!(rec.mode, GenerationMode::ExactSpectral);
        assert_eq!(rec.field_fingerprint.len(), 16);
        for p in rec.iter_positions() {
            assert!(dec.grid().domain().contains(p));
        }
        assert!(rec.clip_mass >= 0.0 && rec.clip_mass <= CLIP_TOLERANCE);
    }

    #[test]
    fn chains_are_bitwise_deterministic() {
        let dec = flat_half_dec(48);
        let sampler = build_sampler(&dec, 0.05).unwrap();
        let a = sampler.sample(200, 7).unwrap();
        let b = sampler.sample(200, 7).unwrap();
        assert_eq!(a, b);
        let c = sampler.sample(200, 8).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn marginal_law_stays_uniform_along_the_chain() {
        // The cell chain is doubly stochastic, so X_i is uniform for every i.
        // Independent replicate chains make the chi-square calibration exact;
        // 3125 replicates x 32 observations spend the 1e5 budget.
        let dec = flat_half_dec(64);
        let sampler = build_sampler(&dec, 0.05).unwrap();
        let replicates = 3125usize;
        let bins = 32usize;
        let mut at_1 = vec![0u64; bins];
        let mut at_31 = vec![0u64; bins];
        for r in 0..replicates {
            let rec = sampler.sample(31, 1000 + r as u64).unwrap();
            for (i, counts) in [(1usize, &mut at_1), (31usize, &mut at_31)] {
                let x = rec.position(i)[0];
                let b = ((x * bins as f64) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        let expected = vec![replicates as f64 / bins as f64; bins];
        for counts in [&at_1, &at_31] {
            let stat = chi_square_statistic(counts, &expected);
            assert!(stat < CHI2_99_DF31, "chi-square {stat} at df 31");
        }
    }

    #[test]
    fn autocovariance_decays_at_the_spectral_gap_rate() {
        // For f = 1/2 the slowest mode is sqrt(2) cos(pi x) with rate
        // pi^2 / 2; the lag-k autocovariance of that functional decays as
        // e^{-k D pi^2 / 2}.
        let dec = flat_half_dec(64);
        let spacing = 0.05;
        let sampler = build_sampler(&dec, spacing).unwrap();
        let rec = sampler.sample(100_000, 90).unwrap();
        let series: Vec<f64> = rec
            .iter_positions()
            .map(|p| 2f64.sqrt() * (std::f64::consts::PI * p[0]).cos())
            .collect();
        let lags: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        let logs: Vec<f64> = (1..=8)
            .map(|k| crate::stats::autocovariance(&series, k).ln())
            .collect();
        let slope = least_squares_slope(&lags, &logs).unwrap();
        let rate = -slope / spacing;
        let expect = std::f64::consts::PI.powi(2) / 2.0;
        assert!(
            (rate - expect).abs() < 0.1 * expect,
            "fitted rate {rate} vs {expect}"
        );
    }

    #[test]
    fn clip_accounting_and_failure() {
        // A well-resolved kernel clips nothing measurable.
        let dec = flat_half_dec(64);
        let sampler = build_sampler(&dec, 0.05).unwrap();
        assert!(sampler.clip_mass() < 1e-12);

        // A crafted matrix with one badly negative row fails the build.
        let n = 4;
        let w = 0.25;
        let mut values = vec![1.0; n * n];
        values[0] = -0.5;
        let err = rows_to_cdf(&values, n, w).unwrap_err();
        assert!(matches!(err, Error::KernelQuality(_)));

        // Small negatives are clipped, reported, and the rows still sum to 1.
        let mut values = vec![1.0; n * n];
        values[1] = -1e-8;
        let (cdf, clip) = rows_to_cdf(&values, n, w).unwrap();
        assert!(clip > 0.0 && clip < CLIP_TOLERANCE);
        for x in 0..n {
            assert_eq!(cdf[x * n + n - 1], 1.0);
        }
    }

    #[test]
    fn exact_and_euler_lag_distributions_agree() {
        // Independent one-step draws from both samplers; the functional
        // cos(pi x) is compared by a two-sample KS test at significance 0.01.
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[64]).unwrap();
        let field = bump_field(&grid);
        let gen = assemble_generator(&grid, &field, FaceAverage::Arithmetic).unwrap();
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let spacing = 0.05;
        let sampler = build_sampler(&dec, spacing).unwrap();
        let m = 10_000usize;
        let mut exact = Vec::with_capacity(m);
        for r in 0..m {
            let rec = sampler.sample(1, 50_000 + r as u64).unwrap();
            exact.push((std::f64::consts::PI * rec.position(1)[0]).cos());
        }
        let dt = 1e-4;
        let steps = (spacing / dt).round() as u64;
        let mut euler = Vec::with_capacity(m);
        let mut start = Stream::from_seed(77);
        for r in 0..m {
            let x0 = [start.uniform()];
            let mut last = x0[0];
            stream_path_euler(&grid, &field, &x0, dt, steps, 200_000 + r as u64, |_, x| {
                last = x[0];
            })
            .unwrap();
            euler.push((std::f64::consts::PI * last).cos());
        }
        let stat = ks_two_sample_statistic(&exact, &euler);
        let threshold = KS_C_01 * (2.0 / m as f64).sqrt();
        assert!(stat < threshold, "KS {stat} vs threshold {threshold}");
    }

    #[test]
    fn constant_field_has_zero_drift() {
        // With f constant the drift vanishes, so increments replay the raw
        // normal draws exactly.
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[32]).unwrap();
        let c = 0.4;
        let field = DiffusivityField::constant(&grid, c).unwrap();
        let dt = 1e-5;
        let seed = 5;
        let mut states = Vec::new();
        stream_path_euler(&grid, &field, &[0.5], dt, 50, seed, |_, x| states.push(x[0]))
            .unwrap();
        let mut replay = Stream::from_seed(seed);
        let mut x = 0.5;
        for &s in &states {
            x += (2.0 * c * dt).sqrt() * replay.standard_normal();
            assert_eq!(s, x, "drift contaminated a constant-field step");
        }
    }

    #[test]
    fn fold_reflection_matches_the_definition() {
        assert_eq!(fold_into(0.0, 1.0, 1.05), (0.95, 1));
        assert_eq!(fold_into(0.0, 1.0, -0.03), (0.03, 1));
        let (x, events) = fold_into(0.0, 1.0, 2.3);
        assert!((x - 0.3).abs() < 1e-15);
        assert_eq!(events, 2);
        assert_eq!(fold_into(0.0, 1.0, 0.4), (0.4, 0));
    }

    #[test]
    fn long_run_occupation_is_uniform_per_octant() {
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[64]).unwrap();
        let field = DiffusivityField::constant(&grid, 0.5).unwrap();
        let dt = 1e-3;
        let steps = 10_000_000u64;
        let mut counts = [0u64; 8];
        stream_path_euler(&grid, &field, &[0.5], dt, steps, 303, |_, x| {
            let b = ((x[0] * 8.0) as usize).min(7);
            counts[b] += 1;
        })
        .unwrap();
        for (b, &c) in counts.iter().enumerate() {
            let frac = c as f64 / steps as f64;
            assert!(
                (frac - 0.125).abs() < 0.03 * 0.125,
                "octant {b}: fraction {frac}"
            );
        }
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[32]).unwrap();
        let field = DiffusivityField::constant(&grid, 0.5).unwrap();
        let err =
            stream_path_euler(&grid, &field, &[0.5], 1e6, 10, 11, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn paths_stay_inside_and_count_reflections() {
        let grid = build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[32]).unwrap();
        let field = bump_field(&grid);
        let path = sample_path_euler(&grid, &field, &[0.9], 1e-3, 5.0, 21).unwrap();
        assert_eq!(path.len(), 5001);
        for i in 0..path.len() {
            let p = path.position(i);
            assert!(grid.domain().contains(p), "escaped at step {i}");
        }
        assert!(path.reflections > 0, "a 5-time-unit path should touch the boundary");
    }
}
