//! Transition operator and heat kernel of the reflected diffusion, as mode
//! sums over a spectral decomposition: `P_t phi = sum_j e^{-t lambda_j}
//! <e_j, phi>_h e_j` and `p_t(x, y) = sum_j e^{-t lambda_j} e_j(x) e_j(y)`.
//!
//! The kernel matrix is assembled symmetrically, entry by entry, so
//! `p_t(x, y) == p_t(y, x)` holds bitwise; mass conservation holds to
//! round-off because the constant mode is pinned exactly in the
//! decomposition.

use crate::eigen::SpectralDecomposition;
use crate::error::{Error, Result};

/// Tail weight above which a truncated kernel is considered degraded.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Applies the transition operator at time `t` to a grid field.
pub fn transition_apply(dec: &SpectralDecomposition, t: f64, phi: &[f64]) -> Result<Vec<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!(
            "transition time must be positive and finite, got {t}"
        )));
    }
    let n = dec.grid().len();
    if phi.len() != n {
        return Err(Error::Config(format!(
            "field has {} cells, grid has {n}",
            phi.len()
        )));
    }
    let coeffs = dec.project(phi);
    let damped: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| (-t * dec.eigenvalue(j)).exp() * c)
        .collect();
    Ok(dec.reconstruct(&damped))
}

/// Dense symmetric heat-kernel matrix at one observation spacing, with its
/// quality diagnostics.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    t: f64,
    n: usize,
    cell_volume: f64,
    /// Row-major `n x n`, bitwise symmetric.
    values: Vec<f64>,
    min_entry: f64,
    /// max over rows of |cell_volume * row sum - 1|.
    mass_defect: f64,
    /// Spectral weight dropped by truncation: `e^{-t lambda_{J-1}}` scaled by
    /// a Weyl-growth tail estimate; exactly 0 for a complete basis.
    tail_bound: f64,
}

/// Assembles the heat kernel at time `t`. With `strict` set, a truncation
/// tail above [`TAIL_TOLERANCE`] is an error; otherwise it is recorded on the
/// returned kernel for the caller to inspect.
pub fn heat_kernel(dec: &SpectralDecomposition, t: f64, strict: bool) -> Result<HeatKernel> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!(
            "kernel time must be positive and finite, got {t}"
        )));
    }
    let n = dec.grid().len();
    let j = dec.modes();
    let tail_bound = truncation_tail(dec, t);
    if strict && tail_bound > TAIL_TOLERANCE {
        return Err(Error::KernelQuality(format!(
            "truncated spectral tail {tail_bound:.3e} exceeds {TAIL_TOLERANCE:.0e} \
             with {j} of {n} modes at t = {t}"
        )));
    }

    let weights: Vec<f64> = (0..j).map(|k| (-t * dec.eigenvalue(k)).exp()).collect();
    let mut values = vec![0.0; n * n];
    for x in 0..n {
        for y in x..n {
            let mut s = 0.0;
            for k in 0..j {
                let row = dec.eigenvector(k);
                s += weights[k] * row[x] * row[y];
            }
            values[x * n + y] = s;
            values[y * n + x] = s;
        }
    }

    let min_entry = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = dec.grid().cell_volume();
    let mut mass_defect = 0.0f64;
    for x in 0..n {
        let mass: f64 = values[x * n..(x + 1) * n].iter().sum::<f64>() * w;
        mass_defect = mass_defect.max((mass - 1.0).abs());
    }
    Ok(HeatKernel {
        t,
        n,
        cell_volume: w,
        values,
        min_entry,
        mass_defect,
        tail_bound,
    })
}

/// Estimates the spectral weight beyond the retained modes by extrapolating
/// the eigenvalue growth `lambda_k ~ c k^{2/d}` from the last computed mode,
/// scaled by the largest observed eigenvector sup-norm squared.
fn truncation_tail(dec: &SpectralDecomposition, t: f64) -> f64 {
    let n = dec.grid().len();
    let j = dec.modes();
    if j >= n || j < 2 {
        return 0.0;
    }
    let d = dec.grid().dim() as f64;
    let c = dec.eigenvalue(j - 1) / ((j - 1) as f64).powf(2.0 / d);
    let mut weight = 0.0;
    for k in j..(j + 1_000_000) {
        let term = (-t * c * (k as f64).powf(2.0 / d)).exp();
        weight += term;
        if term < 1e-300 {
            break;
        }
    }
    let mut sup2 = 0.0f64;
    for k in 0..j {
        let s = dec
            .eigenvector(k)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        sup2 = sup2.max(s * s);
    }
    weight * sup2
}

impl HeatKernel {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Row-major `n x n` kernel values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n + y]
    }

    pub fn min_entry(&self) -> f64 {
        self.min_entry
    }

    pub fn mass_defect(&self) -> f64 {
        self.mass_defect
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Whether the truncation tail is inside [`TAIL_TOLERANCE`].
    pub fn tail_ok(&self) -> bool {
        self.tail_bound <= TAIL_TOLERANCE
    }

    /// Joint density of one observation pair under the uniform start:
    /// `(1/V) p_t(x, y)` evaluated cellwise.
    pub fn pair_density(&self, volume: f64, x: usize, y: usize) -> f64 {
        self.value(x, y) / volume
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{eigendecompose, EigenStrategy};
    use crate::field::{link, DiffusivityField};
    use crate::geometry::{build_grid, Domain, Grid};
    use crate::rng::Stream;
    use crate::stencil::{assemble_generator, FaceAverage, GeneratorMatrix};

    fn interval_grid(n: usize) -> Grid {
        build_grid(&Domain::interval(0.0, 1.0).unwrap(), &[n]).unwrap()
    }

    fn random_admissible_gen(grid: &Grid, seed: u64) -> GeneratorMatrix {
        let mut rng = Stream::from_seed(seed);
        // Smooth random theta: a few low-frequency cosines keep the field
        // admissible and nontrivial.
        let theta: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.center(i)[0];
                (1..=3)
                    .map(|k| {
                        0.6 * (rng.uniform() - 0.5)
                            * (k as f64 * std::f64::consts::PI * x).cos()
                    })
                    .sum()
            })
            .collect();
        let field = link(&theta).unwrap();
        assemble_generator(grid, &field, FaceAverage::Arithmetic).unwrap()
    }

    #[test]
    fn constants_are_invariant() {
        let grid = interval_grid(48);
        let gen = random_admissible_gen(&grid, 1);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let ones = vec![1.0; grid.len()];
        let out = transition_apply(&dec, 0.3, &ones).unwrap();
        for v in out {
            assert!((v - 1.0).abs() < 1e-13, "constant drifted to {v}");
        }
    }

    #[test]
    fn eigenfunction_is_damped_by_its_rate() {
        let grid = interval_grid(48);
        let gen = random_admissible_gen(&grid, 2);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let t = 0.2;
        let out = transition_apply(&dec, t, dec.eigenvector(1)).unwrap();
        let damp = (-t * dec.eigenvalue(1)).exp();
        for (o, e) in out.iter().zip(dec.eigenvector(1)) {
            assert!((o - damp * e).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_composition() {
        let grid = interval_grid(40);
        let gen = random_admissible_gen(&grid, 3);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let mut rng = Stream::from_seed(9);
        let phi: Vec<f64> = (0..grid.len()).map(|_| rng.standard_normal()).collect();
        let (s, t) = (0.07, 0.15);
        let two_step = transition_apply(&dec, s, &transition_apply(&dec, t, &phi).unwrap()).unwrap();
        let one_step = transition_apply(&dec, s + t, &phi).unwrap();
        for (a, b) in two_step.iter().zip(&one_step) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn mean_zero_fields_contract_at_twice_the_gap() {
        let grid = interval_grid(64);
        let gen = random_admissible_gen(&grid, 4);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let mut rng = Stream::from_seed(10);
        let mut phi: Vec<f64> = (0..grid.len()).map(|_| rng.standard_normal()).collect();
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        for v in phi.iter_mut() {
            *v -= mean;
        }
        let t = 0.1;
        let out = transition_apply(&dec, t, &phi).unwrap();
        let before = grid.inner(&phi, &phi);
        let after = grid.inner(&out, &out);
        let bound = (-2.0 * t * dec.eigenvalue(1)).exp() * before;
        assert!(after <= bound * (1.0 + 1e-12), "{after} vs bound {bound}");
    }

    #[test]
    fn rejects_nonpositive_times() {
        let grid = interval_grid(16);
        let gen = random_admissible_gen(&grid, 5);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let phi = vec![0.0; grid.len()];
        assert!(matches!(transition_apply(&dec, 0.0, &phi), Err(Error::Config(_))));
        assert!(matches!(heat_kernel(&dec, -1.0, false), Err(Error::Config(_))));
    }

    #[test]
    fn kernel_is_bitwise_symmetric_with_unit_mass() {
        let grid = interval_grid(64);
        let gen = random_admissible_gen(&grid, 6);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let k = heat_kernel(&dec, 0.05, true).unwrap();
        let n = grid.len();
        for x in 0..n {
            for y in 0..n {
                assert_eq!(k.value(x, y), k.value(y, x));
            }
        }
        assert!(k.mass_defect() < 1e-12, "mass defect {}", k.mass_defect());
        assert_eq!(k.tail_bound(), 0.0);
    }

    #[test]
    fn kernel_is_positive_for_random_admissible_fields() {
        let grid = interval_grid(64);
        for seed in 20..25 {
            let gen = random_admissible_gen(&grid, seed);
            let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
            let k = heat_kernel(&dec, 0.05, true).unwrap();
            assert!(k.min_entry() > 0.0, "seed {seed}: min entry {}", k.min_entry());
        }
    }

    #[test]
    fn flat_half_field_matches_spectral_weight() {
        // f = 1/2 on the unit interval: the slowest rate is pi^2/2 up to
        // O(h^2), so the diagonal spectral weight at spacing 0.05 is
        // e^{-0.05 pi^2 / 2} = 0.7814 to four digits.
        let grid = interval_grid(64);
        let field = DiffusivityField::constant(&grid, 0.5).unwrap();
        let gen = assemble_generator(&grid, &field, FaceAverage::Arithmetic).unwrap();
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let weight = (-0.05 * dec.eigenvalue(1)).exp();
        assert!((weight - 0.7814).abs() < 5e-4, "weight = {weight}");
    }

    #[test]
    fn long_time_kernel_is_uniform() {
        let grid = interval_grid(32);
        let gen = random_admissible_gen(&grid, 7);
        let dec = eigendecompose(&gen, None, EigenStrategy::Auto).unwrap();
        let k = heat_kernel(&dec, 1000.0, true).unwrap();
        let uniform = 1.0 / grid.domain().volume();
        for v in k.values() {
            assert!((v - uniform).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_tail_is_flagged_and_strict_mode_errors() {
        let grid = interval_grid(64);
        let gen = random_admissible_gen(&grid, 8);
        let dec = eigendecompose(&gen, Some(6), EigenStrategy::Auto).unwrap();
        // Six modes at a short spacing leave a visible tail.
        let t = 0.01;
        let lenient = heat_kernel(&dec, t, false).unwrap();
        assert!(!lenient.tail_ok(), "tail {}", lenient.tail_bound());
        assert!(matches!(heat_kernel(&dec, t, true), Err(Error::KernelQuality(_))));
    }
}
