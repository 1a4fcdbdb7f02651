//! `estimate`: project transition data onto a reference basis and report
//! the distance to the true compression.

use serde::Serialize;

use refdiff_core::error::Result;
use refdiff_core::estimate::{estimator_error, projection_estimator, schedule_basis_size};
use refdiff_core::simulate::build_sampler;

use crate::config::CommandKind;
use crate::io::{cell, CsvTable};

use super::Context;

#[derive(Serialize)]
struct EstimateSummary {
    basis_size: usize,
    alpha: f64,
    spacing: f64,
    transitions: usize,
    /// Graded operator-norm distance to the true compression, truncation
    /// tail included.
    error: f64,
}

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let obs = ctx.config.observation(CommandKind::Estimate)?.clone();
    let est = ctx.config.estimator()?.clone();
    let solver = ctx.config.solver();
    let strategy = solver.strategy.to_core();

    let truth = ctx.truth_field()?;
    let truth_dec = ctx.decompose(&truth, solver.modes, strategy)?;
    let reference_field = ctx.coefficient_or_unit(&est.reference)?;
    let reference = ctx.decompose(&reference_field, solver.modes, strategy)?;

    let record = build_sampler(&truth_dec, obs.spacing)?.sample(obs.transitions, obs.seed)?;
    // A fixed basis size passes through unclamped so an out-of-range request
    // fails validation instead of being silently shrunk.
    let basis_size = est.basis_size.unwrap_or_else(|| {
        schedule_basis_size(
            obs.transitions,
            ctx.grid.dim(),
            est.smoothness,
            est.constant,
            reference.modes(),
        )
    });
    let estimate = projection_estimator(&record, basis_size, &reference)?;
    let error = estimator_error(&estimate, &truth_dec, &reference, est.alpha)?;

    let mut table = CsvTable::new(&["j", "jp", "value"])?;
    for j in 0..estimate.basis_size {
        for jp in 0..estimate.basis_size {
            table.row(&[format!("{j}"), format!("{jp}"), cell(estimate.entry(j, jp))])?;
        }
    }
    ctx.out.write_bytes("estimate_matrix.csv", &table.into_bytes()?)?;
    ctx.out.write_json(
        "estimate.json",
        &EstimateSummary {
            basis_size: estimate.basis_size,
            alpha: est.alpha,
            spacing: estimate.spacing,
            transitions: estimate.transitions,
            error,
        },
    )?;
    Ok(())
}
