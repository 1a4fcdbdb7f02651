//! `rates`: replicate the projection estimator over a ladder of sample
//! sizes and fit the error-decay slope.

use refdiff_core::error::Result;
use refdiff_core::estimate::{rate_experiment, RateExperimentConfig};

use crate::config::CommandKind;
use crate::io::{cell, CsvTable};

use super::Context;

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let cfg = ctx.config.rates()?.clone();
    let spacing = ctx.config.observation(CommandKind::Rates)?.spacing;
    let solver = ctx.config.solver();
    let strategy = solver.strategy.to_core();

    let truth = ctx.truth_field()?;
    let truth_dec = ctx.decompose(&truth, solver.modes, strategy)?;
    let reference_field = ctx.coefficient_or_unit(&cfg.reference)?;
    let reference = ctx.decompose(&reference_field, solver.modes, strategy)?;

    let experiment = RateExperimentConfig {
        n_values: cfg.n_values,
        replicates: cfg.replicates,
        smoothness: cfg.smoothness,
        constant: cfg.constant,
        alpha: cfg.alpha,
        spacing,
        seed: cfg.seed,
        fixed_basis_size: cfg.fixed_basis_size,
    };
    let report = rate_experiment(&experiment, &truth_dec, &reference)?;

    let mut table = CsvTable::new(&[
        "transitions",
        "basis_size",
        "mean_error",
        "std_error",
        "replicates",
    ])?;
    for row in &report.rows {
        table.row(&[
            format!("{}", row.transitions),
            format!("{}", row.basis_size),
            cell(row.mean_error),
            cell(row.std_error),
            format!("{}", row.errors.len()),
        ])?;
    }
    ctx.out.write_bytes("rates.csv", &table.into_bytes()?)?;
    ctx.out.write_json("rates.json", &report)?;
    Ok(())
}
