//! `metrics`: build a perturbation family around a base coefficient and
//! tabulate its stability ratios.

use refdiff_core::error::Result;
use refdiff_core::metrics::{perturbation_family, stability_ratios};

use crate::config::CommandKind;
use crate::io::{cell, CsvTable};

use super::Context;

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let cfg = ctx.config.metrics()?.clone();
    let spacing = ctx.config.observation(CommandKind::Metrics)?.spacing;

    let base = ctx.coefficient_or_truth(&cfg.base)?;
    let cutoff = cfg.cutoff.build(&ctx.grid)?;
    let shape = cfg.shape.theta(&ctx.grid)?;
    let family = perturbation_family(&ctx.grid, &base, &cutoff, &shape, &cfg.epsilons)?;
    let report = stability_ratios(&ctx.grid, &family, &base, spacing, cfg.probe_time, cfg.gamma)?;

    let mut table = CsvTable::new(&[
        "epsilon",
        "f_distance",
        "graded_operator_distance",
        "operator_distance",
        "hs_at_probe",
        "forward_ratio",
        "backward_ratio",
        "log_ratio",
    ])?;
    for row in &report.rows {
        table.row(&[
            cell(row.epsilon),
            cell(row.f_distance),
            cell(row.graded_operator_distance),
            cell(row.operator_distance),
            cell(row.hs_at_probe),
            cell(row.forward_ratio),
            cell(row.backward_ratio),
            // Absent when the operator distance is not below one; the cell
            // stays empty rather than inventing a number.
            row.log_ratio.map(cell).unwrap_or_default(),
        ])?;
    }
    ctx.out.write_bytes("stability.csv", &table.into_bytes()?)?;
    ctx.out.write_json("stability.json", &report)?;
    Ok(())
}
