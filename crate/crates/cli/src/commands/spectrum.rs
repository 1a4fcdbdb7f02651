//! `spectrum`: decompose the truth generator and record its spectrum.

use serde::Serialize;

use refdiff_core::cache::cache_key;
use refdiff_core::eigen::InvariantReport;
use refdiff_core::error::Result;
use refdiff_core::stencil::FaceAverage;

use crate::io::{cell, CsvTable};

use super::Context;

/// Summary of one decomposition. Cache-hit status is deliberately absent:
/// artifacts must not depend on whether the cache was warm.
#[derive(Serialize)]
struct SpectrumSummary<'a> {
    cells: usize,
    modes: usize,
    cache_key: &'a str,
    invariants: &'a InvariantReport,
}

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let solver = ctx.config.solver();
    let truth = ctx.truth_field()?;
    let dec = ctx.decompose(&truth, solver.modes, solver.strategy.to_core())?;

    let mut table = CsvTable::new(&["index", "eigenvalue"])?;
    for (j, &lambda) in dec.eigenvalues().iter().enumerate() {
        table.row(&[format!("{j}"), cell(lambda)])?;
    }
    ctx.out.write_bytes("eigenvalues.csv", &table.into_bytes()?)?;

    let key = cache_key(&ctx.grid, &truth, FaceAverage::Arithmetic, dec.modes());
    ctx.out.write_json(
        "spectrum.json",
        &SpectrumSummary {
            cells: ctx.grid.len(),
            modes: dec.modes(),
            cache_key: key.as_str(),
            invariants: dec.report(),
        },
    )?;
    Ok(())
}
