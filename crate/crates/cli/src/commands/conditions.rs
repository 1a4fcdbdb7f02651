//! `conditions`: certify the gradient condition for the first eigenblock
//! and optionally probe the transport operator under the certified mode.

use refdiff_core::conditions::{check_sunnyside, first_eigenblock, transport_lower_bound, BlockWeights};
use refdiff_core::error::Result;
use refdiff_core::geometry::Domain;

use super::Context;

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let cfg = ctx.config.conditions()?.clone();
    let solver = ctx.config.solver();
    let field = ctx.coefficient_or_truth(&cfg.coefficient)?;
    let dec = ctx.decompose(&field, Some(cfg.modes), solver.strategy.to_core())?;

    let region = Domain::new(cfg.region.clone())?;
    let mu = cfg.mu.to_core();
    let block = match &cfg.weights {
        Some(w) => first_eigenblock(&dec, BlockWeights::Explicit(w))?,
        None => first_eigenblock(&dec, BlockWeights::Scan { region: &region, mu })?,
    };
    let report = check_sunnyside(&block, &region, mu)?;
    ctx.out.write_json("conditions.json", &report)?;

    if let Some(tc) = &cfg.transport {
        let cutoff = tc.cutoff.build(&ctx.grid)?;
        let bound = transport_lower_bound(&dec, block.field(), &cutoff, tc.trials, tc.seed)?;
        ctx.out.write_json("transport.json", &bound)?;
    }
    Ok(())
}
