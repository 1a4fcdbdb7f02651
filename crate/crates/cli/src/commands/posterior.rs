//! `posterior`: run a pCN chain against sampled observations and dump the
//! trace, the thinned coefficient draws, and the posterior-mean field.

use serde::Serialize;

use refdiff_core::bayes::{
    default_series_truncation, run_chain, ChainConfig, LikelihoodConfig, PreparedTarget, PriorSpec,
};
use refdiff_core::error::Result;
use refdiff_core::simulate::build_sampler;

use crate::config::CommandKind;
use crate::io::{cell, CsvTable};

use super::Context;

#[derive(Serialize)]
struct SamplesSidecar {
    rows: usize,
    coefficient_len: usize,
    /// Row-major little-endian f64: one thinned draw per row.
    layout: &'static str,
}

#[derive(Serialize)]
struct PosteriorSummary {
    transitions: usize,
    spacing: f64,
    truncation: usize,
    /// Data-size rescaling applied to the prior coefficients.
    scale: f64,
    acceptance_rate: f64,
    final_beta: f64,
    failed_evaluations: u64,
    kept_samples: usize,
}

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let obs = ctx.config.observation(CommandKind::Posterior)?.clone();
    let prior = ctx.config.prior()?.clone();
    let solver = ctx.config.solver();
    let strategy = solver.strategy.to_core();

    let truth = ctx.truth_field()?;
    let truth_dec = ctx.decompose(&truth, solver.modes, strategy)?;
    let record = build_sampler(&truth_dec, obs.spacing)?.sample(obs.transitions, obs.seed)?;

    let truncation = prior.truncation.unwrap_or_else(|| {
        default_series_truncation(obs.transitions, prior.smoothness, ctx.grid.dim())
    });
    let reference_modes = prior.reference_modes.unwrap_or(truncation + 1);
    let reference_field = ctx.coefficient_or_unit(&prior.reference)?;
    let reference = ctx.decompose(&reference_field, Some(reference_modes), strategy)?;
    let cutoff = prior.cutoff.build(&ctx.grid)?;
    let spec = PriorSpec::new(prior.smoothness, truncation, obs.transitions, cutoff, reference)?;

    let target = PreparedTarget::from_record(&record, &ctx.grid)?;
    let chain_cfg = ChainConfig {
        iterations: prior.iterations,
        burn_in: prior.burn_in,
        beta: prior.beta,
        thin: prior.thin,
        seed: prior.seed,
        solver: LikelihoodConfig::default(),
    };
    let output = run_chain(&target, &spec, &chain_cfg)?;

    let mut trace = CsvTable::new(&["iteration", "log_likelihood", "accepted", "beta"])?;
    for row in &output.trace {
        trace.row(&[
            format!("{}", row.iteration),
            cell(row.log_likelihood),
            format!("{}", row.accepted),
            cell(row.beta),
        ])?;
    }
    ctx.out.write_bytes("trace.csv", &trace.into_bytes()?)?;

    let mut bin = Vec::with_capacity(output.samples.len() * spec.coefficient_len() * 8);
    for draw in &output.samples {
        for &v in &draw.values {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    ctx.out.write_bytes("samples.bin", &bin)?;
    ctx.out.write_json(
        "samples.json",
        &SamplesSidecar {
            rows: output.samples.len(),
            coefficient_len: spec.coefficient_len(),
            layout: "row-major little-endian f64",
        },
    )?;

    let d = ctx.grid.dim();
    let mut header = vec!["index".to_string()];
    for k in 1..=d {
        header.push(format!("x_{k}"));
    }
    header.push("truth".to_string());
    header.push("theta_mean".to_string());
    header.push("posterior_mean".to_string());
    let mut table = CsvTable::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for i in 0..ctx.grid.len() {
        let mut row = vec![format!("{i}")];
        for &x in &ctx.grid.center(i) {
            row.push(cell(x));
        }
        row.push(cell(truth.values()[i]));
        row.push(cell(output.mean_theta_field[i]));
        row.push(cell(output.mean_diffusivity.values()[i]));
        table.row(&row)?;
    }
    ctx.out.write_bytes("posterior_mean.csv", &table.into_bytes()?)?;

    ctx.out.write_json(
        "posterior.json",
        &PosteriorSummary {
            transitions: obs.transitions,
            spacing: obs.spacing,
            truncation,
            scale: spec.scale(),
            acceptance_rate: output.acceptance_rate,
            final_beta: output.final_beta,
            failed_evaluations: output.failed_evaluations,
            kept_samples: output.samples.len(),
        },
    )?;
    Ok(())
}
