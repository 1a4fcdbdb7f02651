//! `simulate`: sample a low-frequency observation record from the truth.

use serde::Serialize;

use refdiff_core::error::Result;
use refdiff_core::simulate::{build_sampler, sample_path_euler, GenerationMode};

use crate::config::CommandKind;
use crate::io::{cell, CsvTable};

use super::Context;

/// Sidecar describing how the observation table was generated; everything
/// but the positions themselves.
#[derive(Serialize)]
struct ObservationSidecar<'a> {
    spacing: f64,
    transitions: usize,
    dim: usize,
    seed: u64,
    mode: GenerationMode,
    field_fingerprint: &'a str,
    clip_mass: f64,
}

#[derive(Serialize)]
struct PathSidecar {
    dt: f64,
    steps: usize,
    dim: usize,
    seed: u64,
    reflections: u64,
}

/// Builds the position table header `index, t, x_1..x_d`.
fn position_header(label: &'static str, dim: usize) -> Vec<String> {
    let mut header = vec![label.to_string(), "t".to_string()];
    for k in 1..=dim {
        header.push(format!("x_{k}"));
    }
    header
}

pub fn run(ctx: &mut Context<'_>) -> Result<()> {
    let obs = ctx.config.observation(CommandKind::Simulate)?.clone();
    let solver = ctx.config.solver();
    let truth = ctx.truth_field()?;
    let dec = ctx.decompose(&truth, solver.modes, solver.strategy.to_core())?;
    let sampler = build_sampler(&dec, obs.spacing)?;
    let record = sampler.sample(obs.transitions, obs.seed)?;

    let d = ctx.grid.dim();
    let header = position_header("index", d);
    let mut table = CsvTable::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for i in 0..record.len() {
        let mut row = vec![format!("{i}"), cell(i as f64 * record.spacing)];
        for &x in record.position(i) {
            row.push(cell(x));
        }
        table.row(&row)?;
    }
    ctx.out.write_bytes("observations.csv", &table.into_bytes()?)?;
    ctx.out.write_json(
        "observations.json",
        &ObservationSidecar {
            spacing: record.spacing,
            transitions: record.transitions,
            dim: record.dim,
            seed: record.seed,
            mode: record.mode,
            field_fingerprint: &record.field_fingerprint,
            clip_mass: record.clip_mass,
        },
    )?;

    if let Some(pc) = &obs.path {
        let start = match &pc.start {
            Some(x) => x.clone(),
            None => ctx
                .grid
                .domain()
                .bounds()
                .iter()
                .map(|&(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        };
        let path = sample_path_euler(&ctx.grid, &truth, &start, pc.dt, pc.horizon, pc.seed)?;
        let header = position_header("step", d);
        let mut table = CsvTable::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
        for i in 0..path.len() {
            let mut row = vec![format!("{i}"), cell(i as f64 * path.dt)];
            for &x in path.position(i) {
                row.push(cell(x));
            }
            table.row(&row)?;
        }
        ctx.out.write_bytes("path.csv", &table.into_bytes()?)?;
        ctx.out.write_json(
            "path.json",
            &PathSidecar {
                dt: path.dt,
                steps: path.len() - 1,
                dim: path.dim,
                seed: path.seed,
                reflections: path.reflections,
            },
        )?;
    }
    Ok(())
}
