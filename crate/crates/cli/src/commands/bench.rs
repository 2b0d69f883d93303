use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::Parser;
use projsynth::projector::{back_project_multi, forward_project};
use projsynth::synthesis::Pipeline;
use serde::Serialize;

use crate::config::{prepare, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Run config JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of timed repetitions.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Also write the timing report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct StageTiming {
    stage: &'static str,
    mean_s: f64,
    min_s: f64,
}

#[derive(Serialize)]
struct Report {
    schema: u32,
    reps: usize,
    stages: Vec<StageTiming>,
}

const STAGES: [&str; 6] = ["encode", "lift", "refine", "reproject", "generate", "total"];

pub fn run(args: &Args) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let (cfg, base) = RunConfig::load(&args.config)?;
    let run = prepare(&cfg, &base)?;
    let pipeline = Pipeline {
        encoder: run.encoder.as_ref(),
        refiner: run.refiner.as_ref(),
        generator: run.generator.as_ref(),
        geometry: &run.geometry,
        grid: run.grid,
        step: run.step,
    };

    let mut samples = vec![Vec::with_capacity(args.reps); STAGES.len()];
    for _ in 0..args.reps {
        let total_start = Instant::now();

        let start = Instant::now();
        let (features, texture) = pipeline.encode_sources(&run.sources)?;
        samples[0].push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let lifted = back_project_multi(&features, &run.geometry, &run.grid, run.step)?;
        samples[1].push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let refined = run.refiner.refine(&lifted)?;
        samples[2].push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let mut views = Vec::new();
        for p in &run.sources {
            views.push(forward_project(
                &refined,
                &run.geometry,
                p.angle_deg,
                run.step,
            )?);
        }
        for &angle in &cfg.target_angles {
            views.push(forward_project(&refined, &run.geometry, angle, run.step)?);
        }
        samples[3].push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        for view in &views {
            run.generator.generate(view, &texture)?;
        }
        samples[4].push(start.elapsed().as_secs_f64());

        samples[5].push(total_start.elapsed().as_secs_f64());
    }

    let stages = STAGES
        .iter()
        .zip(&samples)
        .map(|(&stage, times)| StageTiming {
            stage,
            mean_s: times.iter().sum::<f64>() / times.len() as f64,
            min_s: times.iter().cloned().fold(f64::INFINITY, f64::min),
        })
        .collect();
    let report = Report {
        schema: 1,
        reps: args.reps,
        stages,
    };
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(())
}
