use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use projsynth::losses::{cycle_loss, reconstruction_loss};
use projsynth::synthesis::Pipeline;
use projsynth::{GridSpec, LossWeights, MetricReport, Projection};
use serde::Serialize;

use crate::config::{prepare, RunConfig, RUN_SCHEMA};
use crate::util::angle_tag;

#[derive(Parser)]
pub struct Args {
    /// Run config JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Also write 16-bit PGM previews (in addition to the config's setting).
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Serialize)]
struct SourceEntry {
    angle: f64,
    input: String,
    cycle: String,
}

#[derive(Serialize)]
struct TargetEntry {
    angle: f64,
    output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricReport>,
}

#[derive(Serialize)]
struct LossSummary {
    /// Mean over sources of the cycle loss between each regenerated view's
    /// re-encoding and the original encoding.
    cycle: f64,
    /// Mean reconstruction loss over targets with references, when any.
    #[serde(skip_serializing_if = "Option::is_none")]
    reconstruction: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    schema: u32,
    encoder: String,
    refiner: String,
    generator: String,
    step_mm: f64,
    normalize: String,
    grid: GridSpec,
    weights: LossWeights,
    texture_code: Vec<f64>,
    sources: Vec<SourceEntry>,
    targets: Vec<TargetEntry>,
    losses: LossSummary,
}

fn save_view(p: &Projection, dir: &Path, stem: &str, pgm: bool) -> Result<String> {
    let name = format!("{stem}.json");
    let path = dir.join(&name);
    p.save(&path)?;
    if pgm {
        p.write_pgm(&path.with_extension("pgm"))?;
    }
    Ok(name)
}

pub fn run(args: &Args) -> Result<()> {
    let (cfg, base) = RunConfig::load(&args.config)?;
    let run = prepare(&cfg, &base)?;
    let pgm = args.pgm || cfg.pgm;

    let pipeline = Pipeline {
        encoder: run.encoder.as_ref(),
        refiner: run.refiner.as_ref(),
        generator: run.generator.as_ref(),
        geometry: &run.geometry,
        grid: run.grid,
        step: run.step,
    };
    let result = pipeline.synthesize(&run.sources, &cfg.target_angles)?;

    let out_dir = crate::util::resolve(&base, &cfg.output_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut sources = Vec::new();
    let mut cycle_sum = 0.0;
    for (src, cyc) in run.sources.iter().zip(&result.source_views) {
        let tag = angle_tag(src.angle_deg);
        let input = save_view(src, &out_dir, &format!("src_{tag}"), pgm)?;
        let cycle = save_view(cyc, &out_dir, &format!("cyc_{tag}"), pgm)?;
        let (ref_geo, ref_tex) = run.encoder.encode(src)?;
        let (cyc_geo, cyc_tex) = run.encoder.encode(cyc)?;
        cycle_sum += cycle_loss(&cyc_geo, &ref_geo, &cyc_tex, &ref_tex)?;
        sources.push(SourceEntry {
            angle: src.angle_deg,
            input,
            cycle,
        });
    }
    let cycle = cycle_sum / run.sources.len() as f64;

    let mut targets = Vec::new();
    let mut rec_sum = 0.0;
    let mut rec_count = 0usize;
    for (&angle, view) in cfg.target_angles.iter().zip(&result.target_views) {
        let tag = angle_tag(angle);
        let output = save_view(view, &out_dir, &format!("tgt_{tag}"), pgm)?;
        let reference = run.truth.iter().find(|(a, _)| angle_tag(*a) == tag);
        let (truth, metrics) = match reference {
            Some((_, truth_view)) => {
                let name = save_view(truth_view, &out_dir, &format!("truth_{tag}"), pgm)?;
                let report = MetricReport::compute(view, truth_view)?;
                rec_sum += reconstruction_loss(view, truth_view)?;
                rec_count += 1;
                (Some(name), Some(report))
            }
            None => (None, None),
        };
        targets.push(TargetEntry {
            angle,
            output,
            truth,
            metrics,
        });
    }
    let reconstruction = (rec_count > 0).then(|| rec_sum / rec_count as f64);

    let summary = Summary {
        schema: RUN_SCHEMA,
        encoder: run.encoder.key(),
        refiner: run.refiner.key(),
        generator: run.generator.key(),
        step_mm: run.step,
        normalize: cfg.normalize.clone(),
        grid: run.grid,
        weights: cfg.weights,
        texture_code: result.texture.0.clone(),
        sources,
        targets,
        losses: LossSummary {
            cycle,
            reconstruction,
        },
    };
    let summary_path = out_dir.join("summary.json");
    std::fs::write(
        &summary_path,
        format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )
    .with_context(|| format!("writing {}", summary_path.display()))?;
    println!("wrote {}", summary_path.display());
    Ok(())
}
