use std::path::PathBuf;

use anyhow::Result;
use clap::{ArgGroup, Parser};
use projsynth::{GridSpec, PhantomSpec};

use crate::util::triple;

#[derive(Parser)]
#[command(group(ArgGroup::new("scene").required(true).args(["spec", "seed"])))]
pub struct Args {
    /// Phantom spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seed for a random ellipsoid scene instead of a spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random ellipsoids (with --seed).
    #[arg(long, default_value_t = 3)]
    pub ellipsoids: usize,
    /// Grid size in voxels as z,y,x (with --seed).
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    pub dims: Vec<usize>,
    /// Voxel spacing in mm as z,y,x (with --seed).
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub spacing: Vec<f64>,
    /// Output volume path (JSON header plus raw payload).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the resolved spec here (useful with --seed).
    #[arg(long)]
    pub save_spec: Option<PathBuf>,
}

pub fn run(args: &Args) -> Result<()> {
    let spec = match (&args.spec, args.seed) {
        (Some(path), None) => PhantomSpec::load(path)?,
        (None, Some(seed)) => {
            let grid = GridSpec::centered(
                triple("--dims", &args.dims)?,
                triple("--spacing", &args.spacing)?,
            )?;
            PhantomSpec::random(seed, args.ellipsoids, grid)?
        }
        _ => unreachable!("clap enforces exactly one of --spec/--seed"),
    };
    let volume = spec.rasterize()?;
    volume.save(&args.out)?;
    if let Some(path) = &args.save_spec {
        spec.save(path)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
