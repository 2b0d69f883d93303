use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Parser;
use projsynth::projector::{default_step, forward_project, FeatureVolume};
use projsynth::{ConeBeamGeometry, Volume};

use crate::util::{angle_tag, check_angles, Normalize};

#[derive(Parser)]
pub struct Args {
    /// Input volume (JSON header plus raw payload).
    #[arg(long)]
    pub volume: PathBuf,
    /// Geometry JSON file.
    #[arg(long)]
    pub geometry: PathBuf,
    /// Projection angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub angles: Vec<f64>,
    /// Directory the projection files are written into.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Ray integration step in mm (default: half the smallest voxel spacing).
    #[arg(long)]
    pub step: Option<f64>,
    /// Output file name prefix.
    #[arg(long, default_value = "proj_")]
    pub prefix: String,
    /// Also write a 16-bit PGM preview per projection.
    #[arg(long)]
    pub pgm: bool,
    /// Treat the volume as Hounsfield units and convert to attenuation first.
    #[arg(long)]
    pub hu: bool,
    /// Water attenuation for the HU conversion, 1/mm.
    #[arg(long, default_value_t = 0.02)]
    pub mu_water: f64,
    /// Resample along z to this spacing in mm before projecting.
    #[arg(long)]
    pub resample_z: Option<f64>,
    /// Resize every z-slice to H,W pixels before projecting.
    #[arg(long, value_delimiter = ',')]
    pub resize_xy: Option<Vec<usize>>,
    /// Pad along z to this many slices before projecting.
    #[arg(long)]
    pub pad_z: Option<usize>,
    /// Fill value for z padding.
    #[arg(long, default_value_t = 0.0)]
    pub pad_fill: f32,
    /// Normalization of the written projections: per_image, none, or scale:<v>.
    #[arg(long, default_value = "none")]
    pub normalize: String,
}

pub fn run(args: &Args) -> Result<()> {
    check_angles("--angles", &args.angles)?;
    let normalize = Normalize::parse(&args.normalize)?;
    let geometry = ConeBeamGeometry::load(&args.geometry)?;

    let mut volume = Volume::load(&args.volume)?;
    if args.hu {
        volume = volume.hu_to_attenuation(args.mu_water)?;
    }
    if let Some(spacing) = args.resample_z {
        volume = volume.resample_z(spacing)?;
    }
    if let Some(hw) = &args.resize_xy {
        let [h, w] = match hw[..] {
            [h, w] => [h, w],
            _ => bail!("--resize-xy needs exactly two comma-separated values"),
        };
        volume = volume.resize_xy(h, w)?;
    }
    if let Some(target_d) = args.pad_z {
        volume = volume.pad_z(target_d, args.pad_fill)?;
    }

    let step = args.step.unwrap_or_else(|| default_step(&volume.grid));
    let features = FeatureVolume::from_volume(&volume);
    std::fs::create_dir_all(&args.out_dir)?;
    for &angle in &args.angles {
        let projection = normalize.apply(&forward_project(&features, &geometry, angle, step)?);
        let path = args
            .out_dir
            .join(format!("{}{}.json", args.prefix, angle_tag(angle)));
        projection.save(&path)?;
        if args.pgm {
            projection.write_pgm(&path.with_extension("pgm"))?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}
