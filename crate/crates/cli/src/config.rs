//! Run configuration for `synthesize` and `bench`: a versioned JSON document
//! naming the geometry, the pipeline stages, the inputs (either a phantom to
//! render or projection files to load), and the target views.
//!
//! Relative paths inside the config are resolved against the directory the
//! config file lives in.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use projsynth::projector::{default_step, forward_project, FeatureVolume};
use projsynth::synthesis::{
    encoder_from_key, generator_from_key, refiner_from_key, Encoder, Generator,
};
use projsynth::transform::Refiner;
use projsynth::{ConeBeamGeometry, GridSpec, LossWeights, PhantomSpec, Projection};
use serde::Deserialize;

use crate::util::{check_angles, resolve, Normalize};

pub const RUN_SCHEMA: u32 = 1;

fn default_encoder() -> String {
    "identity".to_string()
}

fn default_refiner() -> String {
    "identity".to_string()
}

fn default_generator() -> String {
    "passthrough".to_string()
}

fn default_normalize() -> String {
    "per_image".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Geometry JSON file.
    pub geometry: PathBuf,
    #[serde(default = "default_encoder")]
    pub encoder: String,
    #[serde(default = "default_refiner")]
    pub refiner: String,
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default)]
    pub weights: LossWeights,
    /// Ray integration step in mm; defaults to half the smallest grid spacing.
    #[serde(default)]
    pub step_mm: Option<f64>,
    /// Feature-volume grid. Required unless a phantom spec file supplies one.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub inputs: Inputs,
    pub target_angles: Vec<f64>,
    /// Reference projections for the target angles. When omitted and the
    /// inputs come from a phantom, references are rendered from the phantom.
    #[serde(default)]
    pub truth: Vec<TruthEntry>,
    /// `per_image`, `none`, or `scale:<v>`; applied to every input and
    /// reference projection.
    #[serde(default = "default_normalize")]
    pub normalize: String,
    pub output_dir: PathBuf,
    /// Also write 16-bit PGM previews of every projection written.
    #[serde(default)]
    pub pgm: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default)]
    pub phantom: Option<PhantomInput>,
    /// Angles to render the phantom at; must be empty for projection inputs
    /// (their angles come from the files or are overridden per entry).
    #[serde(default)]
    pub source_angles: Vec<f64>,
    #[serde(default)]
    pub projections: Vec<ProjectionInput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomInput {
    /// Phantom spec JSON file; mutually exclusive with `seed`.
    #[serde(default)]
    pub spec: Option<PathBuf>,
    /// Seed for a random ellipsoid scene on the run grid.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Number of random ellipsoids (seed form only).
    #[serde(default = "default_ellipsoids")]
    pub ellipsoids: usize,
}

fn default_ellipsoids() -> usize {
    3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionInput {
    pub path: PathBuf,
    /// Overrides the angle stored in the file.
    #[serde(default)]
    pub angle: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthEntry {
    pub angle: f64,
    pub path: PathBuf,
}

impl RunConfig {
    /// Loads and structurally validates a config; returns it with the
    /// directory its relative paths resolve against.
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading run config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing run config {}", path.display()))?;
        if cfg.schema != RUN_SCHEMA {
            bail!(
                "run config {} has schema {}, expected {RUN_SCHEMA}",
                path.display(),
                cfg.schema
            );
        }
        cfg.validate()?;
        let base = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok((cfg, base))
    }

    fn validate(&self) -> Result<()> {
        check_angles("target_angles", &self.target_angles)?;
        Normalize::parse(&self.normalize)?;
        self.weights.validate()?;
        if let Some(step) = self.step_mm {
            if !(step.is_finite() && step > 0.0) {
                bail!("step_mm must be positive and finite, got {step}");
            }
        }

        let has_phantom = self.inputs.phantom.is_some();
        let has_projections = !self.inputs.projections.is_empty();
        if has_phantom == has_projections {
            bail!("inputs must give exactly one of `phantom` or `projections`");
        }
        if let Some(ph) = &self.inputs.phantom {
            match (&ph.spec, ph.seed) {
                (Some(_), Some(_)) | (None, None) => {
                    bail!("phantom input needs exactly one of `spec` or `seed`")
                }
                (None, Some(_)) if self.grid.is_none() => {
                    bail!("seed-based phantom input requires a `grid`")
                }
                _ => {}
            }
            check_angles("source_angles", &self.inputs.source_angles)?;
        } else {
            if !self.inputs.source_angles.is_empty() {
                bail!("source_angles applies to phantom inputs only; projection entries carry their own angles");
            }
            if self.grid.is_none() {
                bail!("projection inputs require a `grid` for the feature volume");
            }
        }

        let mut truth_tags: Vec<String> = Vec::new();
        for t in &self.truth {
            if !t.angle.is_finite() {
                bail!("truth angle is not finite: {}", t.angle);
            }
            let tag = crate::util::angle_tag(t.angle);
            if !self
                .target_angles
                .iter()
                .any(|&a| crate::util::angle_tag(a) == tag)
            {
                bail!("truth angle {} does not match any target angle", t.angle);
            }
            if truth_tags.contains(&tag) {
                bail!("duplicate truth entry for angle {}", t.angle);
            }
            truth_tags.push(tag);
        }
        Ok(())
    }
}

/// Everything `synthesize` and `bench` need, with files loaded, phantoms
/// rendered, and stages constructed.
pub struct PreparedRun {
    pub geometry: ConeBeamGeometry,
    pub grid: GridSpec,
    pub step: f64,
    /// Normalized source projections, ordered as configured.
    pub sources: Vec<Projection>,
    /// Normalized reference projections as (angle, image), in target order.
    pub truth: Vec<(f64, Projection)>,
    pub encoder: Box<dyn Encoder>,
    pub refiner: Box<dyn Refiner>,
    pub generator: Box<dyn Generator>,
}

pub fn prepare(cfg: &RunConfig, base: &Path) -> Result<PreparedRun> {
    let geometry = ConeBeamGeometry::load(&resolve(base, &cfg.geometry))?;
    let normalize = Normalize::parse(&cfg.normalize)?;

    let encoder = encoder_from_key(&cfg.encoder)?;
    let refiner = refiner_from_key(&cfg.refiner)?;
    let generator = generator_from_key(&cfg.generator)?;

    // Phantom inputs are rendered on the phantom's own grid; the run grid
    // (defaulting to that same grid) hosts the lifted feature volume.
    let mut grid = cfg.grid;
    let mut sources = Vec::new();
    let mut auto_truth: Vec<(f64, Projection)> = Vec::new();

    if let Some(ph) = &cfg.inputs.phantom {
        let spec = match (&ph.spec, ph.seed) {
            (Some(path), None) => PhantomSpec::load(&resolve(base, path))?,
            (None, Some(seed)) => {
                let g = grid.expect("validated: seed-based phantom has a grid");
                PhantomSpec::random(seed, ph.ellipsoids, g)?
            }
            _ => unreachable!("validated: exactly one of spec/seed"),
        };
        grid = grid.or(Some(spec.grid));
        let volume = FeatureVolume::from_volume(&spec.rasterize()?);
        let step = cfg
            .step_mm
            .unwrap_or_else(|| default_step(&grid.expect("set above")));
        for &angle in &cfg.inputs.source_angles {
            let p = forward_project(&volume, &geometry, angle, step)?;
            sources.push(normalize.apply(&p));
        }
        if cfg.truth.is_empty() {
            for &angle in &cfg.target_angles {
                let p = forward_project(&volume, &geometry, angle, step)?;
                auto_truth.push((angle, normalize.apply(&p)));
            }
        }
    } else {
        for entry in &cfg.inputs.projections {
            let mut p = Projection::load(&resolve(base, &entry.path))?;
            if let Some(angle) = entry.angle {
                if !angle.is_finite() {
                    bail!("projection angle override is not finite: {angle}");
                }
                p = Projection::new(p.rows, p.cols, p.channels, angle, p.data)?;
            }
            sources.push(normalize.apply(&p));
        }
        let angles: Vec<f64> = sources.iter().map(|p| p.angle_deg).collect();
        check_angles("source angles (from projection files)", &angles)?;
    }

    let grid = grid.expect("validated: grid present or derived from the phantom spec");
    let step = cfg.step_mm.unwrap_or_else(|| default_step(&grid));

    let mut truth = Vec::new();
    if cfg.truth.is_empty() {
        truth = auto_truth;
    } else {
        for entry in &cfg.truth {
            let p = Projection::load(&resolve(base, &entry.path))?;
            truth.push((entry.angle, normalize.apply(&p)));
        }
    }

    Ok(PreparedRun {
        geometry,
        grid,
        step,
        sources,
        truth,
        encoder,
        refiner,
        generator,
    })
}
