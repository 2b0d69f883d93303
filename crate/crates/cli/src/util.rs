//! Small helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use projsynth::Projection;

/// Fixed-precision angle string used in output file names, e.g. `30.000`.
pub fn angle_tag(angle_deg: f64) -> String {
    format!("{angle_deg:.3}")
}

/// Rejects angle lists that are empty, non-finite, or collide once formatted
/// into file-name tags.
pub fn check_angles(what: &str, angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        bail!("{what} must list at least one angle");
    }
    for (i, a) in angles.iter().enumerate() {
        if !a.is_finite() {
            bail!("{what}[{i}] is not finite: {a}");
        }
    }
    let mut tags: Vec<String> = angles.iter().map(|&a| angle_tag(a)).collect();
    tags.sort();
    if tags.windows(2).any(|w| w[0] == w[1]) {
        bail!("{what} contains duplicate angles (file names are derived from them)");
    }
    Ok(())
}

/// Interprets a path from a config file relative to the config's directory.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// How projections are normalized before entering the pipeline or being
/// written out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalize {
    /// Min-max rescale each image to [0, 1] (constant images map to zero).
    PerImage,
    /// Leave values as raw line integrals.
    None,
    /// Multiply by a fixed factor.
    Scale(f64),
}

impl Normalize {
    pub fn parse(key: &str) -> Result<Self> {
        match key {
            "per_image" => Ok(Normalize::PerImage),
            "none" => Ok(Normalize::None),
            _ => {
                if let Some(v) = key.strip_prefix("scale:") {
                    let factor: f64 = v
                        .parse()
                        .with_context(|| format!("bad scale factor in normalize key {key:?}"))?;
                    if !(factor.is_finite() && factor > 0.0) {
                        bail!("scale factor must be positive and finite, got {factor}");
                    }
                    Ok(Normalize::Scale(factor))
                } else {
                    bail!("unknown normalize key {key:?} (expected per_image, none, or scale:<v>)");
                }
            }
        }
    }

    pub fn apply(&self, p: &Projection) -> Projection {
        match self {
            Normalize::PerImage => p.normalized_unit(),
            Normalize::None => p.clone(),
            Normalize::Scale(factor) => {
                let data = p.data.iter().map(|&v| (v as f64 * factor) as f32).collect();
                Projection::new(p.rows, p.cols, p.channels, p.angle_deg, data)
                    .expect("scaling a valid projection by a finite factor stays valid")
            }
        }
    }
}

/// Converts a clap-collected list into a fixed triple.
pub fn triple<T: Copy>(what: &str, values: &[T]) -> Result<[T; 3]> {
    match values {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("{what} needs exactly three comma-separated values"),
    }
}
