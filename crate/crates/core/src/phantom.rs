//! Procedural ellipsoid phantoms: analytic scenes with known geometry used to
//! exercise the projectors and the synthesis pipeline.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fileio;
use crate::grid::GridSpec;
use crate::volume::Volume;

/// Ellipsoid scene element. `center` and `semi_axes` are world-space
/// `(x, y, z)` in mm; `value` is the attenuation the ellipsoid contributes,
/// in 1/mm; `rot_z_deg` spins it counter-clockwise about +z (0 = axis
/// aligned). Overlapping ellipsoids add.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub value: f64,
    #[serde(default)]
    pub rot_z_deg: f64,
}

impl Ellipsoid {
    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !self.center[a].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "ellipsoid center must be finite, got {:?}",
                    self.center
                )));
            }
            if !(self.semi_axes[a] > 0.0 && self.semi_axes[a].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "ellipsoid semi-axes must be positive, got {:?}",
                    self.semi_axes
                )));
            }
        }
        if !self.value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ellipsoid value must be finite, got {}",
                self.value
            )));
        }
        if !self.rot_z_deg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ellipsoid rotation must be finite, got {}",
                self.rot_z_deg
            )));
        }
        Ok(())
    }

    /// True when the world point (x, y, z) lies inside or on the surface.
    /// The point is mapped into the ellipsoid frame by undoing the rotation,
    /// then tested against the axis-aligned quadric.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let px = x - self.center[0];
        let py = y - self.center[1];
        let pz = z - self.center[2];
        let (s, c) = (-self.rot_z_deg.to_radians()).sin_cos();
        let dx = (c * px - s * py) / self.semi_axes[0];
        let dy = (s * px + c * py) / self.semi_axes[1];
        let dz = pz / self.semi_axes[2];
        dx * dx + dy * dy + dz * dz <= 1.0
    }
}

/// Scene description: a grid, a uniform background attenuation, and a list
/// of ellipsoids added on top of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    #[serde(default)]
    pub background: f64,
    pub ellipsoids: Vec<Ellipsoid>,
}

#[derive(Serialize, Deserialize)]
struct PhantomFile {
    schema: u32,
    grid: GridSpec,
    #[serde(default)]
    background: f64,
    ellipsoids: Vec<Ellipsoid>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !self.background.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "phantom background must be finite, got {}",
                self.background
            )));
        }
        for e in &self.ellipsoids {
            e.validate()?;
        }
        Ok(())
    }

    /// Draw `count` ellipsoids from a seeded generator. Centers fall within
    /// the middle half of the grid box, semi-axes span 8-25% of the matching
    /// box extent, and values are soft-tissue-scale attenuations in 1/mm.
    /// The same seed always produces the same spec.
    pub fn random(seed: u64, count: usize, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = grid.world_min();
        let hi = grid.world_max();
        // world_min/max are (x, y, z); extents reorder from the (z, y, x) grid.
        let center = [
            0.5 * (lo.x + hi.x),
            0.5 * (lo.y + hi.y),
            0.5 * (lo.z + hi.z),
        ];
        let ext = grid.extent_mm();
        let extent = [ext[2], ext[1], ext[0]];

        let mut ellipsoids = Vec::with_capacity(count);
        for _ in 0..count {
            let mut c = [0.0; 3];
            let mut s = [0.0; 3];
            for a in 0..3 {
                c[a] = center[a] + rng.random_range(-0.25..0.25) * extent[a];
            }
            for a in 0..3 {
                s[a] = rng.random_range(0.08..0.25) * extent[a];
            }
            let value = rng.random_range(0.004..0.02);
            ellipsoids.push(Ellipsoid {
                center: c,
                semi_axes: s,
                value,
                rot_z_deg: 0.0,
            });
        }
        Ok(PhantomSpec {
            grid,
            background: 0.0,
            ellipsoids,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let file = PhantomFile {
            schema: fileio::SCHEMA_VERSION,
            grid: self.grid,
            background: self.background,
            ellipsoids: self.ellipsoids.clone(),
        };
        fileio::write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value = fileio::read_json_value(path)?;
        let schema = value.get("schema").and_then(|v| v.as_u64());
        if schema != Some(fileio::SCHEMA_VERSION as u64) {
            return Err(Error::format(
                path,
                format!(
                    "unsupported schema {schema:?}, expected {}",
                    fileio::SCHEMA_VERSION
                ),
            ));
        }
        let file: PhantomFile = serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
        let spec = PhantomSpec {
            grid: file.grid,
            background: file.background,
            ellipsoids: file.ellipsoids,
        };
        spec.validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(spec)
    }

    /// Rasterize onto the spec grid: each voxel takes the background plus the
    /// sum of the values of the ellipsoids whose surface or interior contains
    /// its center.
    pub fn rasterize(&self) -> Result<Volume> {
        self.validate()?;
        let [d, h, w] = self.grid.dims;
        let mut out = Volume::zeros(self.grid)?;
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let p = self.grid.voxel_center(z, y, x);
                    let mut acc = self.background;
                    for e in &self.ellipsoids {
                        if e.contains(p.x, p.y, p.z) {
                            acc += e.value;
                        }
                    }
                    if acc != 0.0 {
                        *out.at_mut(z, y, x) = acc as f32;
                    }
                }
            }
        }
        Ok(out)
    }
}
