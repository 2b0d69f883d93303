//! Circular-orbit cone-beam geometry.
//!
//! The source rotates counter-clockwise about `+z` (seen from above) at
//! distance `sad` from the isocenter; at 0 degrees it sits at `(0, -sad, 0)`
//! and at 90 degrees at `(+sad, 0, 0)`. The flat detector lies `sdd` from the
//! source, perpendicular to the central ray, with its column axis `u`
//! following the rotation (`(1, 0, 0)` at 0 degrees) and its row axis `v`
//! fixed at `(0, 0, 1)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fileio;
use crate::grid::GridSpec;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeBeamGeometry {
    /// Source-to-isocenter distance, mm.
    pub sad: f64,
    /// Source-to-detector distance, mm. Must exceed `sad`.
    pub sdd: f64,
    pub det_rows: usize,
    pub det_cols: usize,
    /// Pixel pitch (row/v, column/u), mm.
    pub pixel_pitch: [f64; 2],
    /// Detector shift (v, u) of the panel center from the central ray, mm.
    #[serde(default)]
    pub det_offset: [f64; 2],
}

/// Half-open ray: points are `origin + t * direction` for `t >= 0`, with
/// `direction` unit length. `t_near..=t_far` is the overlap with a volume;
/// a miss is encoded as `t_near = +inf, t_far = -inf`.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn hits(&self) -> bool {
        self.t_near <= self.t_far
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Precomputed per-angle detector frame: pixel (r, c) has center
/// `pixel00 + u_step * c + v_step * r`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DetectorFrame {
    pub source: Vec3,
    pub pixel00: Vec3,
    pub u_step: Vec3,
    pub v_step: Vec3,
}

impl DetectorFrame {
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> Vec3 {
        self.pixel00 + self.u_step * col as f64 + self.v_step * row as f64
    }
}

impl ConeBeamGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.sad > 0.0 && self.sad.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sad must be positive, got {}",
                self.sad
            )));
        }
        if !(self.sdd > self.sad && self.sdd.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sdd must exceed sad ({}), got {}",
                self.sad, self.sdd
            )));
        }
        if self.det_rows == 0 || self.det_cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "detector must be at least 1x1, got {}x{}",
                self.det_rows, self.det_cols
            )));
        }
        for a in 0..2 {
            if !(self.pixel_pitch[a] > 0.0 && self.pixel_pitch[a].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "pixel pitch must be positive, got {:?}",
                    self.pixel_pitch
                )));
            }
            if !self.det_offset[a].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "detector offset must be finite, got {:?}",
                    self.det_offset
                )));
            }
        }
        Ok(())
    }

    pub fn source_position(&self, angle_deg: f64) -> Vec3 {
        let a = angle_deg.to_radians();
        Vec3::new(self.sad * a.sin(), -self.sad * a.cos(), 0.0)
    }

    /// Column direction of the detector at this angle.
    pub fn u_axis(&self, angle_deg: f64) -> Vec3 {
        let a = angle_deg.to_radians();
        Vec3::new(a.cos(), a.sin(), 0.0)
    }

    /// Row direction of the detector (constant).
    pub fn v_axis(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, 1.0)
    }

    /// Center of the detector panel, before the (v, u) offset is applied.
    pub fn detector_center(&self, angle_deg: f64) -> Vec3 {
        // The panel sits sdd past the source along the central ray, which
        // points from the source through the isocenter.
        self.source_position(angle_deg) * (1.0 - self.sdd / self.sad)
    }

    pub(crate) fn frame(&self, angle_deg: f64) -> DetectorFrame {
        let source = self.source_position(angle_deg);
        let u = self.u_axis(angle_deg);
        let v = self.v_axis();
        let center =
            self.detector_center(angle_deg) + u * self.det_offset[1] + v * self.det_offset[0];
        let u_step = u * self.pixel_pitch[1];
        let v_step = v * self.pixel_pitch[0];
        let pixel00 = center
            + u_step * (-0.5 * (self.det_cols as f64 - 1.0))
            + v_step * (-0.5 * (self.det_rows as f64 - 1.0));
        DetectorFrame {
            source,
            pixel00,
            u_step,
            v_step,
        }
    }

    fn check_pixel(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.det_rows || col >= self.det_cols {
            return Err(Error::InvalidArgument(format!(
                "pixel ({row}, {col}) outside {}x{} detector",
                self.det_rows, self.det_cols
            )));
        }
        Ok(())
    }

    /// World position of the center of detector pixel (row, col).
    pub fn detector_pixel_center(&self, angle_deg: f64, row: usize, col: usize) -> Result<Vec3> {
        self.validate()?;
        self.check_pixel(row, col)?;
        Ok(self.frame(angle_deg).pixel_center(row, col))
    }

    /// Ray from the source through a pixel center, clipped to `grid`'s
    /// bounding box. `t_near` is clamped to 0 so entry points are never
    /// behind the source.
    pub fn pixel_ray(
        &self,
        angle_deg: f64,
        row: usize,
        col: usize,
        grid: &GridSpec,
    ) -> Result<Ray> {
        self.validate()?;
        self.check_pixel(row, col)?;
        grid.validate()?;
        Ok(ray_through(&self.frame(angle_deg), row, col, grid))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut value = serde_json::to_value(self).expect("geometry serializes");
        value["schema"] = serde_json::json!(fileio::SCHEMA_VERSION);
        fileio::write_json(path, &value)
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
        let g: ConeBeamGeometry =
            serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
        g.validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(g)
    }
}

/// Build the clipped ray for one pixel of a prepared frame.
#[inline]
pub(crate) fn ray_through(frame: &DetectorFrame, row: usize, col: usize, grid: &GridSpec) -> Ray {
    let pixel = frame.pixel_center(row, col);
    let direction = (pixel - frame.source).normalized();
    let (t_near, t_far) = clip_to_box(frame.source, direction, grid.world_min(), grid.world_max());
    Ray {
        origin: frame.source,
        direction,
        t_near,
        t_far,
    }
}

/// Slab-method ray/box overlap for t >= 0. Returns `(inf, -inf)` on a miss.
fn clip_to_box(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> (f64, f64) {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = origin.component(axis);
        let d = dir.component(axis);
        let l = lo.component(axis);
        let h = hi.component(axis);
        if d == 0.0 {
            if o < l || o > h {
                return (f64::INFINITY, f64::NEG_INFINITY);
            }
        } else {
            let inv = 1.0 / d;
            let (a, b) = if inv >= 0.0 {
                ((l - o) * inv, (h - o) * inv)
            } else {
                ((h - o) * inv, (l - o) * inv)
            };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    if t0 <= t1 {
        (t0, t1)
    } else {
        (f64::INFINITY, f64::NEG_INFINITY)
    }
}
