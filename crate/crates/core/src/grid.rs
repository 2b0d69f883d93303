//! Regular voxel grid metadata.
//!
//! `dims`, `spacing` and `origin` are ordered `(z, y, x)` to match the slice
//! layout of volume data. `origin` is the world-space position, in mm, of the
//! center of voxel `(0, 0, 0)`; world points are `(x, y, z)`.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Voxel counts (z, y, x). All at least 1.
    pub dims: [usize; 3],
    /// Voxel pitch (z, y, x) in mm. All positive.
    pub spacing: [f64; 3],
    /// World position of the center of voxel (0, 0, 0), ordered (z, y, x).
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = GridSpec {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose bounding box is centered on the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let mut origin = [0.0; 3];
        for a in 0..3 {
            origin[a] = -0.5 * (dims[a] as f64 - 1.0) * spacing[a];
        }
        GridSpec::new(dims, spacing, origin)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if self.dims[a] == 0 {
                return Err(Error::InvalidArgument(format!(
                    "grid dims must be at least 1, got {:?}",
                    self.dims
                )));
            }
            if !(self.spacing[a] > 0.0 && self.spacing[a].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "grid spacing must be positive and finite, got {:?}",
                    self.spacing
                )));
            }
            if !self.origin[a].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grid origin must be finite, got {:?}",
                    self.origin
                )));
            }
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of voxel (z, y, x) in slice-major order.
    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    /// World position of the center of voxel (z, y, x).
    pub fn voxel_center(&self, z: usize, y: usize, x: usize) -> Vec3 {
        Vec3::new(
            self.origin[2] + x as f64 * self.spacing[2],
            self.origin[1] + y as f64 * self.spacing[1],
            self.origin[0] + z as f64 * self.spacing[0],
        )
    }

    /// Low corner of the grid bounding box (faces of the outermost voxels).
    pub fn world_min(&self) -> Vec3 {
        Vec3::new(
            self.origin[2] - 0.5 * self.spacing[2],
            self.origin[1] - 0.5 * self.spacing[1],
            self.origin[0] - 0.5 * self.spacing[0],
        )
    }

    /// High corner of the grid bounding box.
    pub fn world_max(&self) -> Vec3 {
        Vec3::new(
            self.origin[2] + (self.dims[2] as f64 - 0.5) * self.spacing[2],
            self.origin[1] + (self.dims[1] as f64 - 0.5) * self.spacing[1],
            self.origin[0] + (self.dims[0] as f64 - 0.5) * self.spacing[0],
        )
    }

    /// Physical edge lengths (z, y, x) of the bounding box in mm.
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }
}

impl Serialize for GridSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("GridSpec", 3)?;
        st.serialize_field("dims", &self.dims)?;
        st.serialize_field("spacing", &self.spacing)?;
        st.serialize_field("origin", &self.origin)?;
        st.end()
    }
}

/// `origin` may be omitted in files, in which case the grid is centered.
impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            dims: [usize; 3],
            spacing: [f64; 3],
            #[serde(default)]
            origin: Option<[f64; 3]>,
        }
        let r = Repr::deserialize(d)?;
        let g = match r.origin {
            Some(origin) => GridSpec::new(r.dims, r.spacing, origin),
            None => GridSpec::centered(r.dims, r.spacing),
        };
        g.map_err(serde::de::Error::custom)
    }
}
