//! Scalar volumes on regular grids: storage, sidecar file I/O, and the
//! preprocessing operations used to condition CT input (HU conversion, slice
//! resampling, in-plane resizing, z padding).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fileio;
use crate::grid::GridSpec;

/// A dense f32 volume in slice-major `(z, y, x)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub grid: GridSpec,
    pub data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct VolumeHeader {
    schema: u32,
    kind: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
    endianness: String,
}

impl Volume {
    /// Wrap existing data. The length must match the grid and every sample
    /// must be finite.
    pub fn new(grid: GridSpec, data: Vec<f32>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.num_voxels() {
            return Err(Error::ShapeMismatch(format!(
                "volume data has {} values, grid {:?} needs {}",
                data.len(),
                grid.dims,
                grid.num_voxels()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite voxel {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Volume { grid, data })
    }

    pub fn constant(grid: GridSpec, value: f32) -> Result<Self> {
        grid.validate()?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite fill value {value}"
            )));
        }
        let n = grid.num_voxels();
        Ok(Volume {
            grid,
            data: vec![value; n],
        })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        Volume::constant(grid, 0.0)
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.grid.index(z, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, z: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[self.grid.index(z, y, x)]
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Write `<base>.json` + `<base>.raw` (little-endian f32).
    pub fn save(&self, path: &Path) -> Result<()> {
        let (json_path, raw_path) = fileio::sidecar_paths(path);
        let header = VolumeHeader {
            schema: fileio::SCHEMA_VERSION,
            kind: "volume".to_string(),
            dims: self.grid.dims,
            spacing: self.grid.spacing,
            origin: self.grid.origin,
            dtype: fileio::DTYPE_F32.to_string(),
            endianness: fileio::ENDIAN_LITTLE.to_string(),
        };
        fileio::write_json(&json_path, &header)?;
        fileio::write_raw_f32(&raw_path, &self.data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (json_path, raw_path) = fileio::sidecar_paths(path);
        let value = fileio::read_json_value(&json_path)?;
        fileio::check_schema(&json_path, &value, "volume")?;
        let header: VolumeHeader =
            serde_json::from_value(value).map_err(|e| Error::json(&json_path, e))?;
        let grid = GridSpec::new(header.dims, header.spacing, header.origin)
            .map_err(|e| Error::format(&json_path, e.to_string()))?;
        let data = fileio::read_raw_f32(&raw_path, grid.num_voxels())?;
        fileio::check_finite(&raw_path, &data)?;
        Ok(Volume { grid, data })
    }

    /// Map Hounsfield units to linear attenuation in 1/mm:
    /// `mu = mu_water * (1 + hu / 1000)`, clamped at zero so values below
    /// -1000 HU (air) cannot go negative.
    pub fn hu_to_attenuation(&self, mu_water_per_mm: f64) -> Result<Volume> {
        if !(mu_water_per_mm > 0.0 && mu_water_per_mm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu_water must be positive and finite, got {mu_water_per_mm}"
            )));
        }
        let data = self
            .data
            .iter()
            .map(|&hu| (mu_water_per_mm * (1.0 + hu as f64 / 1000.0)).max(0.0) as f32)
            .collect();
        Ok(Volume {
            grid: self.grid,
            data,
        })
    }

    /// Resample along z to a new slice spacing with linear interpolation.
    /// The slice count becomes `round(dims.z * spacing.z / target)` and the
    /// origin shifts so the physical extent stays centered on the original.
    pub fn resample_z(&self, target_spacing: f64) -> Result<Volume> {
        if !(target_spacing > 0.0 && target_spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "target z spacing must be positive and finite, got {target_spacing}"
            )));
        }
        let [d, h, w] = self.grid.dims;
        let sz = self.grid.spacing[0];
        let new_d = (d as f64 * sz / target_spacing).round() as usize;
        if new_d == 0 {
            return Err(Error::InvalidArgument(format!(
                "target z spacing {target_spacing} leaves no slices (extent {} mm)",
                d as f64 * sz
            )));
        }
        let scale = target_spacing / sz;
        let taps = linear_taps(new_d, scale, d);

        let slice_len = h * w;
        let mut data = vec![0.0f32; new_d * slice_len];
        for (k, &(i0, i1, f)) in taps.iter().enumerate() {
            let lo = &self.data[i0 * slice_len..(i0 + 1) * slice_len];
            let hi = &self.data[i1 * slice_len..(i1 + 1) * slice_len];
            let out = &mut data[k * slice_len..(k + 1) * slice_len];
            for j in 0..slice_len {
                out[j] = (lo[j] as f64 * (1.0 - f) + hi[j] as f64 * f) as f32;
            }
        }

        let grid = GridSpec::new(
            [new_d, h, w],
            [target_spacing, self.grid.spacing[1], self.grid.spacing[2]],
            [
                self.grid.origin[0] + 0.5 * (target_spacing - sz),
                self.grid.origin[1],
                self.grid.origin[2],
            ],
        )?;
        Ok(Volume { grid, data })
    }

    /// Resize every slice to `(new_h, new_w)` with bilinear interpolation.
    /// In-plane spacing rescales so the physical extent is preserved.
    pub fn resize_xy(&self, new_h: usize, new_w: usize) -> Result<Volume> {
        if new_h == 0 || new_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "target slice shape must be at least 1x1, got {new_h}x{new_w}"
            )));
        }
        let [d, h, w] = self.grid.dims;
        let scale_y = h as f64 / new_h as f64;
        let scale_x = w as f64 / new_w as f64;
        let taps_y = linear_taps(new_h, scale_y, h);
        let taps_x = linear_taps(new_w, scale_x, w);

        let mut data = vec![0.0f32; d * new_h * new_w];
        for z in 0..d {
            let src = &self.data[z * h * w..(z + 1) * h * w];
            let dst = &mut data[z * new_h * new_w..(z + 1) * new_h * new_w];
            for (iy, &(y0, y1, fy)) in taps_y.iter().enumerate() {
                for (ix, &(x0, x1, fx)) in taps_x.iter().enumerate() {
                    let v00 = src[y0 * w + x0] as f64;
                    let v01 = src[y0 * w + x1] as f64;
                    let v10 = src[y1 * w + x0] as f64;
                    let v11 = src[y1 * w + x1] as f64;
                    let top = v00 * (1.0 - fx) + v01 * fx;
                    let bot = v10 * (1.0 - fx) + v11 * fx;
                    dst[iy * new_w + ix] = (top * (1.0 - fy) + bot * fy) as f32;
                }
            }
        }

        let new_sy = self.grid.spacing[1] * scale_y;
        let new_sx = self.grid.spacing[2] * scale_x;
        let grid = GridSpec::new(
            [d, new_h, new_w],
            [self.grid.spacing[0], new_sy, new_sx],
            [
                self.grid.origin[0],
                self.grid.origin[1] + 0.5 * (new_sy - self.grid.spacing[1]),
                self.grid.origin[2] + 0.5 * (new_sx - self.grid.spacing[2]),
            ],
        )?;
        Ok(Volume { grid, data })
    }

    /// Pad symmetrically along z to `target_d` slices of `fill`; when the
    /// padding is odd the extra slice goes on the high-z side.
    pub fn pad_z(&self, target_d: usize, fill: f32) -> Result<Volume> {
        let [d, h, w] = self.grid.dims;
        if target_d < d {
            return Err(Error::InvalidArgument(format!(
                "pad target {target_d} is smaller than current slice count {d}"
            )));
        }
        if !fill.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite fill value {fill}"
            )));
        }
        let low = (target_d - d) / 2;
        let slice_len = h * w;
        let mut data = vec![fill; target_d * slice_len];
        data[low * slice_len..(low + d) * slice_len].copy_from_slice(&self.data);

        let grid = GridSpec::new(
            [target_d, h, w],
            self.grid.spacing,
            [
                self.grid.origin[0] - low as f64 * self.grid.spacing[0],
                self.grid.origin[1],
                self.grid.origin[2],
            ],
        )?;
        Ok(Volume { grid, data })
    }
}

/// Interpolation taps under the area convention: output sample `i` reads
/// input position `(i + 1/2) * scale - 1/2`, clamped to the edges.
fn linear_taps(n_out: usize, scale: f64, n_in: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let pos = (i as f64 + 0.5) * scale - 0.5;
            let base = pos.floor();
            let frac = pos - base;
            let i0 = (base as isize).clamp(0, n_in as isize - 1) as usize;
            let i1 = (base as isize + 1).clamp(0, n_in as isize - 1) as usize;
            (i0, i1, frac)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_volume(dims: [usize; 3]) -> Volume {
        // v(z, y, x) = 100 z + 10 y + x: linear in every axis, so linear
        // interpolation reproduces it exactly at any sample position.
        let grid = GridSpec::centered(dims, [1.0; 3]).unwrap();
        let mut v = Volume::zeros(grid).unwrap();
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    *v.at_mut(z, y, x) = (100 * z + 10 * y + x) as f32;
                }
            }
        }
        v
    }

    #[test]
    fn new_checks_length_and_finiteness() {
        let g = GridSpec::centered([2, 2, 2], [1.0; 3]).unwrap();
        assert!(Volume::new(g, vec![0.0; 7]).is_err());
        assert!(Volume::new(g, vec![0.0; 9]).is_err());
        let mut data = vec![0.0; 8];
        data[3] = f32::NAN;
        assert!(Volume::new(g, data).is_err());
        assert!(Volume::new(g, vec![1.5; 8]).is_ok());
    }

    #[test]
    fn save_load_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("vol");
        let grid = GridSpec::new([2, 3, 4], [1.5, 1.0, 0.5], [-1.0, 0.0, 2.0]).unwrap();
        let data: Vec<f32> = (0..24).map(|i| (i as f32) * 0.125 - 1.0).collect();
        let v = Volume::new(grid, data).unwrap();
        v.save(&base).unwrap();

        assert!(base.with_extension("json").exists());
        assert!(base.with_extension("raw").exists());

        let r = Volume::load(&base).unwrap();
        assert_eq!(r.grid, v.grid);
        assert_eq!(r.data, v.data);

        // Either sidecar path names the same pair.
        let r2 = Volume::load(&base.with_extension("raw")).unwrap();
        assert_eq!(r2.data, v.data);
    }

    #[test]
    fn header_fields_match_format() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("v");
        let v = ramp_volume([2, 2, 2]);
        v.save(&base).unwrap();
        let text = std::fs::read_to_string(base.with_extension("json")).unwrap();
        let h: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(h["schema"], 1);
        assert_eq!(h["kind"], "volume");
        assert_eq!(h["dims"], serde_json::json!([2, 2, 2]));
        assert_eq!(h["dtype"], "f32");
        assert_eq!(h["endianness"], "little");
    }

    #[test]
    fn load_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("v");
        let v = ramp_volume([2, 2, 2]);
        v.save(&base).unwrap();

        // Truncated payload.
        let raw = base.with_extension("raw");
        let bytes = std::fs::read(&raw).unwrap();
        std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Volume::load(&base), Err(Error::Format { .. })));
        std::fs::write(&raw, &bytes).unwrap();

        // Wrong schema version.
        let json = base.with_extension("json");
        let text = std::fs::read_to_string(&json).unwrap();
        std::fs::write(&json, text.replace("\"schema\": 1", "\"schema\": 2")).unwrap();
        assert!(matches!(Volume::load(&base), Err(Error::Format { .. })));

        // NaN in the payload.
        v.save(&base).unwrap();
        let mut bytes = std::fs::read(&raw).unwrap();
        bytes[..4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&raw, &bytes).unwrap();
        assert!(matches!(Volume::load(&base), Err(Error::Format { .. })));
    }

    #[test]
    fn hu_conversion_matches_hand_values() {
        let g = GridSpec::centered([1, 1, 5], [1.0; 3]).unwrap();
        let v = Volume::new(g, vec![-1500.0, -1000.0, -500.0, 0.0, 1000.0]).unwrap();
        let mu = v.hu_to_attenuation(0.02).unwrap();
        // mu_water * (1 + hu/1000), clamped at zero for the -1500 HU sample.
        assert_eq!(mu.data, vec![0.0, 0.0, 0.01, 0.02, 0.04]);
        assert!(v.hu_to_attenuation(0.0).is_err());
        assert!(v.hu_to_attenuation(f64::NAN).is_err());
    }

    #[test]
    fn resample_z_identity_is_exact() {
        let v = ramp_volume([4, 3, 2]);
        let r = v.resample_z(1.0).unwrap();
        assert_eq!(r.grid, v.grid);
        assert_eq!(r.data, v.data);
    }

    #[test]
    fn resample_z_halving_matches_hand_oracle() {
        // Column values by slice: [0, 100, 200, 300]. Downsampling 1 mm -> 2 mm
        // reads positions 0.5 and 2.5, giving [50, 250].
        let v = ramp_volume([4, 2, 2]);
        let r = v.resample_z(2.0).unwrap();
        assert_eq!(r.grid.dims, [2, 2, 2]);
        assert_eq!(r.grid.spacing[0], 2.0);
        // Original origin z = -1.5; new extent stays centered: -1.0.
        assert_eq!(r.grid.origin[0], -1.0);
        assert_eq!(r.at(0, 0, 0), 50.0);
        assert_eq!(r.at(1, 0, 0), 250.0);
        assert_eq!(r.at(1, 1, 1), 261.0);
    }

    #[test]
    fn resample_z_upsampling_clamps_edges() {
        // 2 slices at 2 mm -> 1 mm: positions -0.25, 0.25, 0.75, 1.25; the
        // outer two clamp to the edge slices.
        let grid = GridSpec::centered([2, 1, 1], [2.0, 1.0, 1.0]).unwrap();
        let v = Volume::new(grid, vec![10.0, 30.0]).unwrap();
        let r = v.resample_z(1.0).unwrap();
        assert_eq!(r.grid.dims[0], 4);
        assert_eq!(r.data, vec![10.0, 15.0, 25.0, 30.0]);
        assert_eq!(r.grid.origin[0], -1.5);
    }

    #[test]
    fn resize_xy_matches_hand_oracle() {
        // Slice v(y, x) = 10 y + x on 4x4. Halving reads positions 0.5 and
        // 2.5 per axis; the ramp is linear so outputs hit it exactly.
        let v = ramp_volume([1, 4, 4]);
        let r = v.resize_xy(2, 2).unwrap();
        assert_eq!(r.grid.dims, [1, 2, 2]);
        assert_eq!(r.grid.spacing, [1.0, 2.0, 2.0]);
        assert_eq!(r.at(0, 0, 0), 5.0 + 0.5);
        assert_eq!(r.at(0, 0, 1), 5.0 + 2.5);
        assert_eq!(r.at(0, 1, 0), 25.0 + 0.5);
        assert_eq!(r.at(0, 1, 1), 25.0 + 2.5);
        // Physical extent is preserved: 4 voxels at 1 mm == 2 voxels at 2 mm.
        assert_eq!(v.grid.extent_mm(), r.grid.extent_mm());
    }

    #[test]
    fn pad_z_splits_padding_low_high() {
        let grid = GridSpec::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let v = Volume::new(grid, vec![1.0, 2.0]).unwrap();
        let p = v.pad_z(5, -7.0).unwrap();
        // 3 extra slices: 1 below, 2 above.
        assert_eq!(p.data, vec![-7.0, 1.0, 2.0, -7.0, -7.0]);
        assert_eq!(p.grid.origin[0], -1.0);
        assert!(v.pad_z(1, 0.0).is_err());
        assert!(v.pad_z(4, f32::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn resample_preserves_value_bounds(
            d in 1usize..6, h in 1usize..4, w in 1usize..4,
            target in 0.3f64..4.0,
            seed in 0u64..1000,
        ) {
            let grid = GridSpec::centered([d, h, w], [1.0; 3]).unwrap();
            let mut data = Vec::with_capacity(d * h * w);
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for _ in 0..d * h * w {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                data.push(((s >> 40) as f32) / (1 << 24) as f32 * 2.0 - 1.0);
            }
            let v = Volume::new(grid, data).unwrap();
            let (lo, hi) = v.min_max();
            if let Ok(r) = v.resample_z(target) {
                let (rlo, rhi) = r.min_max();
                // Linear interpolation with edge clamping is a convex
                // combination of inputs.
                prop_assert!(rlo >= lo - 1e-4 && rhi <= hi + 1e-4);
                prop_assert_eq!(r.grid.spacing[0], target);
            }
        }

        #[test]
        fn pad_then_interior_matches(d in 1usize..5, extra in 0usize..5) {
            let v = ramp_volume([d, 2, 2]);
            let p = v.pad_z(d + extra, 0.5).unwrap();
            let low = extra / 2;
            for z in 0..d {
                for y in 0..2 {
                    for x in 0..2 {
                        prop_assert_eq!(p.at(z + low, y, x), v.at(z, y, x));
                    }
                }
            }
            // Padded world positions of original slices are unchanged.
            let zc_old = v.grid.voxel_center(0, 0, 0).z;
            let zc_new = p.grid.voxel_center(low, 0, 0).z;
            prop_assert!((zc_old - zc_new).abs() < 1e-12);
        }
    }
}
