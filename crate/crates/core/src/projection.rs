//! Detector-plane images. A projection stores one or more channels of f32
//! data in channel-major `[channel][row][col]` order, tagged with the gantry
//! angle it was acquired or synthesized at.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fileio;

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub angle_deg: f64,
    pub data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionHeader {
    schema: u32,
    kind: String,
    rows: usize,
    cols: usize,
    channels: usize,
    angle_deg: f64,
    dtype: String,
    endianness: String,
}

impl Projection {
    pub fn new(
        rows: usize,
        cols: usize,
        channels: usize,
        angle_deg: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "projection shape must be positive, got {channels}x{rows}x{cols}"
            )));
        }
        if !angle_deg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite angle {angle_deg}"
            )));
        }
        if data.len() != rows * cols * channels {
            return Err(Error::ShapeMismatch(format!(
                "projection data has {} values, shape {channels}x{rows}x{cols} needs {}",
                data.len(),
                rows * cols * channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite pixel {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Projection {
            rows,
            cols,
            channels,
            angle_deg,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, channels: usize, angle_deg: f64) -> Result<Self> {
        Projection::new(
            rows,
            cols,
            channels,
            angle_deg,
            vec![0.0; rows * cols * channels],
        )
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.rows + row) * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, channel: usize, row: usize, col: usize) -> &mut f32 {
        &mut self.data[(channel * self.rows + row) * self.cols + col]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.rows * self.cols;
        &mut self.data[c * n..(c + 1) * n]
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

    /// Min-max normalize the whole image to [0, 1]. A constant image maps to
    /// all zeros rather than dividing by the zero range.
    pub fn normalized_unit(&self) -> Projection {
        let (lo, hi) = self.min_max();
        let range = (hi - lo) as f64;
        let data = if range > 0.0 {
            self.data
                .iter()
                .map(|&v| ((v - lo) as f64 / range) as f32)
                .collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Projection { data, ..*self }
    }

    /// Write `<base>.json` + `<base>.raw` (little-endian f32).
    pub fn save(&self, path: &Path) -> Result<()> {
        let (json_path, raw_path) = fileio::sidecar_paths(path);
        let header = ProjectionHeader {
            schema: fileio::SCHEMA_VERSION,
            kind: "projection".to_string(),
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            angle_deg: self.angle_deg,
            dtype: fileio::DTYPE_F32.to_string(),
            endianness: fileio::ENDIAN_LITTLE.to_string(),
        };
        fileio::write_json(&json_path, &header)?;
        fileio::write_raw_f32(&raw_path, &self.data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (json_path, raw_path) = fileio::sidecar_paths(path);
        let value = fileio::read_json_value(&json_path)?;
        fileio::check_schema(&json_path, &value, "projection")?;
        let header: ProjectionHeader =
            serde_json::from_value(value).map_err(|e| Error::json(&json_path, e))?;
        let expected = header
            .rows
            .checked_mul(header.cols)
            .and_then(|n| n.checked_mul(header.channels))
            .ok_or_else(|| Error::format(&json_path, "projection shape overflows"))?;
        let data = fileio::read_raw_f32(&raw_path, expected)?;
        fileio::check_finite(&raw_path, &data)?;
        Projection::new(
            header.rows,
            header.cols,
            header.channels,
            header.angle_deg,
            data,
        )
    }

    /// Export channel 0 as a 16-bit binary PGM (P5, maxval 65535, big-endian
    /// samples), min-max normalized over the whole image first. Row 0 is
    /// written first.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let unit = self.normalized_unit();
        let mut bytes = format!("P5\n{} {}\n65535\n", self.cols, self.rows).into_bytes();
        for &v in unit.channel(0) {
            let q = (v as f64 * 65535.0).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let mut p = Projection::zeros(2, 3, 2, 0.0).unwrap();
        *p.at_mut(1, 0, 2) = 5.0;
        assert_eq!(p.data[6 + 2], 5.0);
        assert_eq!(p.channel(1)[2], 5.0);
        assert_eq!(p.at(1, 0, 2), 5.0);
    }

    #[test]
    fn new_validates_shape_angle_and_data() {
        assert!(Projection::new(0, 2, 1, 0.0, vec![]).is_err());
        assert!(Projection::new(2, 2, 1, f64::NAN, vec![0.0; 4]).is_err());
        assert!(Projection::new(2, 2, 1, 0.0, vec![0.0; 5]).is_err());
        assert!(Projection::new(2, 2, 1, 0.0, vec![0.0, 1.0, f32::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn save_load_roundtrip_keeps_angle_and_bits() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("proj");
        let data: Vec<f32> = (0..12).map(|i| (i as f32).sin()).collect();
        let p = Projection::new(2, 3, 2, 33.5, data).unwrap();
        p.save(&base).unwrap();
        let r = Projection::load(&base).unwrap();
        assert_eq!(r, p);

        let text = std::fs::read_to_string(base.with_extension("json")).unwrap();
        let h: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(h["kind"], "projection");
        assert_eq!(h["angle_deg"], 33.5);
        assert_eq!(h["channels"], 2);
    }

    #[test]
    fn normalized_unit_oracle() {
        let p = Projection::new(1, 3, 1, 0.0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.normalized_unit().data, vec![0.0, 0.5, 1.0]);
        // Constant images normalize to zeros by definition.
        let c = Projection::new(1, 3, 1, 0.0, vec![4.0; 3]).unwrap();
        assert_eq!(c.normalized_unit().data, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn pgm_bytes_are_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let p = Projection::new(2, 2, 1, 0.0, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        p.write_pgm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // 0.25 * 65535 = 16383.75 -> 16384; 0.5 * 65535 = 32767.5 -> 32768.
        let mut expect = b"P5\n2 2\n65535\n".to_vec();
        for v in [0u16, 16384, 32768, 65535] {
            expect.extend_from_slice(&v.to_be_bytes());
        }
        assert_eq!(bytes, expect);
    }
}
