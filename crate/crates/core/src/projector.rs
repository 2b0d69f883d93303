//! Matched forward/back-projection operator pair.
//!
//! The forward projector is ray-driven: for each detector pixel it walks the
//! clipped ray in uniform steps of `step` mm, samples the volume with
//! trilinear interpolation at each midpoint `t_near + (k + 1/2) * step`
//! (skipping midpoints past `t_far`), and integrates as `step * sum`.
//! Interpolation clamps to the edge voxels inside the box; outside the box
//! the volume is zero by construction of the clipping.
//!
//! The back-projector applies the exact transpose of that linear map: it
//! walks the same rays with the same interpolation footprints and scatters
//! `pixel * step * weight` into the volume. The pairing is what makes
//! inner-product (adjoint) identities hold to floating-point accuracy, and
//! the test suite checks them.
//!
//! Both directions are parallelized deterministically: work is split into a
//! fixed number of detector-row bands that does not depend on the thread
//! count, and partial results are merged in band order, so outputs are
//! bit-identical for any `RAYON_NUM_THREADS`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ray_through, ConeBeamGeometry};
use crate::grid::GridSpec;
use crate::projection::Projection;
use crate::vec3::Vec3;
use crate::volume::Volume;

/// Multi-channel volume in channel-major `[channel][z][y][x]` order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    pub grid: GridSpec,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(grid: GridSpec, channels: usize, data: Vec<f32>) -> Result<Self> {
        grid.validate()?;
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "feature volume needs at least one channel".into(),
            ));
        }
        if data.len() != grid.num_voxels() * channels {
            return Err(Error::ShapeMismatch(format!(
                "feature volume data has {} values, {} channels on grid {:?} need {}",
                data.len(),
                channels,
                grid.dims,
                grid.num_voxels() * channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(FeatureVolume {
            grid,
            channels,
            data,
        })
    }

    pub fn zeros(grid: GridSpec, channels: usize) -> Result<Self> {
        grid.validate()?;
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "feature volume needs at least one channel".into(),
            ));
        }
        let n = grid.num_voxels() * channels;
        Ok(FeatureVolume {
            grid,
            channels,
            data: vec![0.0; n],
        })
    }

    pub fn from_volume(v: &Volume) -> Self {
        FeatureVolume {
            grid: v.grid,
            channels: 1,
            data: v.data.clone(),
        }
    }

    /// Collapse a single-channel feature volume back into a plain volume.
    pub fn into_volume(self) -> Result<Volume> {
        if self.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "cannot convert {}-channel feature volume into a scalar volume",
                self.channels
            )));
        }
        Volume::new(self.grid, self.data)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.grid.num_voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.grid.num_voxels();
        &mut self.data[c * n..(c + 1) * n]
    }

    fn check(&self) -> Result<()> {
        self.grid.validate()?;
        if self.channels == 0 || self.data.len() != self.grid.num_voxels() * self.channels {
            return Err(Error::ShapeMismatch(
                "feature volume shape is inconsistent".into(),
            ));
        }
        Ok(())
    }
}

/// Default integration step: half the smallest voxel pitch.
pub fn default_step(grid: &GridSpec) -> f64 {
    0.5 * grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Number of detector-row bands for parallel back-projection. Fixed so the
/// merge order (and therefore the result) is independent of thread count.
const BACK_PROJECT_BANDS: usize = 8;

/// Trilinear gather/scatter footprint of one sample point: 8 voxel indices
/// with barycentric weights. Indices are clamped to the grid, so points in
/// the half-voxel margin inside the bounding box read the edge voxels.
#[derive(Clone, Copy)]
struct Footprint {
    idx: [usize; 8],
    w: [f64; 8],
}

struct Sampler {
    origin: [f64; 3],
    inv_spacing: [f64; 3],
    dims: [isize; 3],
    row_stride: usize,
    slice_stride: usize,
}

impl Sampler {
    fn new(grid: &GridSpec) -> Self {
        Sampler {
            origin: grid.origin,
            inv_spacing: [
                1.0 / grid.spacing[0],
                1.0 / grid.spacing[1],
                1.0 / grid.spacing[2],
            ],
            dims: [
                grid.dims[0] as isize,
                grid.dims[1] as isize,
                grid.dims[2] as isize,
            ],
            row_stride: grid.dims[2],
            slice_stride: grid.dims[1] * grid.dims[2],
        }
    }

    #[inline]
    fn split(g: f64, n: isize) -> (usize, usize, f64) {
        let base = g.floor();
        let i = base as isize;
        let lo = i.clamp(0, n - 1) as usize;
        let hi = (i + 1).clamp(0, n - 1) as usize;
        (lo, hi, g - base)
    }

    #[inline]
    fn footprint(&self, p: Vec3) -> Footprint {
        let gz = (p.z - self.origin[0]) * self.inv_spacing[0];
        let gy = (p.y - self.origin[1]) * self.inv_spacing[1];
        let gx = (p.x - self.origin[2]) * self.inv_spacing[2];
        let (z0, z1, fz) = Self::split(gz, self.dims[0]);
        let (y0, y1, fy) = Self::split(gy, self.dims[1]);
        let (x0, x1, fx) = Self::split(gx, self.dims[2]);

        let wz = [1.0 - fz, fz];
        let wy = [1.0 - fy, fy];
        let wx = [1.0 - fx, fx];
        let zs = [z0 * self.slice_stride, z1 * self.slice_stride];
        let ys = [y0 * self.row_stride, y1 * self.row_stride];
        let xs = [x0, x1];

        let mut idx = [0usize; 8];
        let mut w = [0.0f64; 8];
        let mut k = 0;
        for iz in 0..2 {
            for iy in 0..2 {
                for ix in 0..2 {
                    idx[k] = zs[iz] + ys[iy] + xs[ix];
                    w[k] = wz[iz] * wy[iy] * wx[ix];
                    k += 1;
                }
            }
        }
        Footprint { idx, w }
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "integration step must be positive and finite, got {step}"
        )));
    }
    Ok(())
}

fn check_detector(geom: &ConeBeamGeometry, p: &Projection) -> Result<()> {
    if p.rows != geom.det_rows || p.cols != geom.det_cols {
        return Err(Error::ShapeMismatch(format!(
            "projection is {}x{}, geometry detector is {}x{}",
            p.rows, p.cols, geom.det_rows, geom.det_cols
        )));
    }
    Ok(())
}

/// Project a feature volume into a detector image at `angle_deg`.
pub fn forward_project(
    volume: &FeatureVolume,
    geom: &ConeBeamGeometry,
    angle_deg: f64,
    step: f64,
) -> Result<Projection> {
    geom.validate()?;
    volume.check()?;
    check_step(step)?;
    if !angle_deg.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite angle {angle_deg}"
        )));
    }

    let rows = geom.det_rows;
    let cols = geom.det_cols;
    let channels = volume.channels;
    let frame = geom.frame(angle_deg);
    let sampler = Sampler::new(&volume.grid);
    let chans: Vec<&[f32]> = (0..channels).map(|c| volume.channel(c)).collect();

    // One task per detector row, collected in row order: deterministic for
    // any thread count.
    let row_results: Vec<Vec<f32>> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut out = vec![0.0f32; cols * channels];
            let mut acc = vec![0.0f64; channels];
            for col in 0..cols {
                let ray = ray_through(&frame, row, col, &volume.grid);
                if !ray.hits() {
                    continue;
                }
                acc.fill(0.0);
                let n = ((ray.t_far - ray.t_near) / step).ceil() as usize;
                for k in 0..n {
                    let t = ray.t_near + (k as f64 + 0.5) * step;
                    if t > ray.t_far {
                        break;
                    }
                    let fp = sampler.footprint(ray.point_at(t));
                    for (c, ch) in chans.iter().enumerate() {
                        let mut v = 0.0f64;
                        for j in 0..8 {
                            v += fp.w[j] * ch[fp.idx[j]] as f64;
                        }
                        acc[c] += v;
                    }
                }
                for c in 0..channels {
                    out[col * channels + c] = (acc[c] * step) as f32;
                }
            }
            out
        })
        .collect();

    let mut proj = Projection::zeros(rows, cols, channels, angle_deg)?;
    for (row, vals) in row_results.iter().enumerate() {
        for col in 0..cols {
            for c in 0..channels {
                *proj.at_mut(c, row, col) = vals[col * channels + c];
            }
        }
    }
    Ok(proj)
}

/// Smear a detector image back along its rays onto `grid`. Exact transpose
/// of [`forward_project`] at the same angle and step.
pub fn back_project(
    projection: &Projection,
    geom: &ConeBeamGeometry,
    grid: &GridSpec,
    step: f64,
) -> Result<FeatureVolume> {
    geom.validate()?;
    grid.validate()?;
    check_detector(geom, projection)?;
    check_step(step)?;

    let rows = geom.det_rows;
    let cols = geom.det_cols;
    let channels = projection.channels;
    let voxels = grid.num_voxels();
    let frame = geom.frame(projection.angle_deg);
    let sampler = Sampler::new(grid);

    let bands = BACK_PROJECT_BANDS.min(rows);
    let band_rows: Vec<(usize, usize)> = (0..bands)
        .map(|b| (b * rows / bands, (b + 1) * rows / bands))
        .collect();

    let partials: Vec<Vec<f32>> = band_rows
        .into_par_iter()
        .map(|(row_lo, row_hi)| {
            let mut part = vec![0.0f32; voxels * channels];
            let mut pixel_terms = vec![0.0f64; channels];
            for row in row_lo..row_hi {
                for col in 0..cols {
                    let mut any = false;
                    for (c, term) in pixel_terms.iter_mut().enumerate() {
                        *term = projection.at(c, row, col) as f64 * step;
                        any |= *term != 0.0;
                    }
                    if !any {
                        continue;
                    }
                    let ray = ray_through(&frame, row, col, grid);
                    if !ray.hits() {
                        continue;
                    }
                    let n = ((ray.t_far - ray.t_near) / step).ceil() as usize;
                    for k in 0..n {
                        let t = ray.t_near + (k as f64 + 0.5) * step;
                        if t > ray.t_far {
                            break;
                        }
                        let fp = sampler.footprint(ray.point_at(t));
                        for (c, &term) in pixel_terms.iter().enumerate() {
                            if term == 0.0 {
                                continue;
                            }
                            let base = c * voxels;
                            for j in 0..8 {
                                part[base + fp.idx[j]] += (fp.w[j] * term) as f32;
                            }
                        }
                    }
                }
            }
            part
        })
        .collect();

    // Merge bands in their fixed order.
    let mut out = FeatureVolume::zeros(*grid, channels)?;
    for part in &partials {
        for (o, p) in out.data.iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(out)
}

/// Back-project several views and average them voxel-wise.
///
/// Views are accumulated in ascending-angle order with f64 sums, so the
/// result does not depend on the order the projections are passed in.
pub fn back_project_multi(
    projections: &[Projection],
    geom: &ConeBeamGeometry,
    grid: &GridSpec,
    step: f64,
) -> Result<FeatureVolume> {
    let first = projections
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one projection".into()))?;
    let channels = first.channels;
    for p in projections {
        if p.channels != channels {
            return Err(Error::ShapeMismatch(format!(
                "mixed channel counts {} and {channels}",
                p.channels
            )));
        }
        check_detector(geom, p)?;
    }

    let mut order: Vec<usize> = (0..projections.len()).collect();
    order.sort_by(|&a, &b| {
        projections[a]
            .angle_deg
            .total_cmp(&projections[b].angle_deg)
    });

    let mut acc = vec![0.0f64; grid.num_voxels() * channels];
    for &i in &order {
        let bp = back_project(&projections[i], geom, grid, step)?;
        for (a, v) in acc.iter_mut().zip(&bp.data) {
            *a += *v as f64;
        }
    }
    let inv = 1.0 / projections.len() as f64;
    let data = acc.iter().map(|a| (a * inv) as f32).collect();
    FeatureVolume::new(*grid, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(rows: usize, cols: usize) -> ConeBeamGeometry {
        ConeBeamGeometry {
            sad: 500.0,
            sdd: 750.0,
            det_rows: rows,
            det_cols: cols,
            pixel_pitch: [2.0, 2.0],
            det_offset: [0.0, 0.0],
        }
    }

    fn uniform_cube(n: usize, value: f32) -> FeatureVolume {
        let grid = GridSpec::centered([n, n, n], [1.0; 3]).unwrap();
        FeatureVolume::from_volume(&Volume::constant(grid, value).unwrap())
    }

    fn random_feature(grid: GridSpec, channels: usize, rng: &mut ChaCha8Rng) -> FeatureVolume {
        let n = grid.num_voxels() * channels;
        let data: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        FeatureVolume::new(grid, channels, data).unwrap()
    }

    fn random_projection(
        rows: usize,
        cols: usize,
        channels: usize,
        angle: f64,
        rng: &mut ChaCha8Rng,
    ) -> Projection {
        let data: Vec<f32> = (0..rows * cols * channels)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        Projection::new(rows, cols, channels, angle, data).unwrap()
    }

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    fn norm(a: &[f32]) -> f64 {
        dot(a, a).sqrt()
    }

    #[test]
    fn central_ray_integral_matches_chord_through_uniform_cube() {
        // 32 mm cube of value 1: the central ray at angle 0 crosses the full
        // 32 mm chord head-on, so the integral is 32 within half a step.
        let vol = uniform_cube(32, 1.0);
        let g = geom(5, 5);
        for &step in &[0.5f64, 0.37, 1.0] {
            let p = forward_project(&vol, &g, 0.0, step).unwrap();
            let center = p.at(0, 2, 2) as f64;
            assert!(
                (center - 32.0).abs() <= 0.5 * step + 1e-6,
                "step {step}: {center} vs 32"
            );
        }
    }

    #[test]
    fn oblique_central_ray_matches_diagonal_chord() {
        // At 45 degrees the central ray crosses the 32 mm cube along the
        // in-plane diagonal: chord = 32 * sqrt(2).
        let vol = uniform_cube(32, 1.0);
        let g = geom(5, 5);
        let p = forward_project(&vol, &g, 45.0, 0.25).unwrap();
        let center = p.at(0, 2, 2) as f64;
        let chord = 32.0 * 2.0f64.sqrt();
        assert!(
            (center - chord).abs() <= 0.125 + 1e-6,
            "{center} vs {chord}"
        );
    }

    #[test]
    fn integral_scales_linearly_with_attenuation() {
        let vol = uniform_cube(16, 2.0);
        let g = geom(3, 3);
        let p = forward_project(&vol, &g, 10.0, 0.5).unwrap();
        let vol1 = uniform_cube(16, 1.0);
        let p1 = forward_project(&vol1, &g, 10.0, 0.5).unwrap();
        for (a, b) in p.data.iter().zip(&p1.data) {
            // Doubling is exact in floating point.
            assert_eq!(*a, 2.0 * *b);
        }
    }

    #[test]
    fn rays_outside_the_volume_integrate_to_zero() {
        let vol = uniform_cube(8, 1.0);
        // Huge detector: corner pixels miss the 8 mm cube entirely.
        let g = ConeBeamGeometry {
            det_rows: 3,
            det_cols: 3,
            pixel_pitch: [2.0, 500.0],
            ..geom(3, 3)
        };
        let p = forward_project(&vol, &g, 0.0, 0.5).unwrap();
        assert_eq!(p.at(0, 1, 0), 0.0);
        assert_eq!(p.at(0, 1, 2), 0.0);
        assert!(p.at(0, 1, 1) > 0.0);
    }

    #[test]
    fn back_projection_preserves_ray_mass() {
        // One unit pixel smeared along its ray deposits total weight
        // step * samples, which is the chord length within half a step.
        let grid = GridSpec::centered([32, 32, 32], [1.0; 3]).unwrap();
        let g = geom(5, 5);
        let mut p = Projection::zeros(5, 5, 1, 0.0).unwrap();
        *p.at_mut(0, 2, 2) = 1.0;
        let step = 0.5;
        let bp = back_project(&p, &g, &grid, step).unwrap();
        let mass: f64 = bp.data.iter().map(|&v| v as f64).sum();
        assert!((mass - 32.0).abs() <= 0.5 * step + 1e-4, "mass {mass}");
    }

    #[test]
    fn adjoint_identity_holds_for_random_pairs() {
        let grid = GridSpec::centered([16, 16, 16], [1.0; 3]).unwrap();
        let g = geom(24, 32);
        let step = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for trial in 0..10 {
            let angle = rng.random_range(-180.0..180.0);
            let channels = 1 + trial % 2;
            let x = random_feature(grid, channels, &mut rng);
            let y = random_projection(24, 32, channels, angle, &mut rng);
            let ax = forward_project(&x, &g, angle, step).unwrap();
            let aty = back_project(&y, &g, &grid, step).unwrap();
            let lhs = dot(&ax.data, &y.data);
            let rhs = dot(&x.data, &aty.data);
            let denom = norm(&ax.data) * norm(&y.data);
            assert!(denom > 0.0);
            let rel = (lhs - rhs).abs() / denom;
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "worst relative adjoint residual {worst}");
    }

    #[test]
    fn back_project_multi_is_order_invariant_and_averages() {
        let grid = GridSpec::centered([12, 12, 12], [1.0; 3]).unwrap();
        let g = geom(8, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p0 = random_projection(8, 10, 1, 0.0, &mut rng);
        let p90 = random_projection(8, 10, 1, 90.0, &mut rng);

        let ab = back_project_multi(&[p0.clone(), p90.clone()], &g, &grid, 0.5).unwrap();
        let ba = back_project_multi(&[p90.clone(), p0.clone()], &g, &grid, 0.5).unwrap();
        assert_eq!(ab.data, ba.data);

        // Averaging a view with itself reproduces the single-view result.
        let single = back_project(&p0, &g, &grid, 0.5).unwrap();
        let twice = back_project_multi(&[p0.clone(), p0.clone()], &g, &grid, 0.5).unwrap();
        for (a, b) in twice.data.iter().zip(&single.data) {
            assert_eq!(*a, *b);
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let grid = GridSpec::centered([16, 16, 16], [1.0; 3]).unwrap();
        let g = geom(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_feature(grid, 2, &mut rng);
        let a = forward_project(&x, &g, 33.0, 0.5).unwrap();
        let b = forward_project(&x, &g, 33.0, 0.5).unwrap();
        assert_eq!(a.data, b.data);
        let y = random_projection(12, 12, 2, 33.0, &mut rng);
        let u = back_project(&y, &g, &grid, 0.5).unwrap();
        let v = back_project(&y, &g, &grid, 0.5).unwrap();
        assert_eq!(u.data, v.data);
    }

    #[test]
    fn shape_and_argument_errors() {
        let grid = GridSpec::centered([8, 8, 8], [1.0; 3]).unwrap();
        let g = geom(4, 4);
        let vol = uniform_cube(8, 1.0);
        assert!(forward_project(&vol, &g, 0.0, 0.0).is_err());
        assert!(forward_project(&vol, &g, f64::NAN, 0.5).is_err());

        let wrong = Projection::zeros(3, 4, 1, 0.0).unwrap();
        assert!(back_project(&wrong, &g, &grid, 0.5).is_err());
        assert!(back_project_multi(&[], &g, &grid, 0.5).is_err());

        let p1 = Projection::zeros(4, 4, 1, 0.0).unwrap();
        let p2 = Projection::zeros(4, 4, 2, 90.0).unwrap();
        assert!(back_project_multi(&[p1, p2], &g, &grid, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn forward_of_zero_volume_is_zero(angle in -180.0f64..180.0) {
            let vol = FeatureVolume::zeros(GridSpec::centered([8, 8, 8], [1.0; 3]).unwrap(), 1).unwrap();
            let p = forward_project(&vol, &geom(4, 4), angle, 0.5).unwrap();
            prop_assert!(p.data.iter().all(|&v| v == 0.0));
        }

        #[test]
        fn power_of_two_scaling_is_exact(angle in -180.0f64..180.0, seed in 0u64..64) {
            let grid = GridSpec::centered([8, 8, 8], [1.0; 3]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_feature(grid, 1, &mut rng);
            let doubled = FeatureVolume::new(grid, 1, x.data.iter().map(|v| v * 2.0).collect()).unwrap();
            let a = forward_project(&x, &geom(4, 4), angle, 0.5).unwrap();
            let b = forward_project(&doubled, &geom(4, 4), angle, 0.5).unwrap();
            for (p, q) in a.data.iter().zip(&b.data) {
                prop_assert_eq!(*q, 2.0 * *p);
            }
        }
    }
}
