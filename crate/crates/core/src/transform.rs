//! Geometry-preserving view transformation.
//!
//! Source-view feature images are lifted into a shared feature volume by
//! averaged back-projection, optionally refined by a [`Refiner`], and
//! re-projected both at the original source angles (for cycle checks) and at
//! the requested target angles. Because the lift and the re-projection are a
//! matched operator pair on an explicit grid, the spatial relationship
//! between views comes from the acquisition geometry, not from anything
//! learned.

use crate::error::{Error, Result};
use crate::geometry::ConeBeamGeometry;
use crate::grid::GridSpec;
use crate::projection::Projection;
use crate::projector::{back_project_multi, forward_project, FeatureVolume};

/// Volume-to-volume refinement stage. Implementations must preserve the grid
/// and channel count and produce finite values; [`transform_projections`]
/// enforces this contract.
pub trait Refiner: Send + Sync {
    fn refine(&self, features: &FeatureVolume) -> Result<FeatureVolume>;

    /// Registry key describing this stage, echoed into run summaries.
    fn key(&self) -> String;
}

/// Leaves the feature volume untouched.
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn refine(&self, features: &FeatureVolume) -> Result<FeatureVolume> {
        Ok(features.clone())
    }

    fn key(&self) -> String {
        "identity".to_string()
    }
}

/// Separable Gaussian smoothing with standard deviation `sigma_mm`,
/// truncated at three sigmas and renormalized, with edge-clamped borders.
pub struct SmoothingRefiner {
    sigma_mm: f64,
}

impl SmoothingRefiner {
    pub fn new(sigma_mm: f64) -> Result<Self> {
        if !(sigma_mm > 0.0 && sigma_mm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing sigma must be positive and finite, got {sigma_mm}"
            )));
        }
        Ok(SmoothingRefiner { sigma_mm })
    }

    pub fn sigma_mm(&self) -> f64 {
        self.sigma_mm
    }
}

fn gaussian_kernel(sigma_mm: f64, spacing_mm: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_mm / spacing_mm).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let d = i as f64 * spacing_mm;
            (-0.5 * (d / sigma_mm).powi(2)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Convolve along one grid axis (0 = z, 1 = y, 2 = x) with edge clamping.
fn blur_axis(data: &[f32], grid: &GridSpec, axis: usize, kernel: &[f64]) -> Vec<f32> {
    let [d, h, w] = grid.dims;
    let n = grid.dims[axis] as isize;
    let radius = (kernel.len() / 2) as isize;
    let stride = match axis {
        0 => (h * w) as isize,
        1 => w as isize,
        _ => 1,
    };
    let mut out = vec![0.0f32; data.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let along = [z, y, x][axis] as isize;
                let base = grid.index(z, y, x) as isize - along * stride;
                let mut acc = 0.0f64;
                for (j, &kv) in kernel.iter().enumerate() {
                    let i = (along + j as isize - radius).clamp(0, n - 1);
                    acc += kv * data[(base + i * stride) as usize] as f64;
                }
                out[grid.index(z, y, x)] = acc as f32;
            }
        }
    }
    out
}

impl Refiner for SmoothingRefiner {
    fn refine(&self, features: &FeatureVolume) -> Result<FeatureVolume> {
        let grid = features.grid;
        let kernels: Vec<Vec<f64>> = (0..3)
            .map(|a| gaussian_kernel(self.sigma_mm, grid.spacing[a]))
            .collect();
        let mut out = features.clone();
        for c in 0..features.channels {
            let mut ch = features.channel(c).to_vec();
            for (axis, kernel) in kernels.iter().enumerate() {
                ch = blur_axis(&ch, &grid, axis, kernel);
            }
            out.channel_mut(c).copy_from_slice(&ch);
        }
        Ok(out)
    }

    fn key(&self) -> String {
        format!("smoothing:{}", self.sigma_mm)
    }
}

pub struct TransformPlan<'a> {
    pub sources: &'a [Projection],
    pub target_angles: &'a [f64],
    pub geometry: &'a ConeBeamGeometry,
    pub grid: GridSpec,
    pub step: f64,
    pub refiner: &'a dyn Refiner,
}

#[derive(Debug)]
pub struct TransformedViews {
    /// The refined feature volume the views were projected from.
    pub volume: FeatureVolume,
    /// Re-projections at the source angles, in input order.
    pub source_views: Vec<Projection>,
    /// Projections at the requested target angles, in input order.
    pub target_views: Vec<Projection>,
}

fn check_refiner_contract(input: &FeatureVolume, output: &FeatureVolume) -> Result<()> {
    if output.grid != input.grid || output.channels != input.channels {
        return Err(Error::Contract(format!(
            "refiner changed shape: {:?}x{} -> {:?}x{}",
            input.grid.dims, input.channels, output.grid.dims, output.channels
        )));
    }
    if output.data.len() != input.data.len() {
        return Err(Error::Contract("refiner changed data length".into()));
    }
    if let Some(i) = output.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Contract(format!(
            "refiner produced non-finite value {} at flat index {i}",
            output.data[i]
        )));
    }
    Ok(())
}

/// Run the lift / refine / re-project chain.
pub fn transform_projections(plan: &TransformPlan) -> Result<TransformedViews> {
    if plan.sources.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one source projection".into(),
        ));
    }
    for &a in plan.target_angles {
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite target angle {a}"
            )));
        }
    }
    let fused = back_project_multi(plan.sources, plan.geometry, &plan.grid, plan.step)?;
    let refined = plan.refiner.refine(&fused)?;
    check_refiner_contract(&fused, &refined)?;

    let source_views = plan
        .sources
        .iter()
        .map(|p| forward_project(&refined, plan.geometry, p.angle_deg, plan.step))
        .collect::<Result<Vec<_>>>()?;
    let target_views = plan
        .target_angles
        .iter()
        .map(|&a| forward_project(&refined, plan.geometry, a, plan.step))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformedViews {
        volume: refined,
        source_views,
        target_views,
    })
}
